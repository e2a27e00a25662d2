#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ppm/volume.hpp"

namespace ppm {

/// Minimal RGB8 PNG writer (zlib-compressed, filter 0 scanlines).
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

/// Orthogonal mid-slice renders (<prefix>_axial.png, <prefix>_coronal.png,
/// <prefix>_sagittal.png) with a diverging blue-white-red colormap over the
/// robust 2nd..98th percentile intensity range. Diagnostic output only.
std::vector<std::filesystem::path> render_orthoslices(
    const ScalarVolume& vol, const std::filesystem::path& prefix);

}  // namespace ppm
