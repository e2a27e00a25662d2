#pragma once

#include <filesystem>

#include "ppm/volume.hpp"

namespace ppm {

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz, detected by content).
/// Accepted datatypes: uint8, int16, int32, float32, float64; intensities are
/// converted to float32 via scl_slope/scl_inter when scl_slope != 0. Affine
/// precedence: sform if sform_code > 0, else qform, else diagonal(pixdim).
ScalarVolume load_nifti(const std::filesystem::path& path);

/// Writes a float32 single-file NIfTI-1 volume; gzip-compressed when the path
/// ends in ".gz". The sform carries the affine. Output bytes are fully
/// deterministic (the gzip header carries no timestamp).
void save_nifti(const ScalarVolume& vol, const std::filesystem::path& path);

}  // namespace ppm
