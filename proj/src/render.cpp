#include "ppm/render.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ppm/errors.hpp"

namespace ppm {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(0, out.data() + crc_start, static_cast<uInt>(4 + payload.size()));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

// Two-segment diverging colormap: blue -> near-white -> red.
void diverging_color(double t, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  static constexpr double kLow[3] = {59, 76, 192};
  static constexpr double kMid[3] = {221, 221, 221};
  static constexpr double kHigh[3] = {180, 4, 38};
  double c[3];
  if (t < 0.5) {
    const double u = t * 2.0;
    for (int q = 0; q < 3; ++q) c[q] = kLow[q] + u * (kMid[q] - kLow[q]);
  } else {
    const double u = (t - 0.5) * 2.0;
    for (int q = 0; q < 3; ++q) c[q] = kMid[q] + u * (kHigh[q] - kMid[q]);
  }
  r = static_cast<std::uint8_t>(std::lround(c[0]));
  g = static_cast<std::uint8_t>(std::lround(c[1]));
  b = static_cast<std::uint8_t>(std::lround(c[2]));
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb) {
  if (width < 1 || height < 1 ||
      rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw ValidationError("PNG pixel buffer does not match width*height*3");

  // Raw scanlines, each preceded by filter byte 0.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const auto* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + 3 * width);
  }

  uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(comp_size);
  if (compress2(compressed.data(), &comp_size, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("PNG compression failed");
  compressed.resize(comp_size);

  std::vector<std::uint8_t> out;
  static constexpr std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), kSignature, kSignature + 8);

  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::filesystem::path> render_orthoslices(
    const ScalarVolume& vol, const std::filesystem::path& prefix) {
  vol.validate();
  std::vector<double> values(vol.data.begin(), vol.data.end());
  const double lo = percentile(values, 0.02);
  const double hi = percentile(values, 0.98);
  const double range = hi > lo ? hi - lo : 1.0;

  const auto shade = [&](float v, std::uint8_t* px) {
    const double t = std::clamp((v - lo) / range, 0.0, 1.0);
    diverging_color(t, px[0], px[1], px[2]);
  };

  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  std::vector<std::filesystem::path> outputs;
  if (!prefix.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(prefix.parent_path(), ec);
  }

  {  // axial: z mid-slice, x across, y down
    std::vector<std::uint8_t> img(static_cast<std::size_t>(nx) * ny * 3);
    const int k = nz / 2;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        shade(vol.at(i, j, k), &img[(static_cast<std::size_t>(j) * nx + i) * 3]);
    const auto p = prefix.string() + "_axial.png";
    write_png_rgb(p, nx, ny, img);
    outputs.emplace_back(p);
  }
  {  // coronal: y mid-slice, x across, z down
    std::vector<std::uint8_t> img(static_cast<std::size_t>(nx) * nz * 3);
    const int j = ny / 2;
    for (int k = 0; k < nz; ++k)
      for (int i = 0; i < nx; ++i)
        shade(vol.at(i, j, k), &img[(static_cast<std::size_t>(k) * nx + i) * 3]);
    const auto p = prefix.string() + "_coronal.png";
    write_png_rgb(p, nx, nz, img);
    outputs.emplace_back(p);
  }
  {  // sagittal: x mid-slice, y across, z down
    std::vector<std::uint8_t> img(static_cast<std::size_t>(ny) * nz * 3);
    const int i = nx / 2;
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        shade(vol.at(i, j, k), &img[(static_cast<std::size_t>(k) * ny + j) * 3]);
    const auto p = prefix.string() + "_sagittal.png";
    write_png_rgb(p, ny, nz, img);
    outputs.emplace_back(p);
  }
  return outputs;
}

}  // namespace ppm
