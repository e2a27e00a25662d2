#include "ppm/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ppm/errors.hpp"

namespace ppm {

Affine identity_affine() {
  Affine a{};
  for (int r = 0; r < 4; ++r) a[r][r] = 1.0;
  return a;
}

Affine diagonal_affine(const std::array<double, 3>& spacing) {
  Affine a = identity_affine();
  for (int r = 0; r < 3; ++r) a[r][r] = spacing[r];
  return a;
}

namespace {

// Returns an empty string when compatible, otherwise a description of the
// first differing field with both values.
std::string first_mismatch(const GridGeometry& a, const GridGeometry& b) {
  std::ostringstream os;
  for (int d = 0; d < 3; ++d) {
    if (a.dims[d] != b.dims[d]) {
      os << "dims[" << d << "]: " << a.dims[d] << " vs " << b.dims[d];
      return os.str();
    }
  }
  for (int d = 0; d < 3; ++d) {
    if (std::abs(a.spacing[d] - b.spacing[d]) > kSpacingTol) {
      os << "spacing[" << d << "]: " << a.spacing[d] << " vs " << b.spacing[d];
      return os.str();
    }
  }
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (std::abs(a.affine[r][c] - b.affine[r][c]) > kAffineTol) {
        os << "affine[" << r << "][" << c << "]: " << a.affine[r][c] << " vs "
           << b.affine[r][c];
        return os.str();
      }
    }
  }
  return {};
}

}  // namespace

bool compatible(const GridGeometry& a, const GridGeometry& b) {
  return first_mismatch(a, b).empty();
}

void check_compatible(const GridGeometry& a, const GridGeometry& b) {
  const std::string m = first_mismatch(a, b);
  if (!m.empty()) throw ValidationError("incompatible grids: " + m);
}

ScalarVolume ScalarVolume::filled(const std::array<int, 3>& dims, float value,
                                  const std::array<double, 3>& spacing) {
  ScalarVolume v;
  v.dims = dims;
  v.spacing = spacing;
  v.affine = diagonal_affine(spacing);
  v.data.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], value);
  return v;
}

void ScalarVolume::validate() const {
  for (int d = 0; d < 3; ++d) {
    if (dims[d] < 1) throw ValidationError("volume dims must be >= 1");
    if (!(spacing[d] > 0.0)) throw ValidationError("voxel spacing must be > 0");
  }
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (data.size() != n)
    throw ValidationError("data length " + std::to_string(data.size()) +
                          " does not match dims product " + std::to_string(n));
  std::size_t bad = 0;
  for (float v : data)
    if (!std::isfinite(v)) ++bad;
  if (bad > 0)
    throw ValidationError("volume contains " + std::to_string(bad) +
                          " non-finite voxel(s)");
}

BinaryMask BinaryMask::zeros(const std::array<int, 3>& dims,
                             const std::array<double, 3>& spacing) {
  BinaryMask m;
  m.dims = dims;
  m.spacing = spacing;
  m.affine = diagonal_affine(spacing);
  m.data.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
  return m;
}

std::size_t BinaryMask::count() const {
  std::size_t c = 0;
  for (std::uint8_t v : data) c += (v != 0);
  return c;
}

void BinaryMask::validate() const {
  for (int d = 0; d < 3; ++d) {
    if (dims[d] < 1) throw ValidationError("mask dims must be >= 1");
    if (!(spacing[d] > 0.0)) throw ValidationError("voxel spacing must be > 0");
  }
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (data.size() != n)
    throw ValidationError("mask length does not match dims product");
  for (std::uint8_t v : data)
    if (v > 1) throw ValidationError("mask values must be exactly 0 or 1");
}

ScalarVolume to_volume(const BinaryMask& mask) {
  ScalarVolume v;
  v.dims = mask.dims;
  v.spacing = mask.spacing;
  v.affine = mask.affine;
  v.data.resize(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    v.data[i] = mask.data[i] ? 1.0f : 0.0f;
  return v;
}

BinaryMask to_mask(const ScalarVolume& vol) {
  BinaryMask m;
  m.dims = vol.dims;
  m.spacing = vol.spacing;
  m.affine = vol.affine;
  m.data.resize(vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const float v = vol.data[i];
    if (std::abs(v) <= 1e-6f)
      m.data[i] = 0;
    else if (std::abs(v - 1.0f) <= 1e-6f)
      m.data[i] = 1;
    else
      throw ValidationError("volume is not binary: found value " +
                            std::to_string(v));
  }
  return m;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of empty input");
  if (!(q >= 0.0 && q <= 1.0))
    throw ValidationError("percentile fraction must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double p = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(p);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = p - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double x = static_cast<double>(t);
    w[t + radius] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += w[t + radius];
  }
  for (double& v : w) v /= sum;
  return w;
}

// One separable pass along `axis` with replicate boundaries.
void smooth_axis(const ScalarVolume& in, ScalarVolume& out, int axis,
                 const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int nx = in.dims[0], ny = in.dims[1], nz = in.dims[2];
  const int n_axis = in.dims[axis];
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        int pos[3] = {i, j, k};
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          int q[3] = {pos[0], pos[1], pos[2]};
          q[axis] = std::clamp(pos[axis] + t, 0, n_axis - 1);
          acc += kernel[t + radius] * in.at(q[0], q[1], q[2]);
        }
        out.at(i, j, k) = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace

ScalarVolume gaussian_smooth(const ScalarVolume& vol, double fwhm_voxels) {
  if (!(fwhm_voxels > 0.0))
    throw ValidationError("smoothing FWHM must be > 0 voxels");
  const double sigma = fwhm_voxels / std::sqrt(8.0 * std::log(2.0));
  return gaussian_smooth_sigma(vol, {sigma, sigma, sigma});
}

ScalarVolume gaussian_smooth_sigma(const ScalarVolume& vol,
                                   const std::array<double, 3>& sigma_voxels) {
  ScalarVolume cur = vol;
  ScalarVolume tmp = vol;
  for (int axis = 0; axis < 3; ++axis) {
    if (!(sigma_voxels[axis] > 0.0)) continue;
    const std::vector<double> kernel = gaussian_kernel(sigma_voxels[axis]);
    smooth_axis(cur, tmp, axis, kernel);
    std::swap(cur, tmp);
  }
  return cur;
}

}  // namespace ppm
