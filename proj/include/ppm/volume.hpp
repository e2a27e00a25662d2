#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace ppm {

/// 4x4 voxel-to-world matrix, row major.
using Affine = std::array<std::array<double, 4>, 4>;

Affine identity_affine();

/// Affine with the given spacing on the diagonal and zero translation.
Affine diagonal_affine(const std::array<double, 3>& spacing);

/// Grid compatibility tolerances: spacing within 1e-4 mm, affine entries
/// within 1e-3. Dims must match exactly.
inline constexpr double kSpacingTol = 1e-4;
inline constexpr double kAffineTol = 1e-3;

struct GridGeometry {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine = identity_affine();
};

bool compatible(const GridGeometry& a, const GridGeometry& b);

/// Throws ValidationError naming the first differing field and both values.
void check_compatible(const GridGeometry& a, const GridGeometry& b);

/// 3D scalar grid, x-fastest ordering, float32 intensities.
struct ScalarVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine = identity_affine();
  std::vector<float> data;

  static ScalarVolume filled(const std::array<int, 3>& dims, float value,
                             const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

  std::size_t size() const { return data.size(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) +
                static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }

  float at(int i, int j, int k) const { return data[index(i, j, k)]; }
  float& at(int i, int j, int k) { return data[index(i, j, k)]; }

  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && i < dims[0] && j >= 0 && j < dims[1] && k >= 0 && k < dims[2];
  }

  GridGeometry geometry() const { return GridGeometry{dims, spacing, affine}; }

  /// Checks the type invariants: data length == nx*ny*nz, dims >= 1,
  /// spacing > 0, all intensities finite. Throws ValidationError.
  void validate() const;
};

/// Same geometry as ScalarVolume, values restricted to {0,1}.
struct BinaryMask {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine = identity_affine();
  std::vector<std::uint8_t> data;

  static BinaryMask zeros(const std::array<int, 3>& dims,
                          const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

  std::size_t size() const { return data.size(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) +
                static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }

  std::uint8_t at(int i, int j, int k) const { return data[index(i, j, k)]; }
  std::uint8_t& at(int i, int j, int k) { return data[index(i, j, k)]; }

  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && i < dims[0] && j >= 0 && j < dims[1] && k >= 0 && k < dims[2];
  }

  GridGeometry geometry() const { return GridGeometry{dims, spacing, affine}; }

  /// Number of foreground voxels.
  std::size_t count() const;

  void validate() const;
};

/// Mask as a 0/1 float volume (for NIfTI output).
ScalarVolume to_volume(const BinaryMask& mask);

/// Volume to mask; every value must be exactly 0 or 1 (within 1e-6).
BinaryMask to_mask(const ScalarVolume& vol);

/// Linear-interpolation percentile: sort ascending, position p = q*(n-1),
/// return v[floor(p)] + frac(p)*(v[ceil(p)] - v[floor(p)]). q in [0,1].
double percentile(std::vector<double> values, double q);

/// Separable Gaussian smoothing. fwhm is in voxels; sigma = fwhm/sqrt(8 ln 2),
/// kernel truncated at 4*sigma and renormalized, replicate boundaries.
ScalarVolume gaussian_smooth(const ScalarVolume& vol, double fwhm_voxels);

/// Same, with an explicit per-axis sigma in voxels (sigma <= 0 skips the axis).
ScalarVolume gaussian_smooth_sigma(const ScalarVolume& vol,
                                   const std::array<double, 3>& sigma_voxels);

}  // namespace ppm
