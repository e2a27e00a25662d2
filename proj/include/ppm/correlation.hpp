#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ppm/volume.hpp"

namespace ppm {

struct SpearmanResult {
  double rho;
  double p;  // two-sided, Student-t approximation with n-2 dof
};

/// Average (tie-corrected) ranks, 1-based.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Spearman rank correlation: Pearson correlation of the average-rank
/// vectors. Requires equal lengths, n >= 3, finite values; throws on zero
/// rank variance (undefined correlation).
SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Spearman for paired scalars.
SpearmanResult correlate_scalar(const std::vector<std::pair<double, double>>& pairs);

struct ComparisonReport {
  double rho_raw;
  double rho_smoothed;
  double p_value;  // p of the smoothed correlation
  std::size_t n_voxels;
  double fwhm_used;
};

/// Rank-correlates a predicted map against a reference map over the masked
/// voxels (whole volume when mask is null), raw and after smoothing both
/// volumes with the given FWHM in voxels. fwhm_voxels <= 0 disables
/// smoothing (the smoothed figures then equal the raw ones).
ComparisonReport compare_maps(const ScalarVolume& ppm, const ScalarVolume& reference,
                              const BinaryMask* mask = nullptr,
                              double fwhm_voxels = 10.0);

}  // namespace ppm
