#include "ppm/correlation.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppm/errors.hpp"

namespace ppm {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Tied run [i..j]: everyone gets the mean of the 1-based positions.
    const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t q = i; q <= j; ++q) ranks[order[q]] = r;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ValidationError("spearman inputs differ in length: " +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  const std::size_t n = a.size();
  if (n < 3) throw ValidationError("spearman requires n >= 3");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw ValidationError("spearman inputs must be finite");

  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);

  const double mean = 0.5 * static_cast<double>(n + 1);  // mean of 1..n, ties preserve it
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = ra[i] - mean;
    const double dy = rb[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw ValidationError("spearman correlation undefined: zero rank variance");

  double rho = sxy / std::sqrt(sxx * syy);
  rho = std::clamp(rho, -1.0, 1.0);

  double p;
  const double one_minus_r2 = 1.0 - rho * rho;
  if (one_minus_r2 <= 0.0) {
    p = 0.0;
  } else {
    const double dof = static_cast<double>(n - 2);
    const double t = rho * std::sqrt(dof / one_minus_r2);
    const boost::math::students_t dist(dof);
    p = 2.0 * boost::math::cdf(dist, -std::abs(t));
  }
  return {rho, p};
}

SpearmanResult correlate_scalar(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> x(pairs.size()), y(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    x[i] = pairs[i].first;
    y[i] = pairs[i].second;
  }
  return spearman(x, y);
}

namespace {

void gather(const ScalarVolume& vol, const BinaryMask* mask, std::vector<double>& out) {
  out.clear();
  if (mask == nullptr) {
    out.assign(vol.data.begin(), vol.data.end());
    return;
  }
  for (std::size_t i = 0; i < vol.data.size(); ++i)
    if (mask->data[i]) out.push_back(vol.data[i]);
}

}  // namespace

ComparisonReport compare_maps(const ScalarVolume& ppm, const ScalarVolume& reference,
                              const BinaryMask* mask, double fwhm_voxels) {
  check_compatible(ppm.geometry(), reference.geometry());
  if (mask != nullptr) {
    check_compatible(ppm.geometry(), mask->geometry());
    if (mask->count() == 0) throw ValidationError("comparison mask is empty");
  }

  std::vector<double> a, b;
  gather(ppm, mask, a);
  gather(reference, mask, b);
  const SpearmanResult raw = spearman(a, b);

  ComparisonReport report;
  report.rho_raw = raw.rho;
  report.n_voxels = a.size();

  if (fwhm_voxels > 0.0) {
    const ScalarVolume ppm_s = gaussian_smooth(ppm, fwhm_voxels);
    const ScalarVolume ref_s = gaussian_smooth(reference, fwhm_voxels);
    gather(ppm_s, mask, a);
    gather(ref_s, mask, b);
    const SpearmanResult smoothed = spearman(a, b);
    report.rho_smoothed = smoothed.rho;
    report.p_value = smoothed.p;
    report.fwhm_used = fwhm_voxels;
  } else {
    report.rho_smoothed = raw.rho;
    report.p_value = raw.p;
    report.fwhm_used = 0.0;
  }
  return report;
}

}  // namespace ppm
