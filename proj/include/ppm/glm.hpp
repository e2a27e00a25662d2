#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppm/volume.hpp"

namespace ppm {

/// One subject: a perfusion-map path, a symptom sub-score, and confounds.
struct CohortRow {
  std::string subject_id;
  std::string ppm_path;
  double score = 0.0;  // >= 0
  double age = 0.0;
  int gender = 0;  // coded {0,1}
};

struct CohortTable {
  std::vector<CohortRow> rows;

  /// Unique subject ids, no missing values, score >= 0, gender in {0,1},
  /// n >= number of regressors + 2.
  void validate() const;
};

/// Cohort CSV with header columns subject_id,ppm_path,score,age,gender
/// (any column order).
CohortTable load_cohort_csv(const std::filesystem::path& path);

/// n x 4 design with columns [intercept, score, age, gender] and a length-4
/// contrast (default [0,1,0,0]).
struct DesignMatrix {
  Eigen::MatrixXd X;
  Eigen::Vector4d contrast{0.0, 1.0, 0.0, 0.0};

  void validate() const;  // full column rank, all-ones first column
};

DesignMatrix make_design(const CohortTable& cohort);

/// Voxelwise estimates in solver (double) precision; the fit's contract
/// tolerances (1e-8..1e-10) are tighter than float32 resolution. Float
/// volumes are derived for file output.
struct FitResult {
  GridGeometry grid;
  Eigen::MatrixXd beta;  // p x V
  Eigen::VectorXd t;     // V, contrast t-statistic per voxel

  ScalarVolume beta_volume(int column) const;
  ScalarVolume t_volume() const;
};

/// Voxelwise ordinary least squares; (X^T X)^-1 is computed once and reused.
FitResult fit_voxelwise(const std::vector<ScalarVolume>& volumes,
                        const DesignMatrix& design);

/// Freedman-Lane max-statistic permutation: score residuals are permuted
/// against the nuisance regressors (the zero-contrast columns), the max
/// voxel t is recorded per permutation (identity permutation included), and
/// the (1-alpha) quantile of the max-t samples is returned. `two_sided`
/// uses |t|. Deterministic per rng_seed.
double permutation_fwe(const std::vector<ScalarVolume>& volumes,
                       const DesignMatrix& design, int n_perm = 1000,
                       double alpha = 0.05, std::uint64_t rng_seed = 0,
                       bool two_sided = false);

/// Full max-t distribution behind permutation_fwe (first entry = identity
/// permutation).
std::vector<double> permutation_max_t(const std::vector<ScalarVolume>& volumes,
                                      const DesignMatrix& design, int n_perm,
                                      std::uint64_t rng_seed, bool two_sided);

struct Cluster {
  std::size_t size;
  double peak_t;
  std::array<int, 3> peak;
};

struct ClusterResult {
  std::vector<Cluster> clusters;  // sorted by peak t descending
  BinaryMask significant_mask;
};

/// 26-connected components of {t >= threshold} with size >= min_extent.
ClusterResult cluster_extent(const ScalarVolume& t_map, double threshold,
                             int min_extent = 100);

void save_clusters_csv(const ClusterResult& result, const std::filesystem::path& path);

}  // namespace ppm
