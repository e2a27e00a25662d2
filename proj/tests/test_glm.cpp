#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "ppm/errors.hpp"
#include "ppm/glm.hpp"

using ppm::BinaryMask;
using ppm::CohortTable;
using ppm::DesignMatrix;
using ppm::ScalarVolume;

namespace {

// Random but valid design: score, age, gender per subject.
DesignMatrix random_design(oracle::TestRng& rng, int n) {
  DesignMatrix d;
  d.X.resize(n, 4);
  for (int r = 0; r < n; ++r) {
    d.X(r, 0) = 1.0;
    d.X(r, 1) = rng.uniform(0.0, 4.0);
    d.X(r, 2) = rng.uniform(40.0, 90.0);
    d.X(r, 3) = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
  return d;
}

std::vector<ScalarVolume> noise_volumes(oracle::TestRng& rng, int n,
                                        const std::array<int, 3>& dims) {
  std::vector<ScalarVolume> out;
  for (int s = 0; s < n; ++s) {
    ScalarVolume v = ScalarVolume::filled(dims, 0.0f);
    for (auto& x : v.data) x = static_cast<float>(rng.gaussian());
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

TEST_CASE("noiseless linear data is recovered exactly") {
  oracle::TestRng rng(1);
  const int n = 12;
  DesignMatrix d = random_design(rng, n);
  // quarter-integer scores keep y = 2*score + 3 exactly representable in the
  // float32 volumes, so the fit must interpolate to solver precision
  for (int s = 0; s < n; ++s) d.X(s, 1) = 0.25 * rng.uniform_int(17);
  std::vector<ScalarVolume> vols;
  for (int s = 0; s < n; ++s)
    vols.push_back(ScalarVolume::filled({3, 3, 3},
                                        static_cast<float>(2.0 * d.X(s, 1) + 3.0)));
  const auto fit = ppm::fit_voxelwise(vols, d);
  for (Eigen::Index v = 0; v < fit.beta.cols(); ++v) {
    CHECK(fit.beta(1, v) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.beta(0, v) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(std::abs(fit.beta(2, v)) < 1e-9);
    CHECK(std::abs(fit.beta(3, v)) < 1e-9);
  }
}

TEST_CASE("single-voxel fit matches a hand-rolled normal-equations solve") {
  oracle::TestRng rng(2);
  const int n = 20;
  DesignMatrix d = random_design(rng, n);
  std::vector<ScalarVolume> vols;
  std::vector<double> y(n);
  for (int s = 0; s < n; ++s) {
    // round through float32 first: the fit consumes volume data
    y[s] = static_cast<float>(rng.uniform(-5.0, 5.0));
    vols.push_back(ScalarVolume::filled({1, 1, 1}, static_cast<float>(y[s])));
  }
  const auto fit = ppm::fit_voxelwise(vols, d);

  // Dense normal equations with Gaussian elimination, written independently.
  double xtx[4][4] = {};
  double xty[4] = {};
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) xtx[a][b] += d.X(s, a) * d.X(s, b);
      xty[a] += d.X(s, a) * y[s];
    }
  // augmented elimination
  double aug[4][5];
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) aug[a][b] = xtx[a][b];
    aug[a][4] = xty[a];
  }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
    for (int c = 0; c < 5; ++c) std::swap(aug[pivot][c], aug[col][c]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = aug[r][col] / aug[col][col];
      for (int c = 0; c < 5; ++c) aug[r][c] -= f * aug[col][c];
    }
  }
  double beta[4];
  for (int a = 0; a < 4; ++a) beta[a] = aug[a][4] / aug[a][a];

  for (int a = 0; a < 4; ++a)
    CHECK(fit.beta(a, 0) == doctest::Approx(beta[a]).epsilon(1e-10));

  // t statistic from the same hand solve
  double rss = 0.0;
  for (int s = 0; s < n; ++s) {
    double fitv = 0.0;
    for (int a = 0; a < 4; ++a) fitv += d.X(s, a) * beta[a];
    rss += (y[s] - fitv) * (y[s] - fitv);
  }
  // c^T (XtX)^-1 c with c = e_score: solve XtX w = e1
  double aug2[4][5];
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) aug2[a][b] = xtx[a][b];
    aug2[a][4] = a == 1 ? 1.0 : 0.0;
  }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(aug2[r][col]) > std::abs(aug2[pivot][col])) pivot = r;
    for (int c = 0; c < 5; ++c) std::swap(aug2[pivot][c], aug2[col][c]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = aug2[r][col] / aug2[col][col];
      for (int c = 0; c < 5; ++c) aug2[r][c] -= f * aug2[col][c];
    }
  }
  const double c_xtxinv_c = aug2[1][4] / aug2[1][1];
  const double t_expected = beta[1] / std::sqrt(rss / (n - 4) * c_xtxinv_c);
  CHECK(fit.t(0) == doctest::Approx(t_expected).epsilon(1e-8));
}

TEST_CASE("null t statistics match the Student-t tail rate") {
  // n = 50 subjects, 10000 simulated voxels; dof = 46, |t| > 2.013 has
  // probability ~5%.
  oracle::TestRng rng(3);
  const int n = 50;
  DesignMatrix d = random_design(rng, n);
  const auto vols = noise_volumes(rng, n, {25, 20, 20});  // 10k voxels
  const auto fit = ppm::fit_voxelwise(vols, d);
  int exceed = 0;
  for (Eigen::Index v = 0; v < fit.t.size(); ++v)
    if (std::abs(fit.t(v)) > 2.013) ++exceed;
  const double rate = static_cast<double>(exceed) / static_cast<double>(fit.t.size());
  CHECK(rate > 0.03);
  CHECK(rate < 0.07);
}

TEST_CASE("shifting the score column moves only the intercept") {
  oracle::TestRng rng(4);
  const int n = 16;
  DesignMatrix d = random_design(rng, n);
  const auto vols = noise_volumes(rng, n, {4, 4, 4});
  const auto base = ppm::fit_voxelwise(vols, d);

  DesignMatrix shifted = d;
  for (int r = 0; r < n; ++r) shifted.X(r, 1) += 7.5;
  const auto moved = ppm::fit_voxelwise(vols, shifted);
  for (Eigen::Index v = 0; v < base.t.size(); ++v) {
    CHECK(moved.beta(1, v) == doctest::Approx(base.beta(1, v)).epsilon(1e-8));
    CHECK(moved.t(v) == doctest::Approx(base.t(v)).epsilon(1e-8));
  }
}

TEST_CASE("scaling the score column scales beta inversely, t unchanged") {
  oracle::TestRng rng(5);
  const int n = 16;
  DesignMatrix d = random_design(rng, n);
  const auto vols = noise_volumes(rng, n, {4, 4, 4});
  const auto base = ppm::fit_voxelwise(vols, d);

  const double c = 4.0;
  DesignMatrix scaled = d;
  for (int r = 0; r < n; ++r) scaled.X(r, 1) *= c;
  const auto out = ppm::fit_voxelwise(vols, scaled);
  for (Eigen::Index v = 0; v < base.t.size(); ++v) {
    CHECK(out.beta(1, v) == doctest::Approx(base.beta(1, v) / c).epsilon(1e-8));
    CHECK(out.t(v) == doctest::Approx(base.t(v)).epsilon(1e-8));
  }
}

TEST_CASE("alpha = 1 returns the minimum of the max-t samples") {
  oracle::TestRng rng(6);
  const int n = 14;
  DesignMatrix d = random_design(rng, n);
  const auto vols = noise_volumes(rng, n, {4, 4, 4});
  const auto samples = ppm::permutation_max_t(vols, d, 100, 77, false);
  const double threshold = ppm::permutation_fwe(vols, d, 100, 1.0, 77, false);
  CHECK(threshold == doctest::Approx(*std::min_element(samples.begin(), samples.end())));
  // identity permutation comes first: its max-t is the observed statistic
  const auto fit = ppm::fit_voxelwise(vols, d);
  CHECK(samples[0] == doctest::Approx(fit.t.maxCoeff()).epsilon(1e-12));
}

TEST_CASE("permutation threshold is deterministic per seed") {
  oracle::TestRng rng(7);
  const int n = 12;
  DesignMatrix d = random_design(rng, n);
  const auto vols = noise_volumes(rng, n, {3, 3, 3});
  const double a = ppm::permutation_fwe(vols, d, 120, 0.05, 9001, false);
  const double b = ppm::permutation_fwe(vols, d, 120, 0.05, 9001, false);
  const double c = ppm::permutation_fwe(vols, d, 120, 0.05, 9002, false);
  CHECK(a == b);
  CHECK(a != c);  // different seed, different draw
}

TEST_CASE("null-data FWE rejection rate is near alpha (quick check)") {
  // 60 runs at n_perm = 120; the acceptance suite runs the full calibration.
  int rejections = 0;
  const int runs = 60;
  for (int run = 0; run < runs; ++run) {
    oracle::TestRng rng(1000 + run);
    const int n = 16;
    DesignMatrix d = random_design(rng, n);
    const auto vols = noise_volumes(rng, n, {5, 5, 5});
    const double thr =
        ppm::permutation_fwe(vols, d, 120, 0.05, 5000 + run, false);
    const auto fit = ppm::fit_voxelwise(vols, d);
    rejections += fit.t.maxCoeff() >= thr;
  }
  const double rate = static_cast<double>(rejections) / runs;
  CHECK(rate < 0.20);  // loose: full calibration happens in acceptance
}

TEST_CASE("a planted effect is detected and localized") {
  oracle::TestRng rng(8);
  const int n = 40;
  DesignMatrix d = random_design(rng, n);
  std::vector<ScalarVolume> vols;
  for (int s = 0; s < n; ++s) {
    ScalarVolume v = ScalarVolume::filled({8, 8, 8}, 0.0f);
    for (auto& x : v.data) x = static_cast<float>(rng.gaussian());
    // strong effect in a 3^3 corner region
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i)
          v.at(i, j, k) += static_cast<float>(5.0 * d.X(s, 1));
    vols.push_back(std::move(v));
  }
  const double thr = ppm::permutation_fwe(vols, d, 150, 0.05, 31337, false);
  const auto fit = ppm::fit_voxelwise(vols, d);
  const auto clusters = ppm::cluster_extent(fit.t_volume(), thr, 20);
  REQUIRE(clusters.clusters.size() >= 1);
  bool overlap = false;
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i)
        if (clusters.significant_mask.at(i, j, k)) overlap = true;
  CHECK(overlap);
}

TEST_CASE("cluster_extent trivial and oracle-counted cases") {
  ScalarVolume t = ScalarVolume::filled({20, 20, 10}, 0.0f);

  SUBCASE("empty suprathreshold set") {
    const auto r = ppm::cluster_extent(t, 1.0, 10);
    CHECK(r.clusters.empty());
    CHECK(r.significant_mask.count() == 0);
  }

  SUBCASE("one blob above and one below the extent threshold") {
    // 150-voxel blob: 10x5x3 at the origin corner; 99-voxel blob: 9x11x1.
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 10; ++i) t.at(i, j, k) = 5.0f;
    for (int j = 8; j < 19; ++j)
      for (int i = 11; i < 20; ++i) t.at(i, j, 8) = 5.0f;

    const auto r = ppm::cluster_extent(t, 1.0, 100);
    REQUIRE(r.clusters.size() == 1);
    CHECK(r.clusters[0].size == 150);
    CHECK(r.significant_mask.count() == 150);
    // flood-fill oracle agrees on the suprathreshold component structure
    const auto suprathreshold = [&](int i, int j, int k) { return t.at(i, j, k) >= 1.0f; };
    CHECK(oracle::count_components(t.dims, 26, suprathreshold) == 2);
  }

  SUBCASE("min_extent = 1 reproduces the suprathreshold set") {
    t.at(3, 3, 3) = 2.0f;
    t.at(10, 10, 5) = 3.0f;
    const auto r = ppm::cluster_extent(t, 1.5, 1);
    CHECK(r.clusters.size() == 2);
    CHECK(r.significant_mask.count() == 2);
    CHECK(r.clusters[0].peak_t == doctest::Approx(3.0));  // sorted by peak
    CHECK(r.clusters[0].peak == std::array<int, 3>{10, 10, 5});
  }
}

TEST_CASE("cluster sizes sum to the mask cardinality") {
  oracle::TestRng rng(9);
  ScalarVolume t = ScalarVolume::filled({12, 12, 12}, 0.0f);
  for (auto& x : t.data) x = static_cast<float>(rng.gaussian());
  const auto r = ppm::cluster_extent(t, 1.0, 3);
  std::size_t total = 0;
  for (const auto& c : r.clusters) total += c.size;
  CHECK(total == r.significant_mask.count());
  for (int k = 0; k < 12; ++k)
    for (int j = 0; j < 12; ++j)
      for (int i = 0; i < 12; ++i)
        if (r.significant_mask.at(i, j, k)) CHECK(t.at(i, j, k) >= 1.0f);
}

TEST_CASE("design and input validation") {
  oracle::TestRng rng(10);
  DesignMatrix d = random_design(rng, 10);

  SUBCASE("rank-deficient design is rejected") {
    for (int r = 0; r < 10; ++r) d.X(r, 2) = 2.0 * d.X(r, 1);  // collinear
    const auto vols = noise_volumes(rng, 10, {2, 2, 2});
    CHECK_THROWS_AS(ppm::fit_voxelwise(vols, d), ppm::ValidationError);
  }

  SUBCASE("geometry mismatch is rejected") {
    auto vols = noise_volumes(rng, 10, {2, 2, 2});
    vols.back() = ScalarVolume::filled({2, 2, 3}, 0.0f);
    CHECK_THROWS_AS(ppm::fit_voxelwise(vols, d), ppm::ValidationError);
  }

  SUBCASE("volume count must match design rows") {
    const auto vols = noise_volumes(rng, 9, {2, 2, 2});
    CHECK_THROWS_AS(ppm::fit_voxelwise(vols, d), ppm::ValidationError);
  }

  SUBCASE("n_perm below 100 is rejected") {
    const auto vols = noise_volumes(rng, 10, {2, 2, 2});
    CHECK_THROWS_AS(ppm::permutation_fwe(vols, d, 99, 0.05, 0, false),
                    ppm::ValidationError);
  }
}

TEST_CASE("cohort CSV loading and validation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ppm_glm_tests";
  fs::create_directories(dir);
  const fs::path csv = dir / "cohort.csv";

  SUBCASE("valid cohort, any column order") {
    std::ofstream(csv) << "age,subject_id,gender,score,ppm_path\n"
                          "61,s1,0,3,/p/1.nii\n"
                          "72,s2,1,0,/p/2.nii\n"
                          "55,s3,0,2,/p/3.nii\n"
                          "66,s4,1,1,/p/4.nii\n"
                          "59,s5,0,4,/p/5.nii\n"
                          "81,s6,1,2,/p/6.nii\n";
    const CohortTable t = ppm::load_cohort_csv(csv);
    CHECK(t.rows.size() == 6);
    CHECK(t.rows[0].subject_id == "s1");
    CHECK(t.rows[0].age == doctest::Approx(61));
    CHECK(t.rows[1].gender == 1);
    CHECK(t.rows[4].score == doctest::Approx(4));
  }

  SUBCASE("duplicate ids rejected") {
    std::ofstream(csv) << "subject_id,ppm_path,score,age,gender\n"
                          "s1,/p/1.nii,1,60,0\n"
                          "s1,/p/2.nii,2,61,1\n"
                          "s3,/p/3.nii,1,62,0\n"
                          "s4,/p/4.nii,2,63,1\n"
                          "s5,/p/5.nii,1,64,0\n"
                          "s6,/p/6.nii,2,65,1\n";
    CHECK_THROWS_AS(ppm::load_cohort_csv(csv), ppm::ValidationError);
  }

  SUBCASE("too few subjects rejected") {
    std::ofstream(csv) << "subject_id,ppm_path,score,age,gender\n"
                          "s1,/p/1.nii,1,60,0\n";
    CHECK_THROWS_AS(ppm::load_cohort_csv(csv), ppm::ValidationError);
  }

  SUBCASE("bad gender coding rejected") {
    std::ofstream(csv) << "subject_id,ppm_path,score,age,gender\n"
                          "s1,/p/1.nii,1,60,2\n"
                          "s2,/p/2.nii,2,61,1\n"
                          "s3,/p/3.nii,1,62,0\n"
                          "s4,/p/4.nii,2,63,1\n"
                          "s5,/p/5.nii,1,64,0\n"
                          "s6,/p/6.nii,2,65,1\n";
    CHECK_THROWS_AS(ppm::load_cohort_csv(csv), ppm::ValidationError);
  }

  SUBCASE("missing values rejected") {
    std::ofstream(csv) << "subject_id,ppm_path,score,age,gender\n"
                          "s1,/p/1.nii,,60,0\n"
                          "s2,/p/2.nii,2,61,1\n"
                          "s3,/p/3.nii,1,62,0\n"
                          "s4,/p/4.nii,2,63,1\n"
                          "s5,/p/5.nii,1,64,0\n"
                          "s6,/p/6.nii,2,65,1\n";
    CHECK_THROWS_AS(ppm::load_cohort_csv(csv), ppm::ValidationError);
  }
}

TEST_CASE("make_design builds the documented columns") {
  CohortTable t;
  const double ages[6] = {61, 72, 55, 66, 59, 81};
  for (int s = 0; s < 6; ++s)
    t.rows.push_back({"s" + std::to_string(s), "/p.nii", 1.0 * s, ages[s], s % 2});
  const DesignMatrix d = ppm::make_design(t);
  CHECK(d.X.rows() == 6);
  CHECK(d.X(3, 0) == 1.0);
  CHECK(d.X(3, 1) == doctest::Approx(3.0));
  CHECK(d.X(3, 2) == doctest::Approx(66.0));
  CHECK(d.X(3, 3) == doctest::Approx(1.0));
  CHECK(d.contrast(1) == 1.0);
}
