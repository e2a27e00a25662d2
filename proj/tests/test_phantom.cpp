#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ppm/diffusion.hpp"
#include "ppm/dsa.hpp"
#include "ppm/errors.hpp"
#include "ppm/phantom.hpp"
#include "ppm/vesselseg.hpp"

using ppm::PhantomBundle;
using ppm::PhantomSpec;

namespace {

PhantomSpec small_spec() {
  PhantomSpec spec;
  spec.dims = {48, 48, 48};
  spec.root = {24, 24, 24};
  spec.branches = 4;
  spec.branch_length_range = {10, 18};
  spec.vessel_radius = 2.0;
  spec.rng_seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("noiseless contrast is exact inside the tube, zero outside") {
  PhantomSpec spec = small_spec();
  spec.branches = 1;
  spec.noise_sigma = 0.0;
  const PhantomBundle b = ppm::generate_phantom(spec);

  for (std::size_t i = 0; i < b.ct.size(); ++i) {
    const float diff = b.cta.data[i] - b.ct.data[i];
    if (b.true_vessel_mask.data[i])
      CHECK(diff == doctest::Approx(spec.contrast_intensity));
    else
      CHECK(diff == doctest::Approx(0.0));
    CHECK(b.ct.data[i] == doctest::Approx(spec.tissue_intensity));
  }
}

TEST_CASE("arrival truth is zero at the root and increases along a branch") {
  PhantomSpec spec = small_spec();
  spec.branches = 1;
  const PhantomBundle b = ppm::generate_phantom(spec);

  CHECK(b.true_arrival.at(spec.root[0], spec.root[1], spec.root[2]) == 0.0f);
  REQUIRE(b.branch_centerlines.size() == 1);
  const auto& line = b.branch_centerlines[0];
  REQUIRE(line.size() >= 8);
  float prev = -1.0f;
  for (const auto& v : line) {
    const float t = b.true_arrival.at(v[0], v[1], v[2]);
    CHECK(t > prev);
    prev = t;
  }
  for (float t : b.true_arrival.data) CHECK(t >= 0.0f);
}

TEST_CASE("tissue arrival uses nearest-tube arrival plus the slow penalty") {
  PhantomSpec spec = small_spec();
  spec.branches = 2;
  const PhantomBundle b = ppm::generate_phantom(spec);

  // Brute-force check on a voxel subsample: distance to the nearest tube
  // voxel and the arrival recorded there.
  std::vector<std::array<int, 3>> tube;
  for (int k = 0; k < 48; ++k)
    for (int j = 0; j < 48; ++j)
      for (int i = 0; i < 48; ++i)
        if (b.true_vessel_mask.at(i, j, k)) tube.push_back({i, j, k});

  oracle::TestRng rng(5);
  for (int probe = 0; probe < 40; ++probe) {
    const int i = rng.uniform_int(48), j = rng.uniform_int(48), k = rng.uniform_int(48);
    if (b.true_vessel_mask.at(i, j, k)) continue;
    double best = oracle::kInf;
    for (const auto& t : tube) {
      const double d2 = (t[0] - i) * (t[0] - i) + (t[1] - j) * (t[1] - j) +
                        (t[2] - k) * (t[2] - k);
      best = std::min(best, d2);
    }
    // The nearest site can be tied; collect the arrival range over the ties.
    double lo_arrival = oracle::kInf, hi_arrival = 0.0;
    for (const auto& t : tube) {
      const double d2 = (t[0] - i) * (t[0] - i) + (t[1] - j) * (t[1] - j) +
                        (t[2] - k) * (t[2] - k);
      if (d2 == best) {
        const double a = b.true_arrival.at(t[0], t[1], t[2]);
        lo_arrival = std::min(lo_arrival, a);
        hi_arrival = std::max(hi_arrival, a);
      }
    }
    const double penalty = 1000.0 * std::sqrt(best);
    const double actual = b.true_arrival.at(i, j, k);
    CHECK(actual >= penalty + lo_arrival - 0.1);
    CHECK(actual <= penalty + hi_arrival + 0.1);
  }
}

TEST_CASE("fixed seed gives a bit-identical bundle across runs") {
  const PhantomSpec spec = small_spec();
  const PhantomBundle a = ppm::generate_phantom(spec);
  const PhantomBundle b = ppm::generate_phantom(spec);
  CHECK(a.ct.data == b.ct.data);
  CHECK(a.cta.data == b.cta.data);
  CHECK(a.true_vessel_mask.data == b.true_vessel_mask.data);
  CHECK(a.true_arrival.data == b.true_arrival.data);
  CHECK(a.branch_centerlines == b.branch_centerlines);

  PhantomSpec other = spec;
  other.rng_seed = 43;
  const PhantomBundle c = ppm::generate_phantom(other);
  CHECK(a.true_vessel_mask.data != c.true_vessel_mask.data);
}

TEST_CASE("noise changes data but not the tree") {
  PhantomSpec spec = small_spec();
  const PhantomBundle clean = ppm::generate_phantom(spec);
  spec.noise_sigma = 2.0;
  const PhantomBundle noisy = ppm::generate_phantom(spec);
  CHECK(clean.true_vessel_mask.data == noisy.true_vessel_mask.data);
  CHECK(clean.ct.data != noisy.ct.data);
}

TEST_CASE("pipeline seeds stay near the true centerline without noise") {
  PhantomSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  const PhantomBundle b = ppm::generate_phantom(spec);

  const auto dsa = ppm::subtract_normalize(b.cta, b.ct);
  const auto vsp = ppm::perona_malik(dsa, {});
  const auto mask = ppm::binarize(vsp, 0.2);
  const auto skel = ppm::thin3d(mask);
  const auto seeds = ppm::extract_seeds(skel, vsp, 0.75);

  ppm::BinaryMask centerline = ppm::BinaryMask::zeros(spec.dims, spec.spacing);
  for (const auto& branch : b.branch_centerlines)
    for (const auto& v : branch) centerline.at(v[0], v[1], v[2]) = 1;
  const ppm::BinaryMask tolerance_zone = oracle::dilate26(centerline, 2);

  for (const auto& s : seeds.voxels) CHECK(tolerance_zone.at(s[0], s[1], s[2]) == 1);
}

TEST_CASE("vessel recall under mild noise is at least 90 percent") {
  PhantomSpec spec = small_spec();
  spec.noise_sigma = 0.05 * spec.contrast_intensity;
  const PhantomBundle b = ppm::generate_phantom(spec);

  const auto dsa = ppm::subtract_normalize(b.cta, b.ct);
  const auto vsp = ppm::perona_malik(dsa, {});
  const auto mask = ppm::binarize(vsp, 0.2);

  std::size_t truth = 0, recovered = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!b.true_vessel_mask.data[i]) continue;
    ++truth;
    recovered += mask.data[i];
  }
  CHECK(truth > 0);
  CHECK(static_cast<double>(recovered) / static_cast<double>(truth) >= 0.90);
}

TEST_CASE("invalid specs are rejected") {
  PhantomSpec spec = small_spec();
  spec.vessel_radius = 0.5;
  CHECK_THROWS_AS(ppm::generate_phantom(spec), ppm::ValidationError);

  spec = small_spec();
  spec.contrast_intensity = 0.0;
  CHECK_THROWS_AS(ppm::generate_phantom(spec), ppm::ValidationError);

  spec = small_spec();
  spec.root = {1, 24, 24};  // inside the radius margin
  CHECK_THROWS_AS(ppm::generate_phantom(spec), ppm::ValidationError);
}

TEST_CASE("an impossible tree raises a generation error") {
  PhantomSpec spec;
  spec.dims = {10, 10, 10};
  spec.root = {5, 5, 5};
  spec.branches = 1;
  spec.branch_length_range = {30, 40};  // cannot fit in a 10^3 box
  spec.vessel_radius = 1.0;
  CHECK_THROWS_AS(ppm::generate_phantom(spec), ppm::Error);
}
