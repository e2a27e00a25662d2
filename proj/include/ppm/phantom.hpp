#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ppm/vesselseg.hpp"
#include "ppm/volume.hpp"

namespace ppm {

struct PhantomSpec {
  std::array<int, 3> dims{96, 96, 96};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<int, 3> root{48, 48, 48};
  int branches = 8;
  std::array<int, 2> branch_length_range{15, 30};  // voxels
  double vessel_radius = 2.0;                      // voxels, >= 1
  double contrast_intensity = 100.0;               // CTA minus CT inside vessels
  double tissue_intensity = 30.0;
  double noise_sigma = 0.0;
  std::uint64_t rng_seed = 42;

  void validate() const;
};

/// Paired CT/CTA with a known vascular tree and known arrival times.
/// true_arrival is the geodesic path length from the root within the tube
/// set; tissue voxels get arrival-at-nearest-tube-voxel plus
/// (1/epsilon) * Euclidean distance to the tube, mirroring the solver's
/// slow-tissue model (epsilon = 1e-3).
struct PhantomBundle {
  ScalarVolume ct;
  ScalarVolume cta;
  BinaryMask true_vessel_mask;
  std::vector<std::vector<std::array<int, 3>>> branch_centerlines;  // ordered per branch
  ScalarVolume true_arrival;

  /// All centerline voxels as a SeedSet (deduplicated, sorted).
  SeedSet centerline_seeds() const;
};

/// Deterministic per rng_seed, including across platforms (no
/// implementation-defined distributions are used). Throws a generation error
/// when the tree cannot be fit inside the volume after the retry budget.
PhantomBundle generate_phantom(const PhantomSpec& spec);

}  // namespace ppm
