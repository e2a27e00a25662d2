#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ppm/volume.hpp"

namespace ppm {

/// Zero-time source voxels for fast marching. Indices are deduplicated and
/// sorted lexicographically by (i,j,k).
struct SeedSet {
  std::vector<std::array<int, 3>> voxels;
  GridGeometry source_geometry;

  /// Sorts, deduplicates, and checks every index against the geometry.
  void normalize();
  void validate() const;
};

/// mask(x) = 1 iff vsp(x) > threshold (strict).
BinaryMask binarize(const ScalarVolume& vsp, double threshold = 0.2);

/// Topology-preserving 3D thinning to a one-voxel-wide centerline.
/// Border-peeling over the six directions (U,D,N,S,E,W) per pass; a border
/// voxel is deleted only if it is not a line end (>= 2 foreground
/// 26-neighbors), deletion leaves the Euler characteristic of its
/// 26-neighborhood unchanged, and it is a simple point (one 26-connected
/// foreground component in N26 minus the center, one 6-connected background
/// component of N18 touching a face neighbor). Candidates are collected per
/// sub-pass and re-checked for simplicity sequentially at deletion time.
/// The output is always a subset of the input; the function is idempotent.
BinaryMask thin3d(const BinaryMask& mask);

enum class SeedPopulation {
  kSkeleton,  // percentile over VSP values at skeleton voxels
  kVolume,    // percentile over the whole VSP volume
};

/// Seed voxels: skeleton voxels whose VSP value strictly exceeds the q-th
/// percentile of the chosen population. Throws when the skeleton is empty or
/// when the strict threshold leaves no seeds.
SeedSet extract_seeds(const BinaryMask& skel, const ScalarVolume& vsp,
                      double quantile = 0.75,
                      SeedPopulation population = SeedPopulation::kSkeleton);

/// CSV serialization: a header line recording dims, then one i,j,k row per seed.
void save_seeds_csv(const SeedSet& seeds, const std::filesystem::path& path);
SeedSet load_seeds_csv(const std::filesystem::path& path);

namespace detail {

/// 27 neighborhood occupancy bits, bit index = (dz+1)*9 + (dy+1)*3 + (dx+1);
/// out-of-volume voxels read as background.
std::uint32_t neighborhood_bits(const BinaryMask& mask, int i, int j, int k);

/// Change in the Euler characteristic of the local cube complex when the
/// center voxel is removed (0 means Euler-invariant deletion).
int euler_delta_on_removal(std::uint32_t bits);

/// Simple-point test for (26,6) adjacency on the 27-bit neighborhood.
bool is_simple_point(std::uint32_t bits);

}  // namespace detail

}  // namespace ppm
