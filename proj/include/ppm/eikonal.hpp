#pragma once

#include <functional>
#include <vector>

#include "ppm/vesselseg.hpp"
#include "ppm/volume.hpp"

namespace ppm {

/// Speed potential with a positive floor: every value lies in [epsilon, 1].
struct SpeedField {
  ScalarVolume values;
  double epsilon = 1e-3;
};

/// Time-of-arrival map. Arrival is exactly 0 at seed voxels and nonnegative
/// everywhere; `reached` marks finite-time voxels (with a positive speed
/// floor this is all of them). Times are kept in double precision — the
/// solver's consistency properties are tighter than float32 resolution —
/// and converted to a float32 volume only for file output.
struct ArrivalMap {
  GridGeometry grid;
  std::vector<double> times;  // x-fastest ordering
  BinaryMask reached;

  double at(int i, int j, int k) const {
    return times[static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(grid.dims[0]) *
                     (static_cast<std::size_t>(j) +
                      static_cast<std::size_t>(grid.dims[1]) * static_cast<std::size_t>(k))];
  }

  /// Float32 volume with the grid geometry (for NIfTI output).
  ScalarVolume to_volume() const;
};

/// F(x) = max(dsa(x), epsilon). Requires 0 < epsilon < 1.
SpeedField build_speed(const ScalarVolume& dsa, double epsilon = 1e-3);

/// Multi-source fast marching for |grad T| = 1/F with T = 0 at the seeds.
/// First-order Godunov upwind updates on the 6-neighborhood with per-axis
/// spacing; min-priority queue with ties broken by lexicographic voxel index,
/// so the solve is fully deterministic. The 26-neighborhood of each seed is
/// seeded with the locally exact arrival (distance / F) as trial candidates,
/// the standard mitigation for the upwind stencil's point-source error; the
/// solved system is T = min(source candidates, Godunov update). `on_accept`,
/// when set, is invoked with each accepted arrival value in acceptance order
/// (test instrumentation for the monotone-acceptance property).
ArrivalMap fast_march(const SpeedField& speed, const SeedSet& seeds,
                      const std::function<void(double)>& on_accept = {});

/// Graph-shortest-path analogue on the 6- or 26-connected grid with edge
/// weight = edge length * (1/F(u) + 1/F(v)) / 2. Oracle-scale only
/// (grid <= 64^3).
ArrivalMap dijkstra_oracle(const SpeedField& speed, const SeedSet& seeds,
                           int connectivity);

}  // namespace ppm
