#include "ppm/eikonal.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "ppm/errors.hpp"

namespace ppm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct HeapEntry {
  double t;
  int i, j, k;
  // Min-heap with deterministic tie-breaking on the voxel index.
  bool operator>(const HeapEntry& o) const {
    if (t != o.t) return t > o.t;
    if (i != o.i) return i > o.i;
    if (j != o.j) return j > o.j;
    return k > o.k;
  }
};

using MinHeap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>>;

enum class State : std::uint8_t { kFar, kTrial, kAccepted };

void check_seeds(const SpeedField& speed, const SeedSet& seeds) {
  if (seeds.voxels.empty()) throw ValidationError("seed set is empty");
  check_compatible(speed.values.geometry(), seeds.source_geometry);
  for (const auto& s : seeds.voxels)
    if (!speed.values.in_bounds(s[0], s[1], s[2]))
      throw ValidationError("seed (" + std::to_string(s[0]) + "," +
                            std::to_string(s[1]) + "," + std::to_string(s[2]) +
                            ") is outside the speed grid");
}

// Godunov upwind update at one voxel from the per-axis upwind values in
// `t_axis` (kInf when an axis has no usable neighbor). Solves
// sum_a ((T - t_a)+ / h_a)^2 = 1/F^2 by the largest root, dropping axes whose
// value exceeds the candidate root.
double godunov_update(const double t_axis[3], const double h[3], double f) {
  struct Cand {
    double t, w;  // w = 1/h^2
  };
  Cand cands[3];
  int m = 0;
  for (int a = 0; a < 3; ++a)
    if (t_axis[a] < kInf) cands[m++] = {t_axis[a], 1.0 / (h[a] * h[a])};
  if (m == 0) return kInf;
  std::sort(cands, cands + m, [](const Cand& a, const Cand& b) { return a.t < b.t; });

  const double rhs = 1.0 / (f * f);
  double root = cands[0].t + 1.0 / (f * std::sqrt(cands[0].w));
  for (int k = 2; k <= m; ++k) {
    if (root <= cands[k - 1].t) break;  // that axis is not upwind for this root
    double a = 0.0, b = 0.0, c = -rhs;
    for (int q = 0; q < k; ++q) {
      a += cands[q].w;
      b -= 2.0 * cands[q].w * cands[q].t;
      c += cands[q].w * cands[q].t * cands[q].t;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) break;
    root = (-b + std::sqrt(disc)) / (2.0 * a);
  }
  return root;
}

ArrivalMap make_arrival(const ScalarVolume& grid, std::vector<double> times) {
  ArrivalMap out;
  out.grid = grid.geometry();
  out.reached = BinaryMask::zeros(grid.dims, grid.spacing);
  out.reached.affine = grid.affine;
  for (std::size_t i = 0; i < times.size(); ++i)
    out.reached.data[i] = times[i] < kInf ? 1 : 0;
  out.times = std::move(times);
  return out;
}

}  // namespace

ScalarVolume ArrivalMap::to_volume() const {
  ScalarVolume v;
  v.dims = grid.dims;
  v.spacing = grid.spacing;
  v.affine = grid.affine;
  v.data.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    v.data[i] = times[i] < kInf ? static_cast<float>(times[i]) : 0.0f;
  return v;
}

SpeedField build_speed(const ScalarVolume& dsa, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ValidationError("speed floor epsilon must lie in (0,1)");
  SpeedField speed;
  speed.epsilon = epsilon;
  speed.values = dsa;
  const float eps = static_cast<float>(epsilon);
  for (float& v : speed.values.data) v = std::max(v, eps);
  return speed;
}

ArrivalMap fast_march(const SpeedField& speed, const SeedSet& seeds,
                      const std::function<void(double)>& on_accept) {
  check_seeds(speed, seeds);
  const auto& grid = speed.values;
  const std::size_t n = grid.size();
  const double h[3] = {grid.spacing[0], grid.spacing[1], grid.spacing[2]};

  std::vector<double> t(n, kInf);
  std::vector<State> state(n, State::kFar);
  MinHeap heap;

  for (const auto& s : seeds.voxels) {
    const std::size_t idx = grid.index(s[0], s[1], s[2]);
    t[idx] = 0.0;
    state[idx] = State::kTrial;
    heap.push({0.0, s[0], s[1], s[2]});
  }

  // Point-source factorization: the upwind stencil cannot represent the
  // spherical front right at a source, so voxels within two steps of a seed
  // start from a straight-ray arrival estimate. The estimate uses the worst
  // slowness sampled along the ray, which is exact for locally uniform speed
  // and otherwise overestimates; the values are trial candidates, not
  // boundary data, so ordinary updates can only improve on them.
  for (const auto& s : seeds.voxels) {
    for (int dz = -2; dz <= 2; ++dz)
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int bi = s[0] + dx, bj = s[1] + dy, bk = s[2] + dz;
          if (!grid.in_bounds(bi, bj, bk)) continue;
          const std::size_t bidx = grid.index(bi, bj, bk);
          if (t[bidx] == 0.0) continue;  // another seed
          const int mi = s[0] + (dx / 2), mj = s[1] + (dy / 2), mk = s[2] + (dz / 2);
          const double slowness =
              1.0 / std::min({grid.data[bidx], grid.at(mi, mj, mk),
                              grid.at(s[0], s[1], s[2])});
          const double dist = std::sqrt(dx * dx * h[0] * h[0] + dy * dy * h[1] * h[1] +
                                        dz * dz * h[2] * h[2]);
          const double cand = dist * slowness;
          if (cand < t[bidx]) {
            t[bidx] = cand;
            state[bidx] = State::kTrial;
            heap.push({cand, bi, bj, bk});
          }
        }
  }

  static constexpr int kSteps[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                       {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};

  [[maybe_unused]] double last_accepted = 0.0;
  while (!heap.empty()) {
    const HeapEntry top = heap.top();
    heap.pop();
    const std::size_t idx = grid.index(top.i, top.j, top.k);
    if (state[idx] == State::kAccepted) continue;  // stale duplicate
    state[idx] = State::kAccepted;
    assert(t[idx] >= last_accepted);
    last_accepted = t[idx];
    if (on_accept) on_accept(t[idx]);

    for (const auto& step : kSteps) {
      const int ni = top.i + step[0], nj = top.j + step[1], nk = top.k + step[2];
      if (!grid.in_bounds(ni, nj, nk)) continue;
      const std::size_t nidx = grid.index(ni, nj, nk);
      if (state[nidx] == State::kAccepted) continue;

      double t_axis[3];
      for (int a = 0; a < 3; ++a) {
        int lo[3] = {ni, nj, nk}, hi[3] = {ni, nj, nk};
        --lo[a];
        ++hi[a];
        double best = kInf;
        if (grid.in_bounds(lo[0], lo[1], lo[2])) {
          const std::size_t q = grid.index(lo[0], lo[1], lo[2]);
          if (state[q] == State::kAccepted) best = t[q];
        }
        if (grid.in_bounds(hi[0], hi[1], hi[2])) {
          const std::size_t q = grid.index(hi[0], hi[1], hi[2]);
          if (state[q] == State::kAccepted) best = std::min(best, t[q]);
        }
        t_axis[a] = best;
      }
      const double cand = godunov_update(t_axis, h, grid.data[nidx]);
      if (cand < t[nidx]) {
        t[nidx] = cand;
        state[nidx] = State::kTrial;
        heap.push({cand, ni, nj, nk});
      }
    }
  }

  return make_arrival(grid, std::move(t));
}

ArrivalMap dijkstra_oracle(const SpeedField& speed, const SeedSet& seeds,
                           int connectivity) {
  if (connectivity != 6 && connectivity != 26)
    throw ValidationError("dijkstra connectivity must be 6 or 26");
  check_seeds(speed, seeds);
  const auto& grid = speed.values;
  if (grid.dims[0] > 64 || grid.dims[1] > 64 || grid.dims[2] > 64)
    throw ValidationError("dijkstra oracle is limited to grids <= 64^3");
  const std::size_t n = grid.size();

  std::vector<double> t(n, kInf);
  std::vector<bool> done(n, false);
  MinHeap heap;
  for (const auto& s : seeds.voxels) {
    const std::size_t idx = grid.index(s[0], s[1], s[2]);
    t[idx] = 0.0;
    heap.push({0.0, s[0], s[1], s[2]});
  }

  while (!heap.empty()) {
    const HeapEntry top = heap.top();
    heap.pop();
    const std::size_t uidx = grid.index(top.i, top.j, top.k);
    if (done[uidx]) continue;
    done[uidx] = true;
    const double slowness_u = 1.0 / grid.data[uidx];

    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          if (connectivity == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1)
            continue;
          const int vi = top.i + dx, vj = top.j + dy, vk = top.k + dz;
          if (!grid.in_bounds(vi, vj, vk)) continue;
          const std::size_t vidx = grid.index(vi, vj, vk);
          if (done[vidx]) continue;
          const double len = std::sqrt(dx * dx * grid.spacing[0] * grid.spacing[0] +
                                       dy * dy * grid.spacing[1] * grid.spacing[1] +
                                       dz * dz * grid.spacing[2] * grid.spacing[2]);
          const double w = len * 0.5 * (slowness_u + 1.0 / grid.data[vidx]);
          if (t[uidx] + w < t[vidx]) {
            t[vidx] = t[uidx] + w;
            heap.push({t[vidx], vi, vj, vk});
          }
        }
  }

  return make_arrival(grid, std::move(t));
}

}  // namespace ppm
