#include "ppm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>

#include "ppm/errors.hpp"

namespace ppm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTissueSlownessScale = 1.0 / 1e-3;  // 1 / default speed floor

// mt19937_64 is fully specified by the standard; mapping its output to
// uniforms and gaussians by hand keeps the bundle bit-identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // [0,1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  int uniform_int(int bound) {  // [0, bound)
    return static_cast<int>(engine_() % static_cast<std::uint64_t>(bound));
  }

  double gaussian() {  // Box-Muller, one value per call
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct Vec3 {
  double x, y, z;
};

Vec3 normalize(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

// One axis-biased random-walk branch as a continuous polyline with unit steps.
// Returns false when the walk would leave the safe box.
bool grow_branch(Rng& rng, const Vec3& start, int length, double margin,
                 const std::array<int, 3>& dims, std::vector<Vec3>& out) {
  out.clear();
  static constexpr double kAxes[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                         {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
  const auto& axis = kAxes[rng.uniform_int(6)];
  Vec3 dir{axis[0], axis[1], axis[2]};
  Vec3 p = start;
  out.push_back(p);
  for (int s = 0; s < length; ++s) {
    dir = normalize({dir.x + 0.3 * (rng.uniform() - 0.5),
                     dir.y + 0.3 * (rng.uniform() - 0.5),
                     dir.z + 0.3 * (rng.uniform() - 0.5)});
    const Vec3 q{p.x + dir.x, p.y + dir.y, p.z + dir.z};
    if (q.x < margin || q.x > dims[0] - 1 - margin || q.y < margin ||
        q.y > dims[1] - 1 - margin || q.z < margin || q.z > dims[2] - 1 - margin)
      return false;
    p = q;
    out.push_back(p);
  }
  return true;
}

void stamp_ball(BinaryMask& mask, const Vec3& center, double radius) {
  const int r = static_cast<int>(std::ceil(radius));
  const int ci = static_cast<int>(std::lround(center.x));
  const int cj = static_cast<int>(std::lround(center.y));
  const int ck = static_cast<int>(std::lround(center.z));
  const double r2 = radius * radius;
  for (int k = ck - r; k <= ck + r; ++k)
    for (int j = cj - r; j <= cj + r; ++j)
      for (int i = ci - r; i <= ci + r; ++i) {
        if (!mask.in_bounds(i, j, k)) continue;
        const double dx = i - center.x, dy = j - center.y, dz = k - center.z;
        if (dx * dx + dy * dy + dz * dz <= r2) mask.at(i, j, k) = 1;
      }
}

// Geodesic arrival inside the tube set: 26-connected Dijkstra from the root
// with metric edge lengths.
std::vector<double> tube_geodesic(const BinaryMask& mask, const std::array<int, 3>& root) {
  struct Entry {
    double t;
    int i, j, k;
    bool operator>(const Entry& o) const {
      if (t != o.t) return t > o.t;
      if (i != o.i) return i > o.i;
      if (j != o.j) return j > o.j;
      return k > o.k;
    }
  };
  std::vector<double> dist(mask.size(), kInf);
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist[mask.index(root[0], root[1], root[2])] = 0.0;
  heap.push({0.0, root[0], root[1], root[2]});
  while (!heap.empty()) {
    const Entry top = heap.top();
    heap.pop();
    const std::size_t uidx = mask.index(top.i, top.j, top.k);
    if (top.t > dist[uidx]) continue;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int vi = top.i + dx, vj = top.j + dy, vk = top.k + dz;
          if (!mask.in_bounds(vi, vj, vk) || !mask.at(vi, vj, vk)) continue;
          const std::size_t vidx = mask.index(vi, vj, vk);
          const double len = std::sqrt(dx * dx * mask.spacing[0] * mask.spacing[0] +
                                       dy * dy * mask.spacing[1] * mask.spacing[1] +
                                       dz * dz * mask.spacing[2] * mask.spacing[2]);
          if (top.t + len < dist[vidx]) {
            dist[vidx] = top.t + len;
            heap.push({dist[vidx], vi, vj, vk});
          }
        }
  }
  return dist;
}

// Exact Euclidean feature transform (squared distance + nearest-site index)
// by the separable lower-envelope-of-parabolas algorithm, run per axis with
// physical coordinates.
void feature_transform(const BinaryMask& sites, const std::array<double, 3>& spacing,
                       std::vector<double>& dist2, std::vector<std::int64_t>& site) {
  const int nx = sites.dims[0], ny = sites.dims[1], nz = sites.dims[2];
  const std::size_t n = sites.size();
  dist2.assign(n, kInf);
  site.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i)
    if (sites.data[i]) {
      dist2[i] = 0.0;
      site[i] = static_cast<std::int64_t>(i);
    }

  const auto envelope_pass = [&](int axis) {
    const int len = sites.dims[axis];
    const double h = spacing[axis];
    std::vector<double> f(len), newd(len);
    std::vector<std::int64_t> argf(len), news(len);
    std::vector<int> v(len);
    std::vector<double> z(len + 1);

    const int nu = axis == 0 ? ny : nx;
    const int nw = axis == 2 ? ny : nz;
    for (int w = 0; w < nw; ++w)
      for (int u = 0; u < nu; ++u) {
        // Gather the line along `axis` at fixed (u,w).
        for (int q = 0; q < len; ++q) {
          int i, j, k;
          if (axis == 0) { i = q; j = u; k = w; }
          else if (axis == 1) { i = u; j = q; k = w; }
          else { i = u; j = w; k = q; }
          const std::size_t idx = sites.index(i, j, k);
          f[q] = dist2[idx];
          argf[q] = site[idx];
        }

        int m = -1;  // rightmost parabola in the envelope
        for (int q = 0; q < len; ++q) {
          if (f[q] == kInf) continue;
          const double xq = q * h;
          while (m >= 0) {
            const double xv = v[m] * h;
            const double s =
                ((f[q] + xq * xq) - (f[v[m]] + xv * xv)) / (2.0 * xq - 2.0 * xv);
            if (s <= z[m]) { --m; } else break;
          }
          ++m;
          v[m] = q;
          z[m] = m == 0 ? -kInf
                        : ((f[q] + xq * xq) - (f[v[m - 1]] + v[m - 1] * h * v[m - 1] * h)) /
                              (2.0 * xq - 2.0 * v[m - 1] * h);
          z[m + 1] = kInf;
        }

        if (m < 0) {
          for (int q = 0; q < len; ++q) { newd[q] = kInf; news[q] = -1; }
        } else {
          int r = 0;
          for (int q = 0; q < len; ++q) {
            const double xq = q * h;
            while (z[r + 1] < xq) ++r;
            const double dx = xq - v[r] * h;
            newd[q] = f[v[r]] + dx * dx;
            news[q] = argf[v[r]];
          }
        }

        for (int q = 0; q < len; ++q) {
          int i, j, k;
          if (axis == 0) { i = q; j = u; k = w; }
          else if (axis == 1) { i = u; j = q; k = w; }
          else { i = u; j = w; k = q; }
          const std::size_t idx = sites.index(i, j, k);
          dist2[idx] = newd[q];
          site[idx] = news[q];
        }
      }
  };

  for (int axis = 0; axis < 3; ++axis) envelope_pass(axis);
}

}  // namespace

void PhantomSpec::validate() const {
  for (int d = 0; d < 3; ++d) {
    if (dims[d] < 8) throw ValidationError("phantom dims must be >= 8");
    if (!(spacing[d] > 0.0)) throw ValidationError("phantom spacing must be > 0");
  }
  if (vessel_radius < 1.0) throw ValidationError("vessel radius must be >= 1 voxel");
  if (!(contrast_intensity > 0.0))
    throw ValidationError("contrast intensity must be > 0");
  if (branches < 1) throw ValidationError("phantom needs at least one branch");
  if (branch_length_range[0] < 2 || branch_length_range[1] < branch_length_range[0])
    throw ValidationError("invalid branch length range");
  if (noise_sigma < 0.0) throw ValidationError("noise sigma must be >= 0");
  const double margin = vessel_radius + 1.0;
  for (int d = 0; d < 3; ++d)
    if (root[d] < margin || root[d] > dims[d] - 1 - margin)
      throw ValidationError("phantom root must lie inside the volume with a "
                            "radius margin");
}

SeedSet PhantomBundle::centerline_seeds() const {
  SeedSet seeds;
  seeds.source_geometry = true_vessel_mask.geometry();
  for (const auto& branch : branch_centerlines)
    for (const auto& v : branch) seeds.voxels.push_back(v);
  seeds.normalize();
  return seeds;
}

PhantomBundle generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  const double margin = spec.vessel_radius + 1.0;

  PhantomBundle bundle;
  bundle.true_vessel_mask = BinaryMask::zeros(spec.dims, spec.spacing);

  // Grow the tree: branch 0 starts at the root, later branches sprout from a
  // random point of an existing branch.
  std::vector<std::vector<Vec3>> polylines;
  constexpr int kMaxRetries = 50;
  for (int b = 0; b < spec.branches; ++b) {
    const int length = spec.branch_length_range[0] +
                       rng.uniform_int(spec.branch_length_range[1] -
                                       spec.branch_length_range[0] + 1);
    Vec3 start;
    if (b == 0) {
      start = {static_cast<double>(spec.root[0]), static_cast<double>(spec.root[1]),
               static_cast<double>(spec.root[2])};
    }
    bool grown = false;
    std::vector<Vec3> poly;
    for (int attempt = 0; attempt < kMaxRetries && !grown; ++attempt) {
      if (b > 0) {
        const auto& parent = polylines[static_cast<std::size_t>(rng.uniform_int(b))];
        start = parent[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(parent.size())))];
      }
      grown = grow_branch(rng, start, length, margin, spec.dims, poly);
    }
    if (!grown)
      throw Error("phantom generation failed: branch " + std::to_string(b) +
                  " escaped the volume bounds after " + std::to_string(kMaxRetries) +
                  " retries");
    polylines.push_back(std::move(poly));
  }

  // Rasterize tubes and record integer centerlines.
  for (const auto& poly : polylines) {
    std::vector<std::array<int, 3>> centerline;
    for (const Vec3& p : poly) {
      stamp_ball(bundle.true_vessel_mask, p, spec.vessel_radius);
      const std::array<int, 3> v{static_cast<int>(std::lround(p.x)),
                                 static_cast<int>(std::lround(p.y)),
                                 static_cast<int>(std::lround(p.z))};
      if (centerline.empty() || centerline.back() != v) centerline.push_back(v);
    }
    bundle.branch_centerlines.push_back(std::move(centerline));
  }

  // Ground-truth arrival: geodesic from the root inside the tube set,
  // extended to tissue through the nearest tube voxel.
  const std::vector<double> tube_arrival = tube_geodesic(bundle.true_vessel_mask, spec.root);
  std::vector<double> dist2;
  std::vector<std::int64_t> nearest;
  feature_transform(bundle.true_vessel_mask, spec.spacing, dist2, nearest);

  bundle.true_arrival = ScalarVolume::filled(spec.dims, 0.0f, spec.spacing);
  for (std::size_t idx = 0; idx < bundle.true_arrival.size(); ++idx) {
    double t;
    if (bundle.true_vessel_mask.data[idx]) {
      t = tube_arrival[idx];
    } else {
      t = tube_arrival[static_cast<std::size_t>(nearest[idx])] +
          kTissueSlownessScale * std::sqrt(dist2[idx]);
    }
    bundle.true_arrival.data[idx] = static_cast<float>(t);
  }

  // CT and CTA with optional Gaussian noise; CTA adds the contrast inside
  // the tubes on top of the CT.
  bundle.ct = ScalarVolume::filled(spec.dims, 0.0f, spec.spacing);
  bundle.cta = ScalarVolume::filled(spec.dims, 0.0f, spec.spacing);
  for (std::size_t idx = 0; idx < bundle.ct.size(); ++idx) {
    const double noise_ct = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.gaussian() : 0.0;
    const double ct = spec.tissue_intensity + noise_ct;
    const double noise_cta = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.gaussian() : 0.0;
    const double cta =
        ct + (bundle.true_vessel_mask.data[idx] ? spec.contrast_intensity : 0.0) + noise_cta;
    bundle.ct.data[idx] = static_cast<float>(ct);
    bundle.cta.data[idx] = static_cast<float>(cta);
  }
  return bundle;
}

}  // namespace ppm
