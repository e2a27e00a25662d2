#include "ppm/vesselseg.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "ppm/errors.hpp"

namespace ppm {

void SeedSet::normalize() {
  std::sort(voxels.begin(), voxels.end());
  voxels.erase(std::unique(voxels.begin(), voxels.end()), voxels.end());
  validate();
}

void SeedSet::validate() const {
  for (const auto& v : voxels) {
    for (int d = 0; d < 3; ++d) {
      if (v[d] < 0 || v[d] >= source_geometry.dims[d])
        throw ValidationError("seed (" + std::to_string(v[0]) + "," +
                              std::to_string(v[1]) + "," + std::to_string(v[2]) +
                              ") is outside the grid");
    }
  }
}

BinaryMask binarize(const ScalarVolume& vsp, double threshold) {
  BinaryMask mask;
  mask.dims = vsp.dims;
  mask.spacing = vsp.spacing;
  mask.affine = vsp.affine;
  mask.data.resize(vsp.data.size());
  const float t = static_cast<float>(threshold);
  for (std::size_t i = 0; i < vsp.data.size(); ++i)
    mask.data[i] = vsp.data[i] > t ? 1 : 0;
  return mask;
}

namespace detail {

std::uint32_t neighborhood_bits(const BinaryMask& mask, int i, int j, int k) {
  std::uint32_t bits = 0;
  int b = 0;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx, ++b) {
        const int x = i + dx, y = j + dy, z = k + dz;
        if (mask.in_bounds(x, y, z) && mask.at(x, y, z)) bits |= 1u << b;
      }
  return bits;
}

namespace {

constexpr int bit_of(int dx, int dy, int dz) {
  return (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1);
}

constexpr std::uint32_t kCenterBit = 1u << bit_of(0, 0, 0);

inline bool fg(std::uint32_t bits, int dx, int dy, int dz) {
  return (bits >> bit_of(dx, dy, dz)) & 1u;
}

}  // namespace

// Removing the center cube changes the Euler characteristic V - E + F - C of
// the local cube complex by the count of cells of the center cube that no
// remaining neighbor shares: each corner vertex is shared with 7 neighbors,
// each edge with 3, each face with 1, and the cube itself always goes.
int euler_delta_on_removal(std::uint32_t bits) {
  int delta = -1;  // the center cube itself

  // 8 corner vertices; sharing cubes have offsets in {e-1,e} per axis.
  for (int ez = 0; ez <= 1; ++ez)
    for (int ey = 0; ey <= 1; ++ey)
      for (int ex = 0; ex <= 1; ++ex) {
        bool exclusive = true;
        for (int dz = ez - 1; dz <= ez && exclusive; ++dz)
          for (int dy = ey - 1; dy <= ey && exclusive; ++dy)
            for (int dx = ex - 1; dx <= ex && exclusive; ++dx) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              if (fg(bits, dx, dy, dz)) exclusive = false;
            }
        if (exclusive) ++delta;
      }

  // 12 edges, grouped by the free axis; the 3 sharing cubes span the other two.
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int eu = 0; eu <= 1; ++eu)
      for (int ev = 0; ev <= 1; ++ev) {
        bool exclusive = true;
        for (int du = eu - 1; du <= eu && exclusive; ++du)
          for (int dv = ev - 1; dv <= ev && exclusive; ++dv) {
            if (du == 0 && dv == 0) continue;
            int d[3] = {0, 0, 0};
            d[u] = du;
            d[v] = dv;
            if (fg(bits, d[0], d[1], d[2])) exclusive = false;
          }
        if (exclusive) --delta;
      }
  }

  // 6 faces, each shared with exactly one neighbor.
  static constexpr int kFaces[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                       {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
  for (const auto& f : kFaces)
    if (!fg(bits, f[0], f[1], f[2])) ++delta;

  return delta;
}

bool is_simple_point(std::uint32_t bits) {
  // T26: the foreground of N26 (center excluded) must form exactly one
  // 26-connected component.
  {
    std::uint32_t rest = bits & ~kCenterBit;
    if (rest == 0) return false;  // isolated point
    const int start = std::countr_zero(rest);
    std::uint32_t comp = 1u << start;
    std::uint32_t frontier = comp;
    while (frontier) {
      std::uint32_t next = 0;
      for (std::uint32_t f = frontier; f;) {
        const int b = std::countr_zero(f);
        f &= f - 1;
        const int dz = b / 9 - 1, dy = (b / 3) % 3 - 1, dx = b % 3 - 1;
        for (int az = std::max(dz - 1, -1); az <= std::min(dz + 1, 1); ++az)
          for (int ay = std::max(dy - 1, -1); ay <= std::min(dy + 1, 1); ++ay)
            for (int ax = std::max(dx - 1, -1); ax <= std::min(dx + 1, 1); ++ax) {
              const std::uint32_t nb = 1u << bit_of(ax, ay, az);
              if ((rest & nb) && !(comp & nb)) {
                comp |= nb;
                next |= nb;
              }
            }
      }
      frontier = next;
    }
    if (comp != rest) return false;
  }

  // T6: 6-connected background components of the 18-neighborhood that touch a
  // face neighbor of the center; there must be exactly one.
  {
    std::uint32_t n18_bg = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
          if (manhattan == 0 || manhattan > 2) continue;
          if (!fg(bits, dx, dy, dz)) n18_bg |= 1u << bit_of(dx, dy, dz);
        }
    std::uint32_t face_bits = 0;
    static constexpr int kFaces[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                         {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
    for (const auto& f : kFaces) face_bits |= 1u << bit_of(f[0], f[1], f[2]);

    std::uint32_t unvisited = n18_bg;
    int touching_components = 0;
    while (unvisited) {
      // Grow one 6-connected component within the 18-neighborhood.
      const int start = std::countr_zero(unvisited);
      std::uint32_t comp = 1u << start;
      std::uint32_t frontier = comp;
      while (frontier) {
        std::uint32_t next = 0;
        for (std::uint32_t f = frontier; f;) {
          const int b = std::countr_zero(f);
          f &= f - 1;
          const int dz = b / 9 - 1, dy = (b / 3) % 3 - 1, dx = b % 3 - 1;
          for (const auto& step : kFaces) {
            const int ax = dx + step[0], ay = dy + step[1], az = dz + step[2];
            if (ax < -1 || ax > 1 || ay < -1 || ay > 1 || az < -1 || az > 1) continue;
            if (ax == 0 && ay == 0 && az == 0) continue;
            const std::uint32_t nb = 1u << bit_of(ax, ay, az);
            if ((n18_bg & nb) && !(comp & nb)) {
              comp |= nb;
              next |= nb;
            }
          }
        }
        frontier = next;
      }
      if (comp & face_bits) ++touching_components;
      unvisited &= ~comp;
    }
    if (touching_components != 1) return false;
  }

  return true;
}

}  // namespace detail

namespace {

int popcount_neighbors(std::uint32_t bits) {
  return std::popcount(bits & ~detail::kCenterBit);
}

}  // namespace

BinaryMask thin3d(const BinaryMask& mask) {
  mask.validate();
  BinaryMask out = mask;
  const int nx = out.dims[0], ny = out.dims[1], nz = out.dims[2];

  // Border directions in fixed order: U,D,N,S,E,W = +z,-z,+y,-y,+x,-x.
  static constexpr int kDirs[6][3] = {{0, 0, 1},  {0, 0, -1}, {0, 1, 0},
                                      {0, -1, 0}, {1, 0, 0},  {-1, 0, 0}};

  std::vector<std::array<int, 3>> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& dir : kDirs) {
      candidates.clear();
      for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
          for (int i = 0; i < nx; ++i) {
            if (!out.at(i, j, k)) continue;
            const int bi = i + dir[0], bj = j + dir[1], bk = k + dir[2];
            if (out.in_bounds(bi, bj, bk) && out.at(bi, bj, bk)) continue;  // not a border voxel
            const std::uint32_t bits = detail::neighborhood_bits(out, i, j, k);
            if (popcount_neighbors(bits) < 2) continue;  // line-end protection
            if (detail::euler_delta_on_removal(bits) != 0) continue;
            if (!detail::is_simple_point(bits)) continue;
            candidates.push_back({i, j, k});
          }
      // Sequential re-check: earlier deletions within the sub-pass can make a
      // candidate non-simple.
      for (const auto& c : candidates) {
        const std::uint32_t bits = detail::neighborhood_bits(out, c[0], c[1], c[2]);
        if (!detail::is_simple_point(bits)) continue;
        out.at(c[0], c[1], c[2]) = 0;
        changed = true;
      }
    }
  }
  return out;
}

SeedSet extract_seeds(const BinaryMask& skel, const ScalarVolume& vsp,
                      double quantile, SeedPopulation population) {
  check_compatible(skel.geometry(), vsp.geometry());
  if (!(quantile >= 0.0 && quantile <= 1.0))
    throw ValidationError("seed quantile must be in [0,1]");

  std::vector<std::array<int, 3>> skel_voxels;
  std::vector<double> on_skeleton;
  for (int k = 0; k < skel.dims[2]; ++k)
    for (int j = 0; j < skel.dims[1]; ++j)
      for (int i = 0; i < skel.dims[0]; ++i)
        if (skel.at(i, j, k)) {
          skel_voxels.push_back({i, j, k});
          on_skeleton.push_back(vsp.at(i, j, k));
        }
  if (skel_voxels.empty()) throw ValidationError("skeleton has no foreground voxels");

  double threshold;
  if (population == SeedPopulation::kSkeleton) {
    threshold = percentile(on_skeleton, quantile);
  } else {
    threshold = percentile(std::vector<double>(vsp.data.begin(), vsp.data.end()), quantile);
  }

  SeedSet seeds;
  seeds.source_geometry = skel.geometry();
  for (std::size_t s = 0; s < skel_voxels.size(); ++s)
    if (on_skeleton[s] > threshold) seeds.voxels.push_back(skel_voxels[s]);
  if (seeds.voxels.empty())
    throw ValidationError(
        "no skeleton voxel exceeds the seed threshold (strict > percentile); "
        "try a lower quantile");
  seeds.normalize();
  return seeds;
}

void save_seeds_csv(const SeedSet& seeds, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  const auto& d = seeds.source_geometry.dims;
  f << "# dims=" << d[0] << "," << d[1] << "," << d[2] << "\n";
  f << "i,j,k\n";
  for (const auto& v : seeds.voxels) f << v[0] << "," << v[1] << "," << v[2] << "\n";
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

std::array<int, 3> parse_ijk(const std::string& line, const std::string& context) {
  std::array<int, 3> out{};
  std::size_t start = 0;
  for (int d = 0; d < 3; ++d) {
    const std::size_t end = d < 2 ? line.find(',', start) : line.size();
    if (end == std::string::npos)
      throw ValidationError("malformed seeds CSV row '" + line + "' in " + context);
    const auto rc = std::from_chars(line.data() + start, line.data() + end, out[d]);
    if (rc.ec != std::errc{} || rc.ptr != line.data() + end)
      throw ValidationError("malformed seeds CSV row '" + line + "' in " + context);
    start = end + 1;
  }
  return out;
}

}  // namespace

SeedSet load_seeds_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open seeds CSV '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line.rfind("# dims=", 0) != 0)
    throw ValidationError("seeds CSV '" + path.string() +
                          "' must start with a '# dims=' header line");

  SeedSet seeds;
  seeds.source_geometry.dims = parse_ijk(line.substr(7), path.string());
  if (!std::getline(f, line) || line != "i,j,k")
    throw ValidationError("seeds CSV '" + path.string() + "' is missing the i,j,k header");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    seeds.voxels.push_back(parse_ijk(line, path.string()));
  }
  seeds.normalize();
  return seeds;
}

}  // namespace ppm
