#include "ppm/glm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "ppm/errors.hpp"

namespace ppm {

void CohortTable::validate() const {
  constexpr int kRegressors = 4;
  if (rows.size() < kRegressors + 2)
    throw ValidationError("cohort needs at least " + std::to_string(kRegressors + 2) +
                          " subjects, got " + std::to_string(rows.size()));
  std::set<std::string> ids;
  for (const auto& r : rows) {
    if (r.subject_id.empty() || r.ppm_path.empty())
      throw ValidationError("cohort rows must not have empty fields");
    if (!ids.insert(r.subject_id).second)
      throw ValidationError("duplicate subject_id '" + r.subject_id + "'");
    if (!std::isfinite(r.score) || r.score < 0.0)
      throw ValidationError("score for '" + r.subject_id + "' must be finite and >= 0");
    if (!std::isfinite(r.age))
      throw ValidationError("age for '" + r.subject_id + "' must be finite");
    if (r.gender != 0 && r.gender != 1)
      throw ValidationError("gender for '" + r.subject_id + "' must be 0 or 1");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("cohort CSV: cannot parse " + what + " value '" + s + "'");
  }
}

}  // namespace

CohortTable load_cohort_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open cohort CSV '" + path.string() + "'");

  std::string line;
  if (!std::getline(f, line))
    throw ValidationError("cohort CSV '" + path.string() + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);
  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ValidationError("cohort CSV is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = col("subject_id"), c_path = col("ppm_path"),
                    c_score = col("score"), c_age = col("age"), c_gender = col("gender");

  CohortTable table;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("cohort CSV row has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
    CohortRow row;
    row.subject_id = cells[c_id];
    row.ppm_path = cells[c_path];
    row.score = parse_double(cells[c_score], "score");
    row.age = parse_double(cells[c_age], "age");
    const double g = parse_double(cells[c_gender], "gender");
    row.gender = static_cast<int>(g);
    if (g != 0.0 && g != 1.0)
      throw ValidationError("gender for '" + row.subject_id + "' must be 0 or 1");
    table.rows.push_back(std::move(row));
  }
  table.validate();
  return table;
}

void DesignMatrix::validate() const {
  if (X.cols() != 4) throw ValidationError("design matrix must have 4 columns");
  if (X.rows() < X.cols() + 2)
    throw ValidationError("design matrix needs at least p+2 rows");
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    if (X(r, 0) != 1.0)
      throw ValidationError("design matrix first column must be all ones");
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(X);
  if (lu.rank() < X.cols())
    throw ValidationError("design matrix is rank deficient");
}

DesignMatrix make_design(const CohortTable& cohort) {
  cohort.validate();
  DesignMatrix d;
  const Eigen::Index n = static_cast<Eigen::Index>(cohort.rows.size());
  d.X.resize(n, 4);
  for (Eigen::Index r = 0; r < n; ++r) {
    const CohortRow& row = cohort.rows[static_cast<std::size_t>(r)];
    d.X(r, 0) = 1.0;
    d.X(r, 1) = row.score;
    d.X(r, 2) = row.age;
    d.X(r, 3) = row.gender;
  }
  d.validate();
  return d;
}

namespace {

Eigen::MatrixXd stack_volumes(const std::vector<ScalarVolume>& volumes) {
  if (volumes.empty()) throw ValidationError("no input volumes");
  const GridGeometry geom = volumes.front().geometry();
  for (const auto& v : volumes) check_compatible(geom, v.geometry());
  const Eigen::Index n = static_cast<Eigen::Index>(volumes.size());
  const Eigen::Index nv = static_cast<Eigen::Index>(volumes.front().size());
  Eigen::MatrixXd y(n, nv);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index v = 0; v < nv; ++v)
      y(s, v) = volumes[static_cast<std::size_t>(s)].data[static_cast<std::size_t>(v)];
  return y;
}

struct GlmContext {
  Eigen::MatrixXd pinv;  // (X^T X)^-1 X^T, p x n, via a QR solve
  double c_xtx_inv_c;    // c^T (X^T X)^-1 c
  double dof;            // n - p
};

GlmContext make_context(const DesignMatrix& design) {
  design.validate();
  GlmContext ctx;
  const Eigen::Index n = design.X.rows();
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.X);
  ctx.pinv = qr.solve(Eigen::MatrixXd::Identity(n, n));
  // (X^T X)^-1 = pinv pinv^T, so the contrast variance factor is a norm.
  ctx.c_xtx_inv_c = (ctx.pinv.transpose() * design.contrast).squaredNorm();
  ctx.dof = static_cast<double>(n - design.X.cols());
  return ctx;
}

// Contrast t-statistics for every column of Y under the full model.
Eigen::VectorXd t_statistics(const Eigen::MatrixXd& y, const DesignMatrix& design,
                             const GlmContext& ctx) {
  const Eigen::MatrixXd beta = ctx.pinv * y;                       // p x V
  const Eigen::MatrixXd resid = y - design.X * beta;               // n x V
  const Eigen::VectorXd rss = resid.colwise().squaredNorm();       // V
  const Eigen::VectorXd ctb = beta.transpose() * design.contrast;  // V

  Eigen::VectorXd t(y.cols());
  for (Eigen::Index v = 0; v < y.cols(); ++v) {
    const double sigma2 = rss(v) / ctx.dof;
    const double denom = std::sqrt(sigma2 * ctx.c_xtx_inv_c);
    t(v) = denom > 0.0 ? ctb(v) / denom
                       : (ctb(v) == 0.0 ? 0.0
                                        : std::copysign(
                                              std::numeric_limits<double>::infinity(),
                                              ctb(v)));
  }
  return t;
}

}  // namespace

ScalarVolume FitResult::beta_volume(int column) const {
  ScalarVolume v;
  v.dims = grid.dims;
  v.spacing = grid.spacing;
  v.affine = grid.affine;
  v.data.resize(static_cast<std::size_t>(beta.cols()));
  for (Eigen::Index i = 0; i < beta.cols(); ++i)
    v.data[static_cast<std::size_t>(i)] = static_cast<float>(beta(column, i));
  return v;
}

ScalarVolume FitResult::t_volume() const {
  ScalarVolume v;
  v.dims = grid.dims;
  v.spacing = grid.spacing;
  v.affine = grid.affine;
  v.data.resize(static_cast<std::size_t>(t.size()));
  for (Eigen::Index i = 0; i < t.size(); ++i)
    v.data[static_cast<std::size_t>(i)] = static_cast<float>(t(i));
  return v;
}

FitResult fit_voxelwise(const std::vector<ScalarVolume>& volumes,
                        const DesignMatrix& design) {
  const Eigen::MatrixXd y = stack_volumes(volumes);
  if (y.rows() != design.X.rows())
    throw ValidationError("number of volumes (" + std::to_string(y.rows()) +
                          ") must match design rows (" + std::to_string(design.X.rows()) + ")");
  const GlmContext ctx = make_context(design);

  FitResult result;
  result.grid = volumes.front().geometry();
  result.beta = ctx.pinv * y;  // p x V
  result.t = t_statistics(y, design, ctx);
  return result;
}

std::vector<double> permutation_max_t(const std::vector<ScalarVolume>& volumes,
                                      const DesignMatrix& design, int n_perm,
                                      std::uint64_t rng_seed, bool two_sided) {
  if (n_perm < 100) throw ValidationError("permutation count must be >= 100");
  const Eigen::MatrixXd y = stack_volumes(volumes);
  if (y.rows() != design.X.rows())
    throw ValidationError("number of volumes must match design rows");
  const GlmContext ctx = make_context(design);

  // Nuisance partition: columns with zero contrast weight.
  std::vector<Eigen::Index> nuisance_cols;
  for (Eigen::Index c = 0; c < design.X.cols(); ++c)
    if (design.contrast(c) == 0.0) nuisance_cols.push_back(c);
  if (nuisance_cols.size() == static_cast<std::size_t>(design.X.cols()))
    throw ValidationError("contrast vector is all zeros");

  Eigen::MatrixXd z(y.rows(), static_cast<Eigen::Index>(nuisance_cols.size()));
  for (std::size_t c = 0; c < nuisance_cols.size(); ++c)
    z.col(static_cast<Eigen::Index>(c)) = design.X.col(nuisance_cols[c]);

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> zqr(z);
  const Eigen::MatrixXd hz =
      z * zqr.solve(Eigen::MatrixXd::Identity(y.rows(), y.rows()));  // n x n
  const Eigen::MatrixXd fitted = hz * y;                             // nuisance fit
  const Eigen::MatrixXd resid = y - fitted;                          // nuisance residuals

  const Eigen::Index n = y.rows();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::mt19937_64 rng(rng_seed);
  // Deterministic uniform index draw (avoids distribution implementation
  // differences across standard libraries).
  const auto draw = [&rng](int bound) {
    return static_cast<int>(rng() % static_cast<std::uint64_t>(bound));
  };

  std::vector<double> max_t;
  max_t.reserve(static_cast<std::size_t>(n_perm));
  Eigen::MatrixXd y_perm(y.rows(), y.cols());
  for (int p = 0; p < n_perm; ++p) {
    if (p == 0) {
      for (Eigen::Index r = 0; r < n; ++r) perm[static_cast<std::size_t>(r)] = static_cast<int>(r);
    } else {
      // Fisher-Yates
      for (Eigen::Index r = 0; r < n; ++r) perm[static_cast<std::size_t>(r)] = static_cast<int>(r);
      for (int r = static_cast<int>(n) - 1; r > 0; --r)
        std::swap(perm[static_cast<std::size_t>(r)],
                  perm[static_cast<std::size_t>(draw(r + 1))]);
    }
    for (Eigen::Index r = 0; r < n; ++r)
      y_perm.row(r) = resid.row(perm[static_cast<std::size_t>(r)]) + fitted.row(r);

    const Eigen::VectorXd t = t_statistics(y_perm, design, ctx);
    max_t.push_back(two_sided ? t.cwiseAbs().maxCoeff() : t.maxCoeff());
  }
  return max_t;
}

double permutation_fwe(const std::vector<ScalarVolume>& volumes,
                       const DesignMatrix& design, int n_perm, double alpha,
                       std::uint64_t rng_seed, bool two_sided) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ValidationError("alpha must lie in (0,1]");
  const std::vector<double> samples =
      permutation_max_t(volumes, design, n_perm, rng_seed, two_sided);
  return percentile(samples, 1.0 - alpha);
}

ClusterResult cluster_extent(const ScalarVolume& t_map, double threshold,
                             int min_extent) {
  if (min_extent < 1) throw ValidationError("cluster extent threshold must be >= 1");
  const int nx = t_map.dims[0], ny = t_map.dims[1], nz = t_map.dims[2];
  const float thr = static_cast<float>(threshold);

  ClusterResult result;
  result.significant_mask = BinaryMask::zeros(t_map.dims, t_map.spacing);
  result.significant_mask.affine = t_map.affine;

  std::vector<std::uint8_t> visited(t_map.size(), 0);
  std::vector<std::size_t> stack, members;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t start = t_map.index(i, j, k);
        if (visited[start] || t_map.data[start] < thr) continue;

        members.clear();
        stack.assign(1, start);
        visited[start] = 1;
        while (!stack.empty()) {
          const std::size_t cur = stack.back();
          stack.pop_back();
          members.push_back(cur);
          const int ci = static_cast<int>(cur % nx);
          const int cj = static_cast<int>((cur / nx) % ny);
          const int ck = static_cast<int>(cur / (static_cast<std::size_t>(nx) * ny));
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const int qi = ci + dx, qj = cj + dy, qk = ck + dz;
                if (!t_map.in_bounds(qi, qj, qk)) continue;
                const std::size_t q = t_map.index(qi, qj, qk);
                if (visited[q] || t_map.data[q] < thr) continue;
                visited[q] = 1;
                stack.push_back(q);
              }
        }

        if (members.size() < static_cast<std::size_t>(min_extent)) continue;
        Cluster cluster;
        cluster.size = members.size();
        std::size_t peak = members.front();
        for (std::size_t m : members) {
          if (t_map.data[m] > t_map.data[peak] ||
              (t_map.data[m] == t_map.data[peak] && m < peak))
            peak = m;
          result.significant_mask.data[m] = 1;
        }
        cluster.peak_t = t_map.data[peak];
        cluster.peak = {static_cast<int>(peak % nx),
                        static_cast<int>((peak / nx) % ny),
                        static_cast<int>(peak / (static_cast<std::size_t>(nx) * ny))};
        result.clusters.push_back(cluster);
      }

  std::sort(result.clusters.begin(), result.clusters.end(),
            [](const Cluster& a, const Cluster& b) {
              if (a.peak_t != b.peak_t) return a.peak_t > b.peak_t;
              return a.peak < b.peak;
            });
  return result;
}

void save_clusters_csv(const ClusterResult& result, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << "cluster,size_voxels,peak_t,peak_i,peak_j,peak_k\n";
  for (std::size_t c = 0; c < result.clusters.size(); ++c) {
    const Cluster& cl = result.clusters[c];
    f << (c + 1) << "," << cl.size << "," << cl.peak_t << "," << cl.peak[0] << ","
      << cl.peak[1] << "," << cl.peak[2] << "\n";
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace ppm
