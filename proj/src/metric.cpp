#include "klshc/metric.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace klshc {

namespace {

bool off_diagonal_zero(const Matrix& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (i != j && a(i, j) != 0.0) return false;
  return true;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_of(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(m), Eigen::ComputeEigenvectors);
  require(es.info() == Eigen::Success, ErrorKind::numerical, "eigensolver failed");
  return es;
}

}  // namespace

MetricMatrix::MetricMatrix(Matrix a) : a_(std::move(a)) {
  require(a_.rows() == a_.cols() && a_.rows() > 0, ErrorKind::parameter,
          "metric matrix must be square and non-empty");
  require(a_.allFinite(), ErrorKind::numerical, "metric matrix has non-finite entries");
  const double scale = std::max(1.0, a_.cwiseAbs().maxCoeff());
  require((a_ - a_.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol * scale,
          ErrorKind::numerical, "metric matrix is not symmetric");
  diagonal_ = off_diagonal_zero(a_);
  require(min_eigenvalue() >= kEigenTol, ErrorKind::numerical,
          "metric matrix is not positive semi-definite");
}

MetricMatrix MetricMatrix::identity(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  return MetricMatrix(Matrix::Identity(n, n));
}

MetricMatrix MetricMatrix::diagonal(const Vector& diag) {
  return MetricMatrix(Matrix(diag.asDiagonal()));
}

double MetricMatrix::min_eigenvalue() const {
  if (diagonal_) return a_.diagonal().minCoeff();
  return eigen_of(a_).eigenvalues().minCoeff();
}

Matrix MetricMatrix::factor() const {
  if (diagonal_) return Matrix(a_.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal());
  const auto es = eigen_of(a_);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

const char* to_string(MetricMode mode) {
  return mode == MetricMode::diagonal ? "diagonal" : "full";
}

MetricMode parse_metric_mode(const std::string& s) {
  if (s == "diagonal") return MetricMode::diagonal;
  if (s == "full") return MetricMode::full;
  throw Error(ErrorKind::parameter, "unknown metric mode '" + s + "'");
}

double mahalanobis(const Vector& x, const Vector& y, const MetricMatrix& a) {
  require(x.size() == y.size() && static_cast<std::size_t>(x.size()) == a.dim(),
          ErrorKind::parameter, "dimension mismatch");
  const Vector delta = x - y;
  double r;
  if (a.is_diagonal()) {
    r = (delta.array().square() * a.matrix().diagonal().array()).sum();
  } else {
    r = delta.dot(a.matrix() * delta);
  }
  require(r >= -1e-12, ErrorKind::numerical, "negative squared distance");
  return std::sqrt(std::max(r, 0.0));
}

namespace {

struct PairDiffs {
  Matrix sim;  // one difference vector per row
  Matrix dis;
};

Matrix diffs_of(const Dataset& ds, const std::vector<IndexPair>& pairs) {
  Matrix out(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(ds.d()));
  for (std::size_t p = 0; p < pairs.size(); ++p)
    out.row(static_cast<Eigen::Index>(p)) = ds.row(pairs[p].first) - ds.row(pairs[p].second);
  return out;
}

PairDiffs pair_diffs(const Dataset& ds, const ConstraintSet& cs) {
  cs.validate(ds.n());
  require(!cs.dissimilar.empty(), ErrorKind::configuration, "dissimilar set is empty");
  return {diffs_of(ds, cs.similar), diffs_of(ds, cs.dissimilar)};
}

// Squared A-distance of every row of `diffs`.
Vector squared_distances(const Matrix& diffs, const Matrix& a, bool diagonal) {
  if (diffs.rows() == 0) return Vector(0);
  if (diagonal) return diffs.array().square().matrix() * a.diagonal();
  return (diffs * a).cwiseProduct(diffs).rowwise().sum();
}

struct Terms {
  double sim_sum;   // sum of squared distances over S
  Vector dis_dist;  // distance per D pair
  double dis_sum;
  double value;
};

Terms evaluate(const PairDiffs& pd, const Matrix& a, bool diagonal) {
  Terms t;
  t.sim_sum = squared_distances(pd.sim, a, diagonal).sum();
  t.dis_dist = squared_distances(pd.dis, a, diagonal).cwiseMax(0.0).cwiseSqrt();
  t.dis_sum = t.dis_dist.sum();
  t.value = t.dis_sum > 0 ? t.sim_sum - std::log(t.dis_sum)
                          : std::numeric_limits<double>::infinity();
  return t;
}

Matrix full_gradient(const PairDiffs& pd, const Terms& t) {
  Matrix g = pd.sim.transpose() * pd.sim;
  Vector w(t.dis_dist.size());
  for (Eigen::Index p = 0; p < w.size(); ++p)
    w(p) = t.dis_dist(p) > 0 ? 1.0 / (2.0 * t.dis_dist(p) * t.dis_sum) : 0.0;
  g.noalias() -= pd.dis.transpose() * w.asDiagonal() * pd.dis;
  return g;
}

// Rescales A so that sum_D ||.||_A >= 1 (or == 1 when `exact`). Distances scale with sqrt(c).
void make_feasible(Matrix& a, const PairDiffs& pd, bool diagonal, bool exact = false) {
  const double dsum = squared_distances(pd.dis, a, diagonal).cwiseMax(0.0).cwiseSqrt().sum();
  require(dsum > 0, ErrorKind::degenerate_constraints,
          "all dissimilar pairs have zero distance under A");
  if (dsum < 1.0 || exact) a *= 1.0 / (dsum * dsum);
}

bool separates(const PairDiffs& pd, const Matrix& a, bool diagonal) {
  return squared_distances(pd.dis, a, diagonal).maxCoeff() > 0.0;
}

std::vector<IndexPair> cap_pairs(const std::vector<IndexPair>& pairs, std::size_t cap,
                                 std::uint64_t seed) {
  if (pairs.size() <= cap) return pairs;
  Rng rng(seed);
  auto pick = rng.sample_without_replacement(pairs.size(), cap);
  std::sort(pick.begin(), pick.end());
  std::vector<IndexPair> out;
  out.reserve(cap);
  for (std::size_t i : pick) out.push_back(pairs[i]);
  return out;
}

constexpr int kMaxHalvings = 50;
constexpr double kStationaryTol = 1e-10;

bool small_change(double before, double after, double tol) {
  return std::abs(before - after) / std::max(1.0, std::abs(before)) < tol;
}

MetricLearnResult learn_diagonal(const PairDiffs& pd, const MetricLearnConfig& cfg) {
  const Eigen::Index d = pd.dis.cols();
  const Vector sim_col = pd.sim.rows() ? Vector(pd.sim.array().square().colwise().sum().transpose())
                                       : Vector(Vector::Zero(d));
  const Matrix dis_sq = pd.dis.array().square().matrix();

  Matrix a = Matrix::Identity(d, d);
  make_feasible(a, pd, true, true);
  Vector diag = a.diagonal();
  Terms cur = evaluate(pd, a, true);

  MetricLearnResult res{MetricMatrix::identity(static_cast<std::size_t>(d)), MetricMode::diagonal,
                        {cur.value}, 0, false, false};
  for (int it = 0; it < cfg.max_iters; ++it) {
    // Gradient and Hessian with respect to the diagonal entries.
    Vector inv2d(cur.dis_dist.size()), hw(cur.dis_dist.size());
    for (Eigen::Index p = 0; p < inv2d.size(); ++p) {
      const double dist = cur.dis_dist(p);
      inv2d(p) = dist > 0 ? 1.0 / (2.0 * dist) : 0.0;
      hw(p) = dist > 0 ? 1.0 / (4.0 * dist * dist * dist * cur.dis_sum) : 0.0;
    }
    const Vector u = dis_sq.transpose() * inv2d;
    const Vector grad = sim_col - u / cur.dis_sum;
    Matrix hess = dis_sq.transpose() * hw.asDiagonal() * dis_sq;
    hess.noalias() += u * u.transpose() / (cur.dis_sum * cur.dis_sum);

    // Coordinates pinned at the zero bound with a positive gradient stay fixed.
    std::vector<Eigen::Index> free;
    for (Eigen::Index k = 0; k < d; ++k)
      if (!(diag(k) <= 0.0 && grad(k) > 0.0)) free.push_back(k);
    Vector dir = Vector::Zero(d);
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd hf(nf, nf);
      Vector gf(nf);
      for (Eigen::Index i = 0; i < nf; ++i) {
        gf(i) = grad(free[i]);
        for (Eigen::Index j = 0; j < nf; ++j) hf(i, j) = hess(free[i], free[j]);
      }
      const double ridge = 1e-10 * std::max(hf.diagonal().maxCoeff(), 1e-300);
      hf.diagonal().array() += ridge;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hf);
      Vector step = ldlt.solve(-gf);
      if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(gf) >= 0) step = -gf;
      for (Eigen::Index i = 0; i < nf; ++i) dir(free[i]) = step(i);
    }

    bool accepted = false;
    double t = cfg.step_init;
    for (int h = 0; h < kMaxHalvings && !accepted; ++h, t *= 0.5) {
      Matrix cand = Matrix((diag + t * dir).cwiseMax(0.0).asDiagonal());
      if (cand.diagonal().maxCoeff() <= 0.0 || !separates(pd, cand, true)) continue;
      make_feasible(cand, pd, true);
      Terms next = evaluate(pd, cand, true);
      if (next.value < cur.value) {
        accepted = true;
        const double before = cur.value;
        diag = cand.diagonal();
        cur = std::move(next);
        res.history.push_back(cur.value);
        res.iterations = it + 1;
        if (small_change(before, cur.value, cfg.tolerance)) res.converged = true;
      }
    }
    if (!accepted) {
      const double slope = grad.dot(dir);
      res.converged = -slope <= kStationaryTol * std::max(1.0, std::abs(cur.value));
      res.line_search_failed = !res.converged;
      break;
    }
    if (res.converged) break;
  }
  res.metric = MetricMatrix::diagonal(diag);
  return res;
}

MetricLearnResult learn_full(const PairDiffs& pd, const MetricLearnConfig& cfg) {
  const Eigen::Index d = pd.dis.cols();
  Matrix a = Matrix::Identity(d, d);
  make_feasible(a, pd, false, true);
  Terms cur = evaluate(pd, a, false);
  MetricLearnResult res{MetricMatrix::identity(static_cast<std::size_t>(d)), MetricMode::full,
                        {cur.value}, 0, false, false};

  // Steps are measured relative to |A| / |grad|, so rescaling the features
  // rescales every iterate by the same factor.
  double rel = cfg.step_init;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Matrix grad = full_gradient(pd, cur);
    const double gnorm = grad.norm();
    if (gnorm == 0.0) {
      res.converged = true;
      break;
    }
    const double unit = a.norm() / gnorm;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings && !accepted; ++h, rel *= 0.5) {
      Matrix cand = project_psd(a - rel * unit * grad).matrix();
      if (cand.cwiseAbs().maxCoeff() <= 0.0 || !separates(pd, cand, false)) continue;
      make_feasible(cand, pd, false);
      Terms next = evaluate(pd, cand, false);
      if (next.value < cur.value) {
        accepted = true;
        const double before = cur.value;
        a = std::move(cand);
        cur = std::move(next);
        res.history.push_back(cur.value);
        res.iterations = it + 1;
        if (small_change(before, cur.value, cfg.tolerance)) res.converged = true;
      }
    }
    if (!accepted) {
      const Matrix dir = project_psd(a - unit * grad).matrix() - a;
      const double slope = (grad.array() * dir.array()).sum();
      res.converged = -slope <= kStationaryTol * std::max(1.0, std::abs(cur.value));
      res.line_search_failed = !res.converged;
      break;
    }
    if (res.converged) break;
    rel *= 4.0;  // undo the last halving and try a longer step next time
  }
  res.metric = MetricMatrix(project_psd(a).matrix());
  return res;
}

}  // namespace

double objective(const MetricMatrix& a, const Dataset& ds, const ConstraintSet& cs) {
  require(a.dim() == ds.d(), ErrorKind::parameter, "metric dimension mismatch");
  const PairDiffs pd = pair_diffs(ds, cs);
  const Terms t = evaluate(pd, a.matrix(), a.is_diagonal());
  require(t.dis_sum > 0, ErrorKind::degenerate_constraints,
          "sum of dissimilar distances is zero");
  return t.value;
}

Matrix objective_gradient(const MetricMatrix& a, const Dataset& ds, const ConstraintSet& cs) {
  require(a.dim() == ds.d(), ErrorKind::parameter, "metric dimension mismatch");
  const PairDiffs pd = pair_diffs(ds, cs);
  const Terms t = evaluate(pd, a.matrix(), a.is_diagonal());
  require(t.dis_sum > 0, ErrorKind::degenerate_constraints,
          "sum of dissimilar distances is zero");
  return full_gradient(pd, t);
}

MetricLearnResult learn_metric(const Dataset& ds, const ConstraintSet& cs,
                               const MetricLearnConfig& cfg) {
  require(cfg.max_iters >= 1, ErrorKind::parameter, "max_iters must be >= 1");
  require(cfg.tolerance > 0, ErrorKind::parameter, "tolerance must be > 0");
  require(cfg.step_init > 0, ErrorKind::parameter, "step_init must be > 0");
  require(cfg.max_pairs >= 1, ErrorKind::parameter, "max_pairs must be >= 1");
  const MetricMode mode = cfg.mode.value_or(ds.d() > 32 ? MetricMode::diagonal : MetricMode::full);
  require(mode != MetricMode::full || ds.d() <= cfg.full_dim_cap, ErrorKind::parameter,
          "dimension " + std::to_string(ds.d()) + " exceeds the full-matrix cap");

  ConstraintSet capped{cap_pairs(cs.similar, cfg.max_pairs, Rng::derive(cfg.seed, 0)),
                       cap_pairs(cs.dissimilar, cfg.max_pairs, Rng::derive(cfg.seed, 1))};
  const PairDiffs pd = pair_diffs(ds, capped);
  return mode == MetricMode::diagonal ? learn_diagonal(pd, cfg) : learn_full(pd, cfg);
}

MetricMatrix project_psd(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorKind::parameter, "matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale, ErrorKind::parameter,
          "matrix is not symmetric");
  if (off_diagonal_zero(m)) return MetricMatrix(Matrix(m.diagonal().cwiseMax(0.0).asDiagonal()));
  const auto es = eigen_of(m);
  Vector clamped = es.eigenvalues().cwiseMax(0.0);
  // Reconstruction rounds clamped eigenvalues to about +-eps * |A|; lifting them
  // by a few ulps keeps the result numerically PSD at any scale.
  const double floor = 8.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(m.rows()) *
                       std::max(1.0, clamped.maxCoeff());
  if (clamped.minCoeff() < floor) clamped = clamped.array() + floor;
  Matrix out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  out = (0.5 * (out + out.transpose())).eval();
  return MetricMatrix(std::move(out));
}

Dataset transform(const Dataset& ds, const MetricMatrix& a) {
  require(a.dim() == ds.d(), ErrorKind::parameter, "metric dimension mismatch");
  if (a.is_diagonal()) {
    const Vector root = a.matrix().diagonal().cwiseMax(0.0).cwiseSqrt();
    return Dataset(ds.features() * root.asDiagonal(), ds.labels());
  }
  return Dataset(ds.features() * a.factor(), ds.labels());
}

void save_metric_csv(const MetricMatrix& a, const std::filesystem::path& path,
                     const std::string& header) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "# " << header << '\n';
  std::array<char, 64> buf;
  const Matrix& m = a.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      auto r = std::to_chars(buf.data(), buf.data() + buf.size(), m(i, j));
      out.write(buf.data(), r.ptr - buf.data());
    }
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

MetricMatrix load_metric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      require(ec == std::errc(), ErrorKind::format, "bad metric entry '" + cell + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  const auto d = static_cast<Eigen::Index>(rows.size());
  require(d > 0, ErrorKind::format, "empty metric file");
  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    require(static_cast<Eigen::Index>(rows[i].size()) == d, ErrorKind::format,
            "metric file is not square");
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[i][j];
  }
  return MetricMatrix(std::move(m));
}

}  // namespace klshc
