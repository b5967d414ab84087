#include "klshc/kmeans.hpp"

namespace klshc {

namespace {

// Nearest centroid per row (lowest index on ties) and the resulting WCSS.
double assign(const Matrix& x, const Matrix& centroids, std::vector<std::size_t>& labels,
              std::vector<double>& cost, unsigned threads) {
  parallel_for(static_cast<std::size_t>(x.rows()), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = x.row(static_cast<Eigen::Index>(i));
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double dist = (centroids.row(c) - row).squaredNorm();
        if (dist < best) {
          best = dist;
          arg = static_cast<std::size_t>(c);
        }
      }
      labels[i] = arg;
      cost[i] = best;
    }
  });
  double total = 0.0;
  for (double c : cost) total += c;
  return total;
}

KMeansResult lloyd(const Matrix& x, const KMeansConfig& cfg, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<Eigen::Index>(cfg.k);
  Rng rng(seed);
  const auto init = rng.sample_without_replacement(n, cfg.k);
  KMeansResult res;
  res.centroids = Matrix(k, x.cols());
  for (Eigen::Index c = 0; c < k; ++c) res.centroids.row(c) = x.row(static_cast<Eigen::Index>(init[static_cast<std::size_t>(c)]));

  res.assignment.assign(n, 0);
  std::vector<double> cost(n, 0.0);
  for (int it = 0; it < cfg.max_iters; ++it) {
    res.wcss_history.push_back(assign(x, res.centroids, res.assignment, cost, cfg.threads));
    res.iterations = it + 1;

    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<std::size_t> counts(cfg.k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(res.assignment[i])) += x.row(static_cast<Eigen::Index>(i));
      ++counts[res.assignment[i]];
    }
    Matrix next(k, x.cols());
    std::vector<bool> taken(n, false);
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      double far = -1.0;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        const double dist = (x.row(static_cast<Eigen::Index>(i)) - res.centroids.row(c)).squaredNorm();
        if (dist > far) {
          far = dist;
          arg = i;
        }
      }
      taken[arg] = true;
      next.row(c) = x.row(static_cast<Eigen::Index>(arg));
    }
    const double shift = (next - res.centroids).rowwise().norm().maxCoeff();
    res.centroids = std::move(next);
    if (shift <= cfg.tol) break;
  }
  res.wcss = assign(x, res.centroids, res.assignment, cost, cfg.threads);
  res.wcss_history.push_back(res.wcss);
  return res;
}

}  // namespace

KMeansResult kmeans(const Dataset& ds, const KMeansConfig& cfg) {
  require(cfg.k >= 1, ErrorKind::parameter, "k must be >= 1");
  require(cfg.k <= ds.n(), ErrorKind::parameter,
          "k=" + std::to_string(cfg.k) + " exceeds n=" + std::to_string(ds.n()));
  require(cfg.max_iters >= 1, ErrorKind::parameter, "max_iters must be >= 1");
  require(cfg.tol >= 0, ErrorKind::parameter, "tol must be >= 0");
  require(cfg.restarts >= 1, ErrorKind::parameter, "restarts must be >= 1");
  KMeansResult best;
  for (int r = 0; r < cfg.restarts; ++r) {
    KMeansResult run = lloyd(ds.features(), cfg, Rng::derive(cfg.seed, static_cast<std::uint64_t>(r)));
    if (r == 0 || run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

KMeansResult kmeans_with_metric(const Dataset& ds, const MetricMatrix& a, const KMeansConfig& cfg) {
  return kmeans(transform(ds, a), cfg);
}

}  // namespace klshc
