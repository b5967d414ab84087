// Independent reference implementations used only by the tests. None of these
// call into the code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "klshc/common.hpp"

namespace oracle {

struct MergeStep {
  std::size_t left, right, new_id;
  double height;
};

struct AggloResult {
  std::vector<MergeStep> merges;
  std::vector<std::size_t> assignment;
};

/// Brute-force weighted average linkage on integer distances and integer
/// weights. Every step rescans all cluster pairs and recomputes each linkage
/// from the member items; comparisons are exact (128-bit cross products).
/// Ties go to the lowest (min item of cluster A, min item of cluster B).
inline AggloResult brute_force_agglomerative(const std::vector<std::vector<long long>>& dist,
                                             const std::vector<long long>& weight,
                                             std::size_t target_k) {
  const std::size_t c = dist.size();
  struct Cluster {
    std::size_t id;
    std::vector<std::size_t> items;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < c; ++i) clusters.push_back({i, {i}});
  auto linkage = [&](const Cluster& a, const Cluster& b) {
    __int128 sum = 0, wa = 0, wb = 0;
    for (auto i : a.items) wa += weight[i];
    for (auto j : b.items) wb += weight[j];
    for (auto i : a.items)
      for (auto j : b.items) sum += static_cast<__int128>(weight[i]) * weight[j] * dist[i][j];
    return std::pair{sum, wa * wb};
  };
  auto min_item = [](const Cluster& a) { return *std::min_element(a.items.begin(), a.items.end()); };

  AggloResult out;
  std::size_t next_id = c;
  while (clusters.size() > target_k) {
    std::size_t bi = 0, bj = 0;
    __int128 bs = -1, bw = 1;
    std::size_t bk1 = 0, bk2 = 0;
    for (std::size_t x = 0; x < clusters.size(); ++x)
      for (std::size_t y = 0; y < clusters.size(); ++y) {
        if (x == y) continue;
        const std::size_t kx = min_item(clusters[x]), ky = min_item(clusters[y]);
        if (kx > ky) continue;  // each unordered pair once, lower key first
        auto [s, w] = linkage(clusters[x], clusters[y]);
        bool better;
        if (bs < 0) better = true;
        else if (s * bw != bs * w) better = s * bw < bs * w;
        else better = std::pair{kx, ky} < std::pair{bk1, bk2};
        if (better) {
          bs = s; bw = w; bi = x; bj = y; bk1 = kx; bk2 = ky;
        }
      }
    out.merges.push_back({clusters[bi].id, clusters[bj].id, next_id,
                          static_cast<double>(static_cast<long double>(bs) / static_cast<long double>(bw))});
    Cluster merged{next_id++, clusters[bi].items};
    merged.items.insert(merged.items.end(), clusters[bj].items.begin(), clusters[bj].items.end());
    const std::size_t hi = std::max(bi, bj), lo = std::min(bi, bj);
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(hi));
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(lo));
    clusters.push_back(std::move(merged));
  }
  std::sort(clusters.begin(), clusters.end(),
            [&](const Cluster& a, const Cluster& b) { return min_item(a) < min_item(b); });
  out.assignment.assign(c, 0);
  for (std::size_t l = 0; l < clusters.size(); ++l)
    for (auto i : clusters[l].items) out.assignment[i] = l;
  return out;
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) r[order[q]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation (Pearson on average ranks).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

/// Minimum WCSS over every split of the rows into two non-empty groups.
inline double best_two_partition_wcss(const klshc::Matrix& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
    if (mask & 1) continue;  // symmetry: row 0 always in group 0
    double total = 0;
    for (int g = 0; g < 2; ++g) {
      klshc::Vector mean = klshc::Vector::Zero(x.cols());
      int count = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1) == static_cast<std::uint64_t>(g)) {
          mean += x.row(static_cast<Eigen::Index>(i)).transpose();
          ++count;
        }
      mean /= count;
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1) == static_cast<std::uint64_t>(g))
          total += (x.row(static_cast<Eigen::Index>(i)).transpose() - mean).squaredNorm();
    }
    best = std::min(best, total);
  }
  return best;
}

/// Central finite-difference derivative of f with respect to entry (r, c) of A.
inline double central_difference(const std::function<double(const klshc::Matrix&)>& f,
                                 const klshc::Matrix& a, Eigen::Index r, Eigen::Index c, double h) {
  klshc::Matrix plus = a, minus = a;
  plus(r, c) += h;
  minus(r, c) -= h;
  return (f(plus) - f(minus)) / (2 * h);
}

/// Direct evaluation of the KLSH sign sum for one point.
inline std::vector<bool> naive_hash(const klshc::Matrix& anchors, const klshc::Matrix& weights,
                                    const klshc::Matrix& metric, double sigma,
                                    const klshc::Vector& x) {
  const Eigen::Index p = anchors.rows();
  std::vector<double> k(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    const klshc::Vector diff = x - anchors.row(i).transpose();
    double q = 0;
    for (Eigen::Index a = 0; a < diff.size(); ++a)
      for (Eigen::Index b = 0; b < diff.size(); ++b) q += diff(a) * metric(a, b) * diff(b);
    k[static_cast<std::size_t>(i)] = std::exp(-q / (sigma * sigma));
  }
  std::vector<bool> bits;
  for (Eigen::Index j = 0; j < weights.rows(); ++j) {
    double s = 0;
    for (Eigen::Index i = 0; i < p; ++i) s += weights(j, i) * k[static_cast<std::size_t>(i)];
    bits.push_back(s >= 0);
  }
  return bits;
}

}  // namespace oracle
