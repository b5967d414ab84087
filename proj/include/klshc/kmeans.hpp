#pragma once

#include <cstdint>
#include <vector>

#include "klshc/common.hpp"
#include "klshc/dataset.hpp"
#include "klshc/metric.hpp"

namespace klshc {

struct KMeansConfig {
  std::size_t k = 1;
  int max_iters = 100;
  /// Stop once no centroid moves more than this (Euclidean).
  double tol = 1e-6;
  std::uint64_t seed = 0;
  int restarts = 1;
  unsigned threads = 1;
};

struct KMeansResult {
  std::vector<std::size_t> assignment;
  Matrix centroids;
  int iterations = 0;
  double wcss = 0.0;
  /// WCSS after every assignment step of the winning restart.
  std::vector<double> wcss_history;
};

/// Lloyd's algorithm from a seeded uniform sample of distinct rows. An empty
/// cluster is re-seeded to the point farthest from its former centroid. The
/// restart with the lowest final WCSS wins.
KMeansResult kmeans(const Dataset& ds, const KMeansConfig& cfg);

/// kmeans on transform(ds, a).
KMeansResult kmeans_with_metric(const Dataset& ds, const MetricMatrix& a, const KMeansConfig& cfg);

}  // namespace klshc
