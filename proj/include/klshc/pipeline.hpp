#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "klshc/dataset.hpp"
#include "klshc/evaluation.hpp"
#include "klshc/hash_cluster.hpp"
#include "klshc/klsh.hpp"
#include "klshc/kmeans.hpp"
#include "klshc/metric.hpp"

namespace klshc {

enum class Method { kmeans, kmeans_dl, agglo_klsh, agglo_klsh_dl, agglo_exact };

const char* to_string(Method m);
Method parse_method(const std::string& s);
bool uses_metric_learning(Method m);

struct PipelineParams {
  /// Cluster count; 0 means the number of distinct classes in the data.
  std::size_t k = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  // Hashing.
  std::size_t bits = 32;
  std::size_t anchors = 300;
  std::size_t selector = 30;
  SigmaMode sigma;

  // Agglomerative stop rule; unset means target k.
  std::optional<StopRule> stop;

  // Semi-supervised constraints: `per_class` labeled rows from each of the
  // `labeled_classes`; empty means the lower half (rounded up) of the classes
  // present.
  std::set<int> labeled_classes;
  std::size_t per_class = 20;
  MetricLearnConfig metric;

  // K-Means.
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  int kmeans_restarts = 1;
};

struct PipelineOutput {
  std::vector<std::size_t> assignment;
  std::optional<MetricLearnResult> metric;
  std::optional<KlshModel> model;
  std::optional<HashTable> table;
  std::optional<Dendrogram> dendrogram;
  std::size_t k = 0;
  double seconds = 0.0;  // pipeline only (metric learning, hashing, clustering)
};

/// Classes used for constraints when `params.labeled_classes` is empty.
std::set<int> default_labeled_classes(const Dataset& ds);

PipelineOutput run_pipeline(Method method, const Dataset& ds, const PipelineParams& params);

struct TimingOptions {
  int warmup = 0;
  int repeats = 1;
};

/// Runs the pipeline (warm-up runs excluded, median wall time over repeats)
/// and scores it against the dataset labels.
EvalReport timed_run(Method method, const Dataset& ds, const PipelineParams& params,
                     const TimingOptions& timing = {});

/// Scores an assignment against labels and fills the per-class fields of `report`.
void score_into(EvalReport& report, const std::vector<std::size_t>& assignment, const Dataset& ds);

}  // namespace klshc
