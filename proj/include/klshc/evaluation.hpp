#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "klshc/common.hpp"

namespace klshc {

/// classes x clusters contingency counts. Row c is the class `classes[c]`.
struct ConfusionMatrix {
  std::vector<int> classes;
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> counts;

  long long total() const { return counts.sum(); }
};

ConfusionMatrix confusion(const std::vector<std::size_t>& pred, const std::vector<int>& truth);

struct ClassScore {
  int cls;
  double precision;
  double recall;
  std::size_t cluster;  // the max-count cluster the class was mapped to
};

struct PrecisionRecall {
  std::vector<ClassScore> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
};

/// Each class is scored against its max-count cluster (ties: lowest cluster):
/// precision = count / column sum, recall = count / row sum. Macro values are
/// unweighted means over classes. A cluster may serve several classes.
PrecisionRecall precision_recall(const ConfusionMatrix& cm);

struct EvalReport {
  std::string method;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t classes = 0;
  std::size_t bits = 0;
  std::size_t p = 0;
  std::size_t t = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<ClassScore> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double wall_time_seconds = 0.0;
  /// Remaining settings needed to reproduce the run.
  nlohmann::json config = nlohmann::json::object();
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
void save_report(const EvalReport& r, const std::filesystem::path& path);

/// One row per report in the column layout of the comparison tables:
/// method,n,classes,bits,precision,recall,time.
void save_summary_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

}  // namespace klshc
