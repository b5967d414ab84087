#include "klshc/evaluation.hpp"

#include <fstream>
#include <map>

#include "klshc/dataset.hpp"

namespace klshc {

ConfusionMatrix confusion(const std::vector<std::size_t>& pred, const std::vector<int>& truth) {
  require(pred.size() == truth.size(), ErrorKind::parameter,
          "prediction length " + std::to_string(pred.size()) + " != truth length " +
              std::to_string(truth.size()));
  std::map<int, Eigen::Index> row_of;
  std::size_t clusters = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0, ErrorKind::evaluation, "truth labels must be present");
    row_of.emplace(truth[i], 0);
    clusters = std::max(clusters, pred[i] + 1);
  }
  ConfusionMatrix cm;
  for (auto& [cls, row] : row_of) {
    row = static_cast<Eigen::Index>(cm.classes.size());
    cm.classes.push_back(cls);
  }
  cm.counts.setZero(static_cast<Eigen::Index>(cm.classes.size()), static_cast<Eigen::Index>(clusters));
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++cm.counts(row_of[truth[i]], static_cast<Eigen::Index>(pred[i]));
  return cm;
}

PrecisionRecall precision_recall(const ConfusionMatrix& cm) {
  require(cm.counts.rows() == static_cast<Eigen::Index>(cm.classes.size()), ErrorKind::evaluation,
          "class list does not match the count rows");
  PrecisionRecall out;
  if (cm.classes.empty()) return out;
  for (Eigen::Index c = 0; c < cm.counts.rows(); ++c) {
    const long long row_sum = cm.counts.row(c).sum();
    require(row_sum > 0, ErrorKind::evaluation,
            "class " + std::to_string(cm.classes[static_cast<std::size_t>(c)]) + " has no instances");
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < cm.counts.cols(); ++g)
      if (cm.counts(c, g) > cm.counts(c, best)) best = g;
    const auto hit = static_cast<double>(cm.counts(c, best));
    const auto col_sum = static_cast<double>(cm.counts.col(best).sum());
    out.per_class.push_back({cm.classes[static_cast<std::size_t>(c)], hit / col_sum,
                             hit / static_cast<double>(row_sum), static_cast<std::size_t>(best)});
    out.macro_precision += out.per_class.back().precision;
    out.macro_recall += out.per_class.back().recall;
  }
  out.macro_precision /= static_cast<double>(out.per_class.size());
  out.macro_recall /= static_cast<double>(out.per_class.size());
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& s : r.per_class)
    per_class.push_back({{"class", s.cls}, {"precision", s.precision}, {"recall", s.recall}, {"cluster", s.cluster}});
  return {{"method", r.method},
          {"n", r.n},
          {"d", r.d},
          {"classes", r.classes},
          {"bits", r.bits},
          {"p", r.p},
          {"t", r.t},
          {"sigma", r.sigma},
          {"seed", r.seed},
          {"per_class", per_class},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"wall_time_seconds", r.wall_time_seconds},
          {"config", r.config}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.method = j.at("method").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.d = j.at("d").get<std::size_t>();
    r.classes = j.at("classes").get<std::size_t>();
    r.bits = j.at("bits").get<std::size_t>();
    r.p = j.at("p").get<std::size_t>();
    r.t = j.at("t").get<std::size_t>();
    r.sigma = j.at("sigma").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("per_class"))
      r.per_class.push_back({s.at("class").get<int>(), s.at("precision").get<double>(),
                             s.at("recall").get<double>(), s.value("cluster", std::size_t{0})});
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    r.config = j.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("report JSON: ") + e.what());
  }
  return r;
}

void save_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

void save_summary_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "method,n,classes,bits,precision,recall,time\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& r : reports)
    out << r.method << ',' << r.n << ',' << r.classes << ',' << r.bits << ',' << r.macro_precision
        << ',' << r.macro_recall << ',' << r.wall_time_seconds << '\n';
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

}  // namespace klshc
