#include "klshc/pipeline.hpp"

#include <chrono>

namespace klshc {

const char* to_string(Method m) {
  switch (m) {
    case Method::kmeans: return "kmeans";
    case Method::kmeans_dl: return "kmeans_dl";
    case Method::agglo_klsh: return "agglo_klsh";
    case Method::agglo_klsh_dl: return "agglo_klsh_dl";
    case Method::agglo_exact: return "agglo_exact";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::kmeans, Method::kmeans_dl, Method::agglo_klsh, Method::agglo_klsh_dl,
                   Method::agglo_exact})
    if (s == to_string(m)) return m;
  throw Error(ErrorKind::parameter, "unknown method '" + s + "'");
}

bool uses_metric_learning(Method m) {
  return m == Method::kmeans_dl || m == Method::agglo_klsh_dl;
}

std::set<int> default_labeled_classes(const Dataset& ds) {
  std::set<int> present;
  for (int l : ds.labels())
    if (l != kUnlabeled) present.insert(l);
  std::set<int> out;
  const std::size_t want = (present.size() + 1) / 2;
  for (int c : present) {
    if (out.size() == want) break;
    out.insert(c);
  }
  return out;
}

namespace {

std::size_t class_count(const Dataset& ds) {
  std::set<int> present;
  for (int l : ds.labels())
    if (l != kUnlabeled) present.insert(l);
  return present.size();
}

}  // namespace

PipelineOutput run_pipeline(Method method, const Dataset& ds, const PipelineParams& params) {
  PipelineOutput out;
  out.k = params.k ? params.k : class_count(ds);
  require(out.k >= 1, ErrorKind::parameter, "k is 0 and the dataset has no labels to infer it from");

  const auto start = std::chrono::steady_clock::now();
  MetricMatrix metric = MetricMatrix::identity(ds.d());
  if (uses_metric_learning(method)) {
    const auto labeled = params.labeled_classes.empty() ? default_labeled_classes(ds) : params.labeled_classes;
    const ConstraintSet cs = make_constraints(ds, labeled, params.per_class, Rng::derive(params.seed, 11));
    MetricLearnConfig cfg = params.metric;
    cfg.seed = Rng::derive(params.seed, 12);
    out.metric = learn_metric(ds, cs, cfg);
    metric = out.metric->metric;
  }

  switch (method) {
    case Method::kmeans:
    case Method::kmeans_dl: {
      KMeansConfig cfg{out.k, params.kmeans_max_iters, params.kmeans_tol, Rng::derive(params.seed, 13),
                       params.kmeans_restarts, params.threads};
      out.assignment = (method == Method::kmeans ? kmeans(ds, cfg) : kmeans_with_metric(ds, metric, cfg)).assignment;
      break;
    }
    case Method::agglo_klsh:
    case Method::agglo_klsh_dl: {
      KlshParams kp{params.anchors, params.selector, params.bits, params.sigma, Rng::derive(params.seed, 14)};
      out.model = build_klsh(ds, metric, kp);
      out.table = hash_dataset(*out.model, ds, params.threads);
      StopRule stop = params.stop.value_or(StopRule::target(out.k));
      // Fewer distinct codes than requested clusters: every code stays its own cluster.
      if (stop.kind == StopRule::Kind::target_k) stop.k = std::min(stop.k, out.table->keys.size());
      auto res = run_agglomerative(init_from_hashtable(*out.table), stop);
      out.assignment = retrieve_instances(*out.table, res.assignment);
      out.dendrogram = std::move(res.dendrogram);
      break;
    }
    case Method::agglo_exact: {
      StopRule stop = params.stop.value_or(StopRule::target(out.k));
      auto res = run_agglomerative(init_from_points(ds, params.threads), stop);
      out.assignment = std::move(res.assignment);
      out.dendrogram = std::move(res.dendrogram);
      break;
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

void score_into(EvalReport& report, const std::vector<std::size_t>& assignment, const Dataset& ds) {
  std::vector<std::size_t> pred;
  std::vector<int> truth;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.label(i) == kUnlabeled) continue;
    pred.push_back(assignment[i]);
    truth.push_back(ds.label(i));
  }
  const auto pr = precision_recall(confusion(pred, truth));
  report.per_class = pr.per_class;
  report.macro_precision = pr.macro_precision;
  report.macro_recall = pr.macro_recall;
  report.classes = pr.per_class.size();
}

EvalReport timed_run(Method method, const Dataset& ds, const PipelineParams& params,
                     const TimingOptions& timing) {
  require(timing.repeats >= 1 && timing.warmup >= 0, ErrorKind::parameter, "bad timing options");
  for (int w = 0; w < timing.warmup; ++w) run_pipeline(method, ds, params);
  std::vector<double> seconds;
  PipelineOutput out;
  for (int r = 0; r < timing.repeats; ++r) {
    out = run_pipeline(method, ds, params);
    seconds.push_back(out.seconds);
  }
  std::sort(seconds.begin(), seconds.end());

  EvalReport report;
  report.method = to_string(method);
  report.n = ds.n();
  report.d = ds.d();
  report.seed = params.seed;
  report.wall_time_seconds = seconds[seconds.size() / 2];
  score_into(report, out.assignment, ds);

  auto& cfg = report.config;
  cfg["k"] = out.k;
  cfg["threads"] = params.threads;
  cfg["warmup"] = timing.warmup;
  cfg["repeats"] = timing.repeats;
  if (out.model) {
    report.bits = out.model->bits();
    report.p = out.model->anchor_count();
    report.t = out.model->selector_size();
    report.sigma = out.model->sigma();
    cfg["sigma_mode"] = params.sigma.kind == SigmaMode::Kind::fixed ? "fixed" : "median";
    cfg["unique_codes"] = out.table->keys.size();
    cfg["clamped_eigenvalues"] = out.model->clamped_eigenvalues;
  }
  if (params.stop) {
    cfg["stop"] = params.stop->kind == StopRule::Kind::target_k ? "target_k" : "inconsistency";
    cfg["stop_k"] = params.stop->k;
    cfg["stop_threshold"] = params.stop->threshold;
    cfg["stop_depth"] = params.stop->depth;
  }
  if (out.dendrogram) cfg["merges"] = out.dendrogram->merges.size();
  if (method == Method::kmeans || method == Method::kmeans_dl) {
    cfg["kmeans_max_iters"] = params.kmeans_max_iters;
    cfg["kmeans_tol"] = params.kmeans_tol;
    cfg["kmeans_restarts"] = params.kmeans_restarts;
  }
  if (out.metric) {
    const auto labeled = params.labeled_classes.empty() ? default_labeled_classes(ds) : params.labeled_classes;
    cfg["labeled_classes"] = labeled;
    cfg["per_class"] = params.per_class;
    cfg["metric_mode"] = to_string(out.metric->mode);
    cfg["metric_iterations"] = out.metric->iterations;
    cfg["metric_converged"] = out.metric->converged;
    cfg["metric_line_search_failed"] = out.metric->line_search_failed;
    cfg["metric_max_iters"] = params.metric.max_iters;
    cfg["metric_tolerance"] = params.metric.tolerance;
  }
  return report;
}

}  // namespace klshc
