#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "config_file.hpp"
#include "klshc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace klshc;

namespace {

bool g_quiet = false;

template <typename... Args>
void log(Args&&... args) {
  if (g_quiet) return;
  std::ostringstream os;
  os << "[klshc] ";
  (os << ... << args);
  std::cerr << os.str() << '\n';
}

enum ExitCode { kOk = 0, kUsage = 2, kIo = 3, kFailure = 4, kConvergence = 5 };

struct DataOptions {
  std::string images;
  std::string labels;
  std::string csv;
  bool label_column = false;
  std::string mnist_dir;
  std::size_t n = 0;
  int classes = 0;
  std::uint64_t subset_seed = 0;
};

struct MethodOptions {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::size_t k = 0;
  std::size_t bits = 32;
  std::size_t anchors = 300;
  std::size_t selector = 30;
  std::string sigma = "median";
  std::string stop = "target";
  double threshold = 1.0;
  int depth = 2;
  std::string labeled_classes;
  std::size_t per_class = 20;
  std::string metric_mode = "auto";
  int metric_max_iters = 200;
  double metric_tolerance = 1e-6;
  std::size_t max_pairs = 50000;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  int restarts = 1;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(item, &pos);
      if (pos != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw Error(ErrorKind::parameter, std::string("bad value '") + item + "' in " + what);
    }
  }
  return out;
}

void add_data_options(CLI::App* sub, DataOptions& d) {
  auto* g = sub->add_option_group("data", "Input data");
  g->add_option("--images", d.images, "IDX image file (.gz accepted)");
  g->add_option("--labels", d.labels, "IDX label file (.gz accepted)");
  g->add_option("--csv", d.csv, "CSV feature file");
  g->add_flag("--label-column", d.label_column, "Last CSV column holds the class id");
  g->add_option("--mnist-dir", d.mnist_dir, "Directory holding an MNIST IDX pair");
  g->add_option("--n", d.n, "Subsample to this many rows (0 = all)");
  g->add_option("--classes", d.classes, "Keep only classes 0..classes-1 (0 = all)")->check(CLI::NonNegativeNumber);
  g->add_option("--subset-seed", d.subset_seed, "Seed for the subsample");
}

void add_method_options(CLI::App* sub, MethodOptions& m, bool hashing, bool clustering, bool metric,
                        bool kmeans) {
  sub->add_option("--seed", m.seed, "Run seed");
  sub->add_option("--threads", m.threads, "Worker threads (0 = hardware concurrency)");
  if (clustering || kmeans) sub->add_option("--k", m.k, "Number of clusters (0 = number of classes)");
  if (hashing) {
    sub->add_option("--bits", m.bits, "Hash code length m")->check(CLI::PositiveNumber);
    sub->add_option("--anchors", m.anchors, "Anchor count p")->check(CLI::PositiveNumber);
    sub->add_option("--selector", m.selector, "Selector size t")->check(CLI::PositiveNumber);
    sub->add_option("--sigma", m.sigma, "Kernel bandwidth: 'median' or a positive number");
  }
  if (clustering) {
    sub->add_option("--stop", m.stop, "Stop rule")->check(CLI::IsMember({"target", "inconsistency"}));
    sub->add_option("--threshold", m.threshold, "Inconsistency threshold")->check(CLI::PositiveNumber);
    sub->add_option("--depth", m.depth, "Inconsistency depth")->check(CLI::Range(2, 64));
  }
  if (metric) {
    sub->add_option("--labeled-classes", m.labeled_classes, "Comma list of classes with constraints");
    sub->add_option("--per-class", m.per_class, "Labeled rows drawn per class")->check(CLI::PositiveNumber);
    sub->add_option("--metric-mode", m.metric_mode, "Metric solver")
        ->check(CLI::IsMember({"auto", "diagonal", "full"}));
    sub->add_option("--metric-max-iters", m.metric_max_iters, "Metric solver iterations")->check(CLI::PositiveNumber);
    sub->add_option("--metric-tolerance", m.metric_tolerance, "Relative objective change to stop")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-pairs", m.max_pairs, "Per-set constraint cap")->check(CLI::PositiveNumber);
  }
  if (kmeans) {
    sub->add_option("--kmeans-max-iters", m.kmeans_max_iters, "Lloyd iteration cap")->check(CLI::PositiveNumber);
    sub->add_option("--kmeans-tol", m.kmeans_tol, "Centroid shift tolerance")->check(CLI::NonNegativeNumber);
    sub->add_option("--restarts", m.restarts, "K-Means restarts")->check(CLI::PositiveNumber);
  }
}

fs::path first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
  for (const char* name : names)
    if (fs::exists(dir / name)) return dir / name;
  throw Error(ErrorKind::io, "no MNIST file found in " + dir.string());
}

Dataset load_data(const DataOptions& d) {
  Dataset ds;
  if (!d.mnist_dir.empty()) {
    const fs::path dir = d.mnist_dir;
    const auto images = first_existing(dir, {"train-images-idx3-ubyte", "train-images-idx3-ubyte.gz",
                                             "mnist10k-images-idx3-ubyte.gz"});
    const auto labels = first_existing(dir, {"train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz",
                                             "mnist10k-labels-idx1-ubyte.gz"});
    log("loading ", images.string());
    ds = load_idx(images, labels);
  } else if (!d.images.empty() || !d.labels.empty()) {
    require(!d.images.empty() && !d.labels.empty(), ErrorKind::parameter, "--images and --labels go together");
    log("loading ", d.images);
    ds = load_idx(d.images, d.labels);
  } else if (!d.csv.empty()) {
    log("loading ", d.csv);
    ds = load_csv(d.csv, d.label_column);
  } else {
    throw Error(ErrorKind::parameter, "no input data: use --mnist-dir, --images/--labels or --csv");
  }

  if (d.classes > 0 || d.n > 0) {
    if (!ds.has_labels()) {
      require(d.classes == 0, ErrorKind::parameter, "--classes needs labeled data");
      require(d.n <= ds.n(), ErrorKind::insufficient_data, "--n exceeds the row count");
      Rng rng(d.subset_seed);
      auto rows = rng.sample_without_replacement(ds.n(), d.n);
      std::sort(rows.begin(), rows.end());
      ds = ds.select(rows);
    } else {
      std::set<int> classes;
      for (int c = 0; c < d.classes; ++c) classes.insert(c);
      std::size_t available = 0;
      for (int l : ds.labels())
        available += l != kUnlabeled && (classes.empty() || classes.count(l));
      ds = subset_by_class(ds, classes, d.n ? d.n : available, d.subset_seed);
    }
  }
  log("data: n=", ds.n(), " d=", ds.d());
  return ds;
}

PipelineParams to_params(const MethodOptions& m) {
  PipelineParams p;
  p.k = m.k;
  p.seed = m.seed;
  p.threads = m.threads ? m.threads : std::max(1u, std::thread::hardware_concurrency());
  p.bits = m.bits;
  p.anchors = m.anchors;
  p.selector = m.selector;
  if (m.sigma != "median") {
    double v = 0;
    try {
      v = std::stod(m.sigma);
    } catch (const std::exception&) {
      throw Error(ErrorKind::parameter, "--sigma must be 'median' or a number");
    }
    require(v > 0, ErrorKind::parameter, "--sigma must be > 0");
    p.sigma = SigmaMode::fixed(v);
  }
  if (m.stop == "inconsistency") p.stop = StopRule::inconsistent(m.threshold, m.depth);
  for (int c : parse_numbers<int>(m.labeled_classes, "--labeled-classes")) p.labeled_classes.insert(c);
  p.per_class = m.per_class;
  if (m.metric_mode != "auto") p.metric.mode = parse_metric_mode(m.metric_mode);
  p.metric.max_iters = m.metric_max_iters;
  p.metric.tolerance = m.metric_tolerance;
  p.metric.max_pairs = m.max_pairs;
  p.kmeans_max_iters = m.kmeans_max_iters;
  p.kmeans_tol = m.kmeans_tol;
  p.kmeans_restarts = m.restarts;
  return p;
}

void write_config_echo(const CLI::App* sub, const fs::path& out_dir) {
  const fs::path path = out_dir / "run.conf";
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "# " << sub->get_name() << " settings; rerun with --config " << path.filename().string() << '\n'
      << sub->config_to_str(true, false);
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
}

int convergence_status(const std::optional<MetricLearnResult>& m) {
  if (m && m->line_search_failed) {
    log("warning: metric line search stalled before convergence; result flagged");
    return kConvergence;
  }
  return kOk;
}

struct GridCell {
  std::string grid;
  Method method;
  std::size_t n;
  int classes;
  std::size_t bits;
  std::uint64_t seed;
};

std::string cell_name(const GridCell& c) {
  return std::string(to_string(c.method)) + "_n" + std::to_string(c.n) + "_c" + std::to_string(c.classes) +
         "_b" + std::to_string(c.bits) + "_s" + std::to_string(c.seed);
}

int exit_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::parameter:
    case ErrorKind::configuration: return kUsage;
    case ErrorKind::io:
    case ErrorKind::format: return kIo;
    default: return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised agglomerative clustering over kernelized LSH codes"};
  app.name("klshc");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  std::string config_path;
  app.add_option("--config", config_path, "key=value settings file; command-line flags win")->configurable(false);
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress logging")->configurable(false);

  DataOptions data;
  MethodOptions method;
  std::string out_dir = ".";
  auto common = [&](CLI::App* sub) {
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--config", config_path, "key=value settings file")->configurable(false);
    sub->add_option("-o,--out-dir", out_dir, "Output directory");
    add_data_options(sub, data);
  };

  // learn-metric
  auto* learn = app.add_subcommand("learn-metric", "Learn a Mahalanobis metric from labeled constraints");
  common(learn);
  add_method_options(learn, method, false, false, true, false);

  // hash
  auto* hash = app.add_subcommand("hash", "Build a KLSH model and hash every row");
  common(hash);
  add_method_options(hash, method, true, false, false, false);
  std::string metric_file;
  hash->add_option("--metric", metric_file, "Metric CSV from learn-metric (default: identity)");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Agglomerative clustering over hash codes or raw rows");
  common(cluster);
  add_method_options(cluster, method, true, true, true, false);
  std::string cluster_method = "agglo_klsh";
  cluster->add_option("--method", cluster_method, "agglo_klsh, agglo_klsh_dl or agglo_exact")
      ->check(CLI::IsMember({"agglo_klsh", "agglo_klsh_dl", "agglo_exact"}));

  // kmeans
  auto* km = app.add_subcommand("kmeans", "Lloyd K-Means baseline");
  common(km);
  add_method_options(km, method, false, false, true, true);
  bool km_dl = false;
  km->add_flag("--dl", km_dl, "Cluster in the learned metric space");

  // eval
  auto* eval = app.add_subcommand("eval", "Score an assignment CSV against dataset labels");
  common(eval);
  std::string assignment_file, eval_name = "external";
  eval->add_option("--assignment", assignment_file, "instance_index,cluster_label CSV")->required();
  eval->add_option("--name", eval_name, "Method name recorded in the report");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Benchmark grids over data size, class count and code length");
  common(sweep);
  add_method_options(sweep, method, true, true, true, true);
  std::string grid = "all", scale = "desk", methods_arg, n_values, class_values, bit_values;
  int seeds = 1, warmup = 1, repeats = 1;
  std::size_t fixed_n_arg = 0;
  sweep->add_option("--grid", grid, "n, classes, bits or all")->check(CLI::IsMember({"n", "classes", "bits", "all"}));
  sweep->add_option("--scale", scale, "desk (n up to 5000) or full (n up to 50000)")
      ->check(CLI::IsMember({"desk", "full"}));
  sweep->add_option("--methods", methods_arg, "Comma list of methods for the n grid");
  sweep->add_option("--n-values", n_values, "Override the n grid (comma list)");
  sweep->add_option("--class-values", class_values, "Override the class grid (comma list)");
  sweep->add_option("--bit-values", bit_values, "Override the bits grid (comma list)");
  sweep->add_option("--fixed-n", fixed_n_arg, "Data size for the classes and bits grids (0 = scale default)");
  sweep->add_option("--seeds", seeds, "Seeds per cell (0..seeds-1 offset from --seed)")->check(CLI::PositiveNumber);
  sweep->add_option("--warmup", warmup, "Untimed warm-up runs per cell")->check(CLI::NonNegativeNumber);
  sweep->add_option("--repeats", repeats, "Timed runs per cell (median reported)")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a labeled Gaussian-blob CSV");
  synth->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  synth->add_option("--config", config_path, "key=value settings file")->configurable(false);
  int synth_k = 3, synth_per = 100, synth_d = 2;
  double synth_spread = 1.0;
  std::string synth_out = "blobs.csv";
  synth->add_option("--blobs", synth_k, "Number of blobs")->check(CLI::PositiveNumber);
  synth->add_option("--per-blob", synth_per, "Rows per blob")->check(CLI::PositiveNumber);
  synth->add_option("--dim", synth_d, "Dimension")->check(CLI::PositiveNumber);
  synth->add_option("--spread", synth_spread, "Standard deviation")->check(CLI::PositiveNumber);
  synth->add_option("--seed", method.seed, "Seed");
  synth->add_option("--out", synth_out, "Output CSV");

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = cli::merge_config_args(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_for(e);
  }
  args.erase(args.begin());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) {
      save_csv(synth_blobs(synth_k, synth_per, synth_d, synth_spread, method.seed), synth_out, true);
      log("wrote ", synth_out);
      return kOk;
    }

    CLI::App* sub = app.get_subcommands().front();
    prepare_dir(out_dir);
    write_config_echo(sub, out_dir);
    const fs::path out = out_dir;
    const Dataset ds = load_data(data);
    PipelineParams params = to_params(method);

    if (*learn) {
      const auto labeled = params.labeled_classes.empty() ? default_labeled_classes(ds) : params.labeled_classes;
      const auto cs = make_constraints(ds, labeled, params.per_class, Rng::derive(params.seed, 11));
      log("constraints: ", cs.similar.size(), " similar, ", cs.dissimilar.size(), " dissimilar");
      MetricLearnConfig cfg = params.metric;
      cfg.seed = Rng::derive(params.seed, 12);
      const auto res = learn_metric(ds, cs, cfg);
      log("metric: mode=", to_string(res.mode), " iterations=", res.iterations, " objective ",
          res.history.front(), " -> ", res.history.back());
      save_metric_csv(res.metric, out / "metric.csv",
                      std::string("mode=") + to_string(res.mode) + " seed=" + std::to_string(params.seed) +
                          " converged=" + (res.converged ? "1" : "0"));
      return convergence_status(res);
    }

    if (*hash) {
      const MetricMatrix a = metric_file.empty() ? MetricMatrix::identity(ds.d()) : load_metric_csv(metric_file);
      const auto start = std::chrono::steady_clock::now();
      const auto model = build_klsh(ds, a, KlshParams{params.anchors, params.selector, params.bits, params.sigma,
                                                      Rng::derive(params.seed, 14)});
      const auto table = hash_dataset(model, ds, params.threads);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log("hashed ", ds.n(), " rows into ", table.keys.size(), " codes in ", secs, " s (sigma=", model.sigma(), ")");
      if (model.clamped_eigenvalues) log("warning: ", model.clamped_eigenvalues, " kernel eigenvalues clamped");
      save_model(model, out / "model.txt");
      save_codes(table, out / "codes.csv");
      return kOk;
    }

    if (*cluster || *km) {
      const Method m = *km ? (km_dl ? Method::kmeans_dl : Method::kmeans) : parse_method(cluster_method);
      if (!params.k && !ds.has_labels()) throw Error(ErrorKind::parameter, "--k is required for unlabeled data");
      const auto res = run_pipeline(m, ds, params);
      log(to_string(m), ": k=", res.k, " in ", res.seconds, " s");
      save_assignment_csv(res.assignment, out / "assignment.csv");
      if (res.dendrogram) save_dendrogram_csv(*res.dendrogram, out / "dendrogram.csv");
      if (res.metric) save_metric_csv(res.metric->metric, out / "metric.csv", "seed=" + std::to_string(params.seed));
      if (ds.has_labels()) {
        EvalReport report;
        report.method = to_string(m);
        report.n = ds.n();
        report.d = ds.d();
        report.seed = params.seed;
        report.wall_time_seconds = res.seconds;
        if (res.model) {
          report.bits = res.model->bits();
          report.p = res.model->anchor_count();
          report.t = res.model->selector_size();
          report.sigma = res.model->sigma();
          report.config["unique_codes"] = res.table->keys.size();
        }
        report.config["k"] = res.k;
        score_into(report, res.assignment, ds);
        save_report(report, out / "report.json");
        log("macro precision ", report.macro_precision, ", macro recall ", report.macro_recall);
      }
      return convergence_status(res.metric);
    }

    if (*eval) {
      require(ds.has_labels(), ErrorKind::parameter, "eval needs labeled data");
      const auto assignment = load_assignment_csv(assignment_file);
      require(assignment.size() == ds.n(), ErrorKind::consistency,
              "assignment has " + std::to_string(assignment.size()) + " rows, data has " + std::to_string(ds.n()));
      EvalReport report;
      report.method = eval_name;
      report.n = ds.n();
      report.d = ds.d();
      report.config["assignment"] = assignment_file;
      score_into(report, assignment, ds);
      save_report(report, out / "report.json");
      std::cout << "macro_precision=" << report.macro_precision << " macro_recall=" << report.macro_recall << '\n';
      return kOk;
    }

    if (*sweep) {
      require(ds.has_labels(), ErrorKind::parameter, "sweep needs labeled data");
      const bool full = scale == "full";
      const std::size_t fixed_n = fixed_n_arg ? fixed_n_arg : (full ? 20000 : 2000);
      std::vector<std::size_t> ns = n_values.empty()
          ? (full ? std::vector<std::size_t>{5000, 10000, 15000, 20000, 30000, 50000}
                   : std::vector<std::size_t>{1000, 2000, 5000})
          : parse_numbers<std::size_t>(n_values, "--n-values");
      std::vector<int> cls = class_values.empty() ? std::vector<int>{4, 5, 6, 7, 8, 9, 10}
                                                  : parse_numbers<int>(class_values, "--class-values");
      std::vector<std::size_t> bitv = bit_values.empty() ? std::vector<std::size_t>{8, 16, 32, 64}
                                                         : parse_numbers<std::size_t>(bit_values, "--bit-values");
      std::vector<Method> methods;
      for (const auto& name : split_list(methods_arg.empty() ? "kmeans,kmeans_dl,agglo_klsh,agglo_klsh_dl" : methods_arg))
        methods.push_back(parse_method(name));

      std::vector<GridCell> cells;
      for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = params.seed + static_cast<std::uint64_t>(s);
        if (grid == "n" || grid == "all")
          for (std::size_t n : ns)
            for (Method m : methods) cells.push_back({"n", m, n, 10, 32, seed});
        if (grid == "classes" || grid == "all")
          for (int c : cls) cells.push_back({"classes", Method::agglo_klsh_dl, fixed_n, c, 32, seed});
        if (grid == "bits" || grid == "all")
          for (std::size_t b : bitv) cells.push_back({"bits", Method::agglo_klsh_dl, fixed_n, 10, b, seed});
      }

      std::vector<EvalReport> reports;
      int status = kOk;
      for (const auto& cell : cells) {
        std::set<int> classes;
        for (int c = 0; c < cell.classes; ++c) classes.insert(c);
        const Dataset sub_ds = subset_by_class(ds, classes, cell.n, Rng::derive(cell.seed, 99));
        PipelineParams p = params;
        p.seed = cell.seed;
        p.bits = cell.bits;
        p.k = 0;
        log(cell.grid, " grid: ", cell_name(cell));
        EvalReport r = timed_run(cell.method, sub_ds, p, TimingOptions{warmup, repeats});
        r.bits = cell.bits;
        r.config["grid"] = cell.grid;
        r.config["subset_seed"] = Rng::derive(cell.seed, 99);
        if (r.config.value("metric_line_search_failed", false)) status = kConvergence;
        const fs::path dir = out / cell.grid;
        prepare_dir(dir);
        save_report(r, dir / (cell_name(cell) + ".json"));
        log("  precision ", r.macro_precision, " recall ", r.macro_recall, " time ", r.wall_time_seconds, " s");
        reports.push_back(std::move(r));
      }
      save_summary_csv(reports, out / "summary.csv");
      log("wrote ", reports.size(), " reports and ", (out / "summary.csv").string());
      return status;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
