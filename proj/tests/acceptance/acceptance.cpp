// Acceptance run: one PASS/FAIL line per criterion, followed by a summary.
//
//   acceptance [--only 1,4,...] [--known-red 6,7]
//
// Criteria listed in --known-red still print FAIL when they fail, but they do
// not make the exit status non-zero.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "klshc/pipeline.hpp"
#include "support/oracles.hpp"

using namespace klshc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const fs::path& mnist_dir() {
  static const fs::path dir = KLSHC_MNIST_DIR;
  return dir;
}

const Dataset& mnist() {
  static const Dataset ds = load_idx(mnist_dir() / "mnist10k-images-idx3-ubyte.gz",
                                     mnist_dir() / "mnist10k-labels-idx1-ubyte.gz");
  return ds;
}

std::set<int> first_classes(int c) {
  std::set<int> out;
  for (int i = 0; i < c; ++i) out.insert(i);
  return out;
}

std::vector<std::vector<long long>> random_int_distances(Rng& rng, std::size_t n, long long max) {
  std::vector<std::vector<long long>> d(n, std::vector<long long>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = 1 + static_cast<long long>(rng.below(max));
  return d;
}

// ---------------------------------------------------------------------------

Outcome agglomerative_matches_brute_force() {
  const auto t0 = Clock::now();
  Rng rng(101);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(63);
    const auto dist = random_int_distances(rng, n, 1 + rng.below(20));
    std::vector<long long> w(n, 1);
    if (trial % 2) for (auto& x : w) x = 1 + static_cast<long long>(rng.below(8));
    std::vector<double> wd(w.begin(), w.end());
    const std::size_t k = 1 + rng.below(n);

    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(dist[i][j]);

    const auto expect = oracle::brute_force_agglomerative(dist, w, k);
    const auto got = run_agglomerative(ClusterState::from_distances(m, wd), StopRule::target(k));
    bool same = got.assignment == expect.assignment && got.dendrogram.merges.size() == expect.merges.size();
    for (std::size_t s = 0; same && s < expect.merges.size(); ++s) {
      const auto& g = got.dendrogram.merges[s];
      const auto& e = expect.merges[s];
      same = std::minmax(g.left, g.right) == std::minmax(e.left, e.right) && g.new_id == e.new_id &&
             std::abs(g.height - e.height) <= 1e-9 * std::max(1.0, e.height);
    }
    mismatches += !same;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(100 - mismatches) + "/100 instances identical, " + fmt("%.2f s", secs)};
}

Outcome bucket_weighting_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(202);
  int mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int blobs = 2 + static_cast<int>(rng.below(4));
    const int per = 10 + static_cast<int>(rng.below(200 / blobs - 10));
    const Dataset ds = synth_blobs(blobs, per, 6, 1.0 + rng.uniform() * 2.0, rng.next());
    KlshParams kp;
    kp.anchors = std::min<std::size_t>(40, ds.n());
    kp.selector = 8;
    kp.bits = 6 + rng.below(6);
    kp.seed = rng.next();
    const auto table = hash_dataset(build_klsh(ds, MetricMatrix::identity(ds.d()), kp), ds);
    const std::size_t k = 1 + rng.below(table.keys.size());
    const auto weighted = run_agglomerative(init_from_hashtable(table), StopRule::target(k));
    const auto per_point = run_agglomerative(init_per_point(table), StopRule::target(k));
    mismatches += retrieve_instances(table, weighted.assignment) != per_point.assignment;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30.0,
          std::to_string(20 - mismatches) + "/20 datasets identical, " + fmt("%.2f s", secs)};
}

// Objective evaluated straight from its definition for any square matrix.
double direct_objective(const Matrix& a, const Dataset& ds, const ConstraintSet& cs) {
  double s = 0, dsum = 0;
  for (auto [i, j] : cs.similar) {
    const Vector diff = (ds.row(i) - ds.row(j)).transpose();
    s += diff.dot(a * diff);
  }
  for (auto [i, j] : cs.dissimilar) {
    const Vector diff = (ds.row(i) - ds.row(j)).transpose();
    dsum += std::sqrt(diff.dot(a * diff));
  }
  return s - std::log(dsum);
}

Outcome metric_learning_correctness() {
  Rng rng(303);
  double worst_grad = 0;
  int bad_history = 0, bad_psd = 0, bad_sum = 0;
  double min_eig = std::numeric_limits<double>::infinity(), min_sum = min_eig;
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = static_cast<Eigen::Index>(2 + rng.below(4));
    const Eigen::Index n = 8;
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const Dataset ds(x);
    ConstraintSet cs;
    std::set<IndexPair> used;
    const std::size_t n_sim = 1 + rng.below(5), n_dis = 1 + rng.below(5);
    auto draw = [&](std::vector<IndexPair>& out, std::size_t count) {
      while (out.size() < count) {
        std::size_t i = rng.below(n), j = rng.below(n);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (used.insert({i, j}).second) out.push_back({i, j});
      }
      std::sort(out.begin(), out.end());
    };
    draw(cs.similar, n_sim);
    draw(cs.dissimilar, n_dis);

    Matrix b(d, d);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
    const Matrix a = b * b.transpose() + 0.1 * Matrix::Identity(d, d);
    const Matrix g = objective_gradient(MetricMatrix(a), ds, cs);
    Matrix fd(d, d);
    auto f = [&](const Matrix& m) { return direct_objective(m, ds, cs); };
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) fd(r, c) = oracle::central_difference(f, a, r, c, 1e-5);
    worst_grad = std::max(worst_grad, (fd - g).norm() / std::max(fd.norm(), 1e-12));

    for (auto mode : {MetricMode::diagonal, MetricMode::full}) {
      MetricLearnConfig cfg;
      cfg.mode = mode;
      cfg.seed = static_cast<std::uint64_t>(trial);
      const auto res = learn_metric(ds, cs, cfg);
      for (std::size_t s = 1; s < res.history.size(); ++s) bad_history += res.history[s] > res.history[s - 1];
      const double eig = res.metric.min_eigenvalue();
      min_eig = std::min(min_eig, eig);
      bad_psd += eig < -1e-8;
      double dsum = 0;
      for (auto [i, j] : cs.dissimilar) dsum += mahalanobis(ds.row(i).transpose(), ds.row(j).transpose(), res.metric);
      min_sum = std::min(min_sum, dsum);
      bad_sum += dsum < 1.0 - 1e-6;
    }
  }
  std::ostringstream os;
  os << "max gradient rel. error " << fmt("%.2e", worst_grad) << ", history increases " << bad_history
     << ", min eigenvalue " << fmt("%.2e", min_eig) << ", min dissimilar sum " << fmt("%.9f", min_sum);
  return {worst_grad <= 1e-4 && bad_history == 0 && bad_psd == 0 && bad_sum == 0, os.str()};
}

Outcome klsh_preserves_neighbourhoods() {
  const auto t0 = Clock::now();
  const Dataset ds = synth_blobs(4, 500, 16, 2.0, 404);
  const MetricMatrix a = MetricMatrix::identity(ds.d());
  KlshParams kp;
  kp.bits = 64;
  kp.anchors = 128;
  kp.selector = 30;
  kp.seed = 405;
  const auto model = build_klsh(ds, a, kp);
  const auto table = hash_dataset(model, ds);
  Rng rng(406);
  std::vector<double> ham, dist;
  while (ham.size() < 2000) {
    const std::size_t i = rng.below(ds.n()), j = rng.below(ds.n());
    if (i == j) continue;
    ham.push_back(static_cast<double>(hamming(table.code_of[i], table.code_of[j])));
    dist.push_back(mahalanobis(ds.row(i).transpose(), ds.row(j).transpose(), a));
  }
  const double rho = oracle::spearman(ham, dist);
  const double secs = seconds_since(t0);
  return {rho >= 0.5 && secs < 60.0, "Spearman " + fmt("%.3f", rho) + ", " + fmt("%.2f s", secs)};
}

struct Averages {
  double precision = 0, recall = 0;
};

Averages average_over_seeds(Method method, int classes, std::size_t n, std::size_t bits, int seeds) {
  Averages avg;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const Dataset ds = subset_by_class(mnist(), first_classes(classes), n, Rng::derive(seed, 99));
    PipelineParams p;
    p.bits = bits;
    p.seed = seed;
    const auto r = timed_run(method, ds, p);
    avg.precision += r.macro_precision / seeds;
    avg.recall += r.macro_recall / seeds;
  }
  return avg;
}

Outcome longer_codes_score_higher() {
  const auto short_codes = average_over_seeds(Method::agglo_klsh_dl, 10, 2000, 8, 5);
  const auto long_codes = average_over_seeds(Method::agglo_klsh_dl, 10, 2000, 64, 5);
  std::ostringstream os;
  os << "8 bits P=" << fmt("%.3f", short_codes.precision) << " R=" << fmt("%.3f", short_codes.recall)
     << "; 64 bits P=" << fmt("%.3f", long_codes.precision) << " R=" << fmt("%.3f", long_codes.recall);
  return {long_codes.precision > short_codes.precision && long_codes.recall > short_codes.recall, os.str()};
}

Outcome hashing_is_cheaper() {
  const auto t0 = Clock::now();
  double klsh = 0, km = 0;
  const int seeds = 3;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const Dataset ds = subset_by_class(mnist(), {}, 5000, Rng::derive(seed, 99));
    PipelineParams p;
    p.bits = 32;
    p.k = 10;
    p.seed = seed;
    klsh += run_pipeline(Method::agglo_klsh, ds, p).seconds / seeds;
    km += run_pipeline(Method::kmeans, ds, p).seconds / seeds;
  }
  const Dataset ds = subset_by_class(mnist(), {}, 5000, Rng::derive(0, 99));
  PipelineParams p;
  p.k = 10;
  const double exact = run_pipeline(Method::agglo_exact, ds, p).seconds;
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "KLSH " << fmt("%.3f s", klsh) << ", K-Means " << fmt("%.3f s", km) << ", exact " << fmt("%.3f s", exact)
     << " (ratio " << fmt("%.2f", klsh / exact) << "), " << fmt("%.1f s", secs) << " total";
  return {klsh < km && klsh < 0.2 * exact && secs < 300.0, os.str()};
}

Outcome more_classes_lower_recall() {
  const auto four = average_over_seeds(Method::agglo_klsh_dl, 4, 2000, 32, 5);
  const auto ten = average_over_seeds(Method::agglo_klsh_dl, 10, 2000, 32, 5);
  const double dp = std::abs(ten.precision - four.precision);
  std::ostringstream os;
  os << "4 classes P=" << fmt("%.3f", four.precision) << " R=" << fmt("%.3f", four.recall)
     << "; 10 classes P=" << fmt("%.3f", ten.precision) << " R=" << fmt("%.3f", ten.recall)
     << "; |dP|=" << fmt("%.3f", dp);
  return {ten.recall < four.recall && dp < 0.15, os.str()};
}

Outcome evaluation_formula() {
  const long long counts[3][4] = {{1, 24, 8, 0}, {21, 2, 10, 0}, {3, 0, 7, 24}};
  std::vector<std::size_t> pred;
  std::vector<int> truth;
  for (int c = 0; c < 3; ++c)
    for (int g = 0; g < 4; ++g)
      for (long long k = 0; k < counts[c][g]; ++k) {
        pred.push_back(static_cast<std::size_t>(g));
        truth.push_back(c);
      }
  const auto pr = precision_recall(confusion(pred, truth));
  const double expect[3][2] = {{24.0 / 26, 24.0 / 33}, {21.0 / 25, 21.0 / 33}, {24.0 / 24, 24.0 / 34}};
  const double rounded[3][2] = {{0.923, 0.727}, {0.840, 0.636}, {1.000, 0.706}};
  bool ok = pr.per_class.size() == 3;
  std::ostringstream os;
  for (std::size_t c = 0; ok && c < 3; ++c) {
    const auto& s = pr.per_class[c];
    ok = std::abs(s.precision - rounded[c][0]) <= 1e-3 && std::abs(s.recall - rounded[c][1]) <= 1e-3 &&
         std::abs(s.precision - expect[c][0]) <= 1e-12 && std::abs(s.recall - expect[c][1]) <= 1e-12;
    os << (c ? "; " : "") << "(" << fmt("%.3f", s.precision) << ", " << fmt("%.3f", s.recall) << ")";
  }
  return {ok, os.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome deterministic_across_threads() {
  const fs::path dir = fs::temp_directory_path() / ("klshc_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const Dataset blobs = synth_blobs(4, 80, 8, 1.5, 909);
  const Dataset digits = subset_by_class(mnist(), {}, 600, 910);
  int runs = 0, differing = 0;
  for (const auto* ds : {&blobs, &digits})
    for (Method m : {Method::kmeans, Method::kmeans_dl, Method::agglo_klsh, Method::agglo_klsh_dl,
                     Method::agglo_exact}) {
      std::string reference;
      for (unsigned threads : {1u, 2u, 4u, 4u}) {
        PipelineParams p;
        p.seed = 77;
        p.threads = threads;
        const fs::path file = dir / "assignment.csv";
        save_assignment_csv(run_pipeline(m, *ds, p).assignment, file);
        const std::string bytes = slurp(file);
        if (reference.empty()) reference = bytes;
        differing += bytes != reference;
        ++runs;
      }
    }
  fs::remove_all(dir);
  return {differing == 0, std::to_string(runs - differing) + "/" + std::to_string(runs) +
                              " runs byte-identical to the single-thread CSV (5 methods, 2 datasets, threads 1/2/4/4)"};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, known_red;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only = parse_list(argv[++i]);
    else if (a == "--known-red" && i + 1 < argc) known_red = parse_list(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--known-red 6,7]\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"agglomerative merges match a brute-force rescan", agglomerative_matches_brute_force},
      {"bucket-weighted clustering equals per-point clustering", bucket_weighting_equivalence},
      {"metric learning gradient, descent, PSD and constraint", metric_learning_correctness},
      {"KLSH Hamming distance tracks metric distance", klsh_preserves_neighbourhoods},
      {"64-bit codes beat 8-bit codes on MNIST", longer_codes_score_higher},
      {"KLSH pipeline faster than K-Means and 5x faster than exact", hashing_is_cheaper},
      {"more classes: lower recall, stable precision", more_classes_lower_recall},
      {"precision/recall on the reference confusion matrix", evaluation_formula},
      {"assignments byte-identical across thread counts", deterministic_across_threads},
  };

  int failed = 0, failed_known = 0, passed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int id = static_cast<int>(c + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[c].first << " -- "
              << o.detail << " [" << fmt("%.1f s", seconds_since(t0)) << "]" << std::endl;
    if (o.pass) ++passed;
    else if (known_red.count(id)) ++failed_known;
    else ++failed;
  }
  std::cout << "summary: " << passed << " passed, " << failed + failed_known << " failed";
  if (failed_known) std::cout << " (" << failed_known << " listed as known red)";
  std::cout << std::endl;
  return failed ? 1 : 0;
}
