#include "klshc/hash_cluster.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

namespace klshc {

namespace {

constexpr std::size_t kGone = static_cast<std::size_t>(-1);

// Linkage candidate between two slots. Ordered by average distance
// sum / weight (compared by cross-multiplication), then by key pair.
struct Candidate {
  long double sum = 0;
  long double weight = 1;
  std::size_t key_lo = kGone;
  std::size_t key_hi = kGone;

  bool valid() const { return key_lo != kGone; }
  double distance() const { return static_cast<double>(sum / weight); }
};

bool operator<(const Candidate& a, const Candidate& b) {
  if (!b.valid()) return a.valid();
  if (!a.valid()) return false;
  const long double lhs = a.sum * b.weight;
  const long double rhs = b.sum * a.weight;
  if (lhs != rhs) return lhs < rhs;
  if (a.key_lo != b.key_lo) return a.key_lo < b.key_lo;
  return a.key_hi < b.key_hi;
}

}  // namespace

void Dendrogram::append(const Merge& m) {
  if (!merges.empty() && m.height < merges.back().height) monotone = false;
  merges.push_back(m);
}

template <typename SumFn>
ClusterState ClusterState::build(std::vector<double> sizes, SumFn&& fill_sums) {
  const std::size_t c = sizes.size();
  require(c >= 1, ErrorKind::parameter, "clustering needs at least one item");
  for (double w : sizes) require(w > 0 && std::isfinite(w), ErrorKind::parameter, "item sizes must be > 0");
  ClusterState s;
  s.sizes_ = sizes;
  s.slot_size_ = std::move(sizes);
  s.slot_key_.resize(c);
  std::iota(s.slot_key_.begin(), s.slot_key_.end(), std::size_t{0});
  s.slot_id_ = s.slot_key_;
  s.slot_active_.assign(c, true);
  s.slot_members_.resize(c);
  for (std::size_t i = 0; i < c; ++i) s.slot_members_[i] = {i};
  s.id_slot_.assign(2 * c - 1, kGone);
  for (std::size_t i = 0; i < c; ++i) s.id_slot_[i] = i;
  s.active_count_ = c;
  s.dendrogram_.leaves = c;
  s.sums_.assign(c * (c - 1) / 2, 0.0);
  fill_sums(s.sums_);
  for (std::size_t b = 1; b < c; ++b)
    for (std::size_t a = 0; a < b; ++a) {
      double& v = s.sums_[b * (b - 1) / 2 + a];
      require(v >= 0 && std::isfinite(v), ErrorKind::parameter, "distances must be finite and >= 0");
      v *= s.slot_size_[a] * s.slot_size_[b];
    }
  return s;
}

ClusterState ClusterState::from_distances(const Eigen::Ref<const Eigen::MatrixXd>& dist,
                                          std::vector<double> sizes) {
  require(dist.rows() == dist.cols() && static_cast<std::size_t>(dist.rows()) == sizes.size(),
          ErrorKind::parameter, "distance matrix must be c x c with one size per item");
  const double scale = std::max(1.0, dist.cwiseAbs().maxCoeff());
  require((dist - dist.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, ErrorKind::parameter,
          "distance matrix must be symmetric");
  return build(std::move(sizes), [&](std::vector<double>& sums) {
    for (Eigen::Index b = 1; b < dist.rows(); ++b)
      for (Eigen::Index a = 0; a < b; ++a)
        sums[static_cast<std::size_t>(b * (b - 1) / 2 + a)] = dist(a, b);
  });
}

bool ClusterState::is_active(std::size_t id) const {
  return id < id_slot_.size() && id_slot_[id] != kGone;
}

std::size_t ClusterState::slot_of(std::size_t id) const {
  require(is_active(id), ErrorKind::state, "cluster " + std::to_string(id) + " is not active");
  return id_slot_[id];
}

std::vector<std::size_t> ClusterState::active() const {
  std::vector<std::size_t> ids;
  ids.reserve(active_count_);
  for (std::size_t s = 0; s < slot_id_.size(); ++s)
    if (slot_active_[s]) ids.push_back(slot_id_[s]);
  std::sort(ids.begin(), ids.end());
  return ids;
}

const std::vector<std::size_t>& ClusterState::members(std::size_t id) const {
  return slot_members_[slot_of(id)];
}
double ClusterState::size(std::size_t id) const { return slot_size_[slot_of(id)]; }
std::size_t ClusterState::key(std::size_t id) const { return slot_key_[slot_of(id)]; }

double ClusterState::proximity(std::size_t i, std::size_t j) const {
  const std::size_t a = slot_of(i), b = slot_of(j);
  if (a == b) return 0.0;
  return sum_at(a, b) / (slot_size_[a] * slot_size_[b]);
}

double ClusterState::linkage_sum(std::size_t i, std::size_t j) const {
  const std::size_t a = slot_of(i), b = slot_of(j);
  return a == b ? 0.0 : sum_at(a, b);
}

std::size_t ClusterState::merge(std::size_t i, std::size_t j) {
  require(i != j, ErrorKind::state, "cannot merge a cluster with itself");
  std::size_t a = slot_of(i), b = slot_of(j);
  const double height = proximity(i, j);
  if (b < a) std::swap(a, b);  // the merged cluster takes the lower slot
  for (std::size_t r = 0; r < slot_id_.size(); ++r) {
    if (!slot_active_[r] || r == a || r == b) continue;
    sum_at(a, r) += sum_at(b, r);
  }
  const std::size_t new_id = dendrogram_.leaves + dendrogram_.merges.size();
  slot_size_[a] += slot_size_[b];
  slot_key_[a] = std::min(slot_key_[a], slot_key_[b]);
  auto& into = slot_members_[a];
  auto& from = slot_members_[b];
  const auto mid = static_cast<std::ptrdiff_t>(into.size());
  into.insert(into.end(), from.begin(), from.end());
  std::inplace_merge(into.begin(), into.begin() + mid, into.end());
  from.clear();
  from.shrink_to_fit();
  slot_active_[b] = false;
  id_slot_[i] = kGone;
  id_slot_[j] = kGone;
  id_slot_[new_id] = a;
  slot_id_[a] = new_id;
  --active_count_;
  dendrogram_.append({i, j, height, new_id, slot_size_[a]});
  return new_id;
}

std::vector<std::size_t> ClusterState::assignment() const {
  std::vector<std::size_t> slots;
  for (std::size_t s = 0; s < slot_id_.size(); ++s)
    if (slot_active_[s]) slots.push_back(s);
  std::sort(slots.begin(), slots.end(),
            [&](std::size_t x, std::size_t y) { return slot_key_[x] < slot_key_[y]; });
  std::vector<std::size_t> labels(items(), kGone);
  for (std::size_t c = 0; c < slots.size(); ++c)
    for (std::size_t item : slot_members_[slots[c]]) labels[item] = c;
  return labels;
}

ClusterState init_from_hashtable(const HashTable& table) {
  require(!table.keys.empty(), ErrorKind::parameter, "hash table is empty");
  std::vector<double> sizes;
  sizes.reserve(table.keys.size());
  for (const auto& b : table.buckets) sizes.push_back(static_cast<double>(b.size()));
  return ClusterState::build(std::move(sizes), [&](std::vector<double>& sums) {
    for (std::size_t b = 1; b < table.keys.size(); ++b)
      for (std::size_t a = 0; a < b; ++a)
        sums[b * (b - 1) / 2 + a] = static_cast<double>(hamming(table.keys[a], table.keys[b]));
  });
}

ClusterState init_per_point(const HashTable& table) {
  require(table.size() > 0, ErrorKind::parameter, "hash table is empty");
  return ClusterState::build(std::vector<double>(table.size(), 1.0), [&](std::vector<double>& sums) {
    for (std::size_t b = 1; b < table.size(); ++b)
      for (std::size_t a = 0; a < b; ++a)
        sums[b * (b - 1) / 2 + a] = static_cast<double>(hamming(table.code_of[a], table.code_of[b]));
  });
}

ClusterState init_from_points(const Dataset& ds, unsigned threads) {
  require(ds.n() >= 1, ErrorKind::parameter, "dataset is empty");
  const Matrix& x = ds.features();
  const Vector norms = x.rowwise().squaredNorm();
  // Gram blocks have a fixed shape, so results do not depend on `threads`.
  constexpr std::size_t kBlock = 256;
  const std::size_t n = ds.n();
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  return ClusterState::build(std::vector<double>(n, 1.0), [&](std::vector<double>& sums) {
    parallel_for(blocks, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t blk = begin; blk < end; ++blk) {
        const std::size_t r0 = blk * kBlock;
        const std::size_t rows = std::min(kBlock, n - r0);
        const Eigen::MatrixXd gram =
            x.middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(rows)) *
            x.topRows(static_cast<Eigen::Index>(r0 + rows)).transpose();
        for (std::size_t rb = 0; rb < rows; ++rb) {
          const std::size_t b = r0 + rb;
          for (std::size_t a = 0; a < b; ++a) {
            const double sq = norms(static_cast<Eigen::Index>(a)) + norms(static_cast<Eigen::Index>(b)) -
                              2.0 * gram(static_cast<Eigen::Index>(rb), static_cast<Eigen::Index>(a));
            sums[b * (b - 1) / 2 + a] = std::sqrt(std::max(sq, 0.0));
          }
        }
      }
    });
  });
}

ClosestPair find_closest_pair(const ClusterState& state) {
  require(state.active_count() >= 2, ErrorKind::state, "need at least two active clusters");
  const auto ids = state.active();
  Candidate best;
  ClosestPair out{0, 0, 0.0};
  for (std::size_t x = 0; x < ids.size(); ++x)
    for (std::size_t y = x + 1; y < ids.size(); ++y) {
      std::size_t i = ids[x], j = ids[y];
      if (state.key(j) < state.key(i)) std::swap(i, j);
      const Candidate c{state.linkage_sum(i, j),
                        static_cast<long double>(state.size(i)) * state.size(j), state.key(i), state.key(j)};
      if (c < best) {
        best = c;
        out = {i, j, state.proximity(i, j)};
      }
    }
  return out;
}

namespace {

void collect_heights(const Dendrogram& dendro, std::size_t id, int levels, std::vector<double>& out) {
  if (levels <= 0 || id < dendro.leaves) return;
  const Merge& m = dendro.merges[id - dendro.leaves];
  out.push_back(m.height);
  collect_heights(dendro, m.left, levels - 1, out);
  collect_heights(dendro, m.right, levels - 1, out);
}

double z_score(double height, const std::vector<double>& heights) {
  const double mean = std::accumulate(heights.begin(), heights.end(), 0.0) / static_cast<double>(heights.size());
  double var = 0.0;
  for (double h : heights) var += (h - mean) * (h - mean);
  const double sd = std::sqrt(var / static_cast<double>(heights.size()));
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) return 0.0;
  return (height - mean) / sd;
}

double candidate_inconsistency(const Dendrogram& dendro, std::size_t left, std::size_t right,
                               double height, int depth) {
  std::vector<double> heights{height};
  collect_heights(dendro, left, depth - 1, heights);
  collect_heights(dendro, right, depth - 1, heights);
  return z_score(height, heights);
}

}  // namespace

double inconsistency_coefficient(const Dendrogram& dendro, std::size_t merge_index, int depth) {
  require(merge_index < dendro.merges.size(), ErrorKind::parameter, "merge index out of range");
  require(depth >= 2, ErrorKind::parameter, "depth must be >= 2");
  const Merge& m = dendro.merges[merge_index];
  return candidate_inconsistency(dendro, m.left, m.right, m.height, depth);
}

AgglomerativeResult run_agglomerative(ClusterState state, const StopRule& stop) {
  if (stop.kind == StopRule::Kind::target_k) {
    require(stop.k >= 1, ErrorKind::parameter, "target k must be >= 1");
    require(stop.k <= state.active_count(), ErrorKind::parameter,
            "target k=" + std::to_string(stop.k) + " exceeds the " +
                std::to_string(state.active_count()) + " initial clusters");
  } else {
    require(stop.threshold > 0, ErrorKind::parameter, "inconsistency threshold must be > 0");
    require(stop.depth >= 2, ErrorKind::parameter, "inconsistency depth must be >= 2");
  }

  const std::size_t slots = state.slot_id_.size();
  auto candidate = [&](std::size_t a, std::size_t b) {
    Candidate c{state.sum_at(a, b),
                static_cast<long double>(state.slot_size_[a]) * state.slot_size_[b],
                state.slot_key_[a], state.slot_key_[b]};
    if (c.key_hi < c.key_lo) std::swap(c.key_lo, c.key_hi);
    return c;
  };
  // Nearest neighbour of every active slot under the candidate order; the
  // global minimum is then the best of these.
  std::vector<std::size_t> nn(slots, kGone);
  std::vector<Candidate> nn_cand(slots);
  auto rescan = [&](std::size_t a) {
    nn[a] = kGone;
    nn_cand[a] = Candidate{};
    for (std::size_t b = 0; b < slots; ++b) {
      if (b == a || !state.slot_active_[b]) continue;
      const Candidate c = candidate(a, b);
      if (c < nn_cand[a]) {
        nn_cand[a] = c;
        nn[a] = b;
      }
    }
  };
  for (std::size_t a = 0; a < slots; ++a)
    if (state.slot_active_[a]) rescan(a);

  while (state.active_count() > 1) {
    if (stop.kind == StopRule::Kind::target_k && state.active_count() <= stop.k) break;
    std::size_t best = kGone;
    for (std::size_t a = 0; a < slots; ++a)
      if (state.slot_active_[a] && (best == kGone || nn_cand[a] < nn_cand[best])) best = a;
    std::size_t sa = best, sb = nn[best];
    if (state.slot_key_[sb] < state.slot_key_[sa]) std::swap(sa, sb);
    const std::size_t ida = state.slot_id_[sa], idb = state.slot_id_[sb];

    if (stop.kind == StopRule::Kind::inconsistency) {
      const double coeff = candidate_inconsistency(state.dendrogram_, ida, idb,
                                                   nn_cand[best].distance(), stop.depth);
      if (coeff > stop.threshold) break;
    }
    state.merge(ida, idb);

    const std::size_t kept = std::min(sa, sb), removed = std::max(sa, sb);
    nn[removed] = kGone;
    rescan(kept);
    for (std::size_t r = 0; r < slots; ++r) {
      if (!state.slot_active_[r] || r == kept) continue;
      if (nn[r] == kept || nn[r] == removed) {
        rescan(r);
      } else {
        const Candidate c = candidate(r, kept);
        if (c < nn_cand[r]) {
          nn_cand[r] = c;
          nn[r] = kept;
        }
      }
    }
  }

  AgglomerativeResult out;
  out.assignment = state.assignment();
  out.clusters = state.active_count();
  out.dendrogram = std::move(state.dendrogram_);
  return out;
}

std::vector<std::size_t> retrieve_instances(const HashTable& table,
                                            const std::vector<std::size_t>& code_assignment) {
  require(code_assignment.size() == table.keys.size(), ErrorKind::consistency,
          "assignment covers " + std::to_string(code_assignment.size()) + " of " +
              std::to_string(table.keys.size()) + " hash keys");
  std::vector<std::size_t> labels(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) labels[i] = code_assignment[table.bucket_of[i]];
  return labels;
}

void save_dendrogram_csv(const Dendrogram& dendro, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "left,right,height,new_id,size\n";
  std::array<char, 64> buf;
  for (const Merge& m : dendro.merges) {
    auto r = std::to_chars(buf.data(), buf.data() + buf.size(), m.height);
    out << m.left << ',' << m.right << ',' << std::string_view(buf.data(), static_cast<std::size_t>(r.ptr - buf.data()))
        << ',' << m.new_id << ',' << m.size << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

void save_assignment_csv(const std::vector<std::size_t>& labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "instance_index,cluster_label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

std::vector<std::size_t> load_assignment_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line.rfind("instance_index", 0) == 0,
          ErrorKind::format, "missing assignment header");
  std::vector<std::size_t> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, ErrorKind::format, "bad assignment row");
    std::size_t idx = 0, label = 0;
    std::from_chars(line.data(), line.data() + comma, idx);
    auto [ptr, ec] = std::from_chars(line.data() + comma + 1, line.data() + line.size(), label);
    require(ec == std::errc() && idx == labels.size(), ErrorKind::format, "bad assignment row");
    labels.push_back(label);
  }
  return labels;
}

}  // namespace klshc
