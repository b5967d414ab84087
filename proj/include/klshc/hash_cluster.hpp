#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "klshc/common.hpp"
#include "klshc/dataset.hpp"
#include "klshc/klsh.hpp"

namespace klshc {

struct Merge {
  std::size_t left;
  std::size_t right;
  double height;
  std::size_t new_id;
  double size;  // total weight of the merged cluster
};

/// Merge history. Leaves are ids 0..leaves-1; merge k creates id leaves + k.
struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;
  /// False once some merge height drops below its predecessor
  /// (average linkage does not guarantee monotone heights).
  bool monotone = true;

  void append(const Merge& m);
};

struct StopRule {
  enum class Kind { target_k, inconsistency } kind = Kind::target_k;
  std::size_t k = 1;
  double threshold = 0.0;
  int depth = 2;

  static StopRule target(std::size_t k) { return {Kind::target_k, k, 0.0, 2}; }
  static StopRule inconsistent(double threshold, int depth = 2) {
    return {Kind::inconsistency, 1, threshold, depth};
  }
};

struct AgglomerativeResult;

/// Agglomerative state over weighted items. Inter-cluster proximity is stored
/// as the sum of item-pair distances weighted by item sizes, so that
/// proximity(i, j) = sum / (size_i * size_j) is the size-weighted average
/// linkage. Distance ties are broken by the pair of cluster keys (smallest
/// item index in each cluster), lowest first.
class ClusterState {
 public:
  /// `dist` is a symmetric c x c matrix of item distances (diagonal ignored).
  static ClusterState from_distances(const Eigen::Ref<const Eigen::MatrixXd>& dist,
                                     std::vector<double> sizes);

  std::size_t items() const { return sizes_.size(); }
  std::size_t active_count() const { return active_count_; }
  std::size_t step() const { return dendrogram_.merges.size(); }
  bool is_active(std::size_t id) const;
  /// Active cluster ids in increasing order.
  std::vector<std::size_t> active() const;
  const std::vector<std::size_t>& members(std::size_t id) const;
  double size(std::size_t id) const;
  std::size_t key(std::size_t id) const;
  /// Average-linkage distance between two active clusters (0 when i == j).
  double proximity(std::size_t i, std::size_t j) const;
  /// size_i * size_j * proximity(i, j), as stored.
  double linkage_sum(std::size_t i, std::size_t j) const;
  const Dendrogram& dendrogram() const { return dendrogram_; }

  /// Merges two active clusters into a fresh id and returns that id.
  std::size_t merge(std::size_t i, std::size_t j);

  /// Per-item label; clusters are numbered by their smallest item.
  std::vector<std::size_t> assignment() const;

 private:
  friend AgglomerativeResult run_agglomerative(ClusterState state, const StopRule& stop);
  friend ClusterState init_from_hashtable(const HashTable& table);
  friend ClusterState init_per_point(const HashTable& table);
  friend ClusterState init_from_points(const Dataset& ds, unsigned threads);
  template <typename SumFn>
  static ClusterState build(std::vector<double> sizes, SumFn&& fill_sums);
  ClusterState() = default;

  std::size_t slot_of(std::size_t id) const;
  double& sum_at(std::size_t a, std::size_t b) { return sums_[tri(a, b)]; }
  double sum_at(std::size_t a, std::size_t b) const { return sums_[tri(a, b)]; }
  std::size_t tri(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    return b * (b - 1) / 2 + a;  // a < b
  }

  std::vector<double> sums_;        // condensed over slots
  std::vector<double> sizes_;       // per item (initial weights)
  std::vector<double> slot_size_;
  std::vector<std::size_t> slot_key_;
  std::vector<std::size_t> slot_id_;          // cluster id held by a slot
  std::vector<bool> slot_active_;
  std::vector<std::vector<std::size_t>> slot_members_;
  std::vector<std::size_t> id_slot_;          // cluster id -> slot (npos when gone)
  std::size_t active_count_ = 0;
  Dendrogram dendrogram_;
};

/// One cluster per distinct code, weighted by bucket size, Hamming proximity.
ClusterState init_from_hashtable(const HashTable& table);
/// One unit-weight cluster per instance, Hamming proximity between instance codes.
ClusterState init_per_point(const HashTable& table);
/// One unit-weight cluster per row, Euclidean proximity.
ClusterState init_from_points(const Dataset& ds, unsigned threads = 1);

struct ClosestPair {
  std::size_t i;  // lower key
  std::size_t j;
  double distance;
};

/// Exhaustive scan over active pairs.
ClosestPair find_closest_pair(const ClusterState& state);

/// (h - mean) / std over this merge's height and the heights of the merges up
/// to `depth - 1` levels below it (population std); 0 when std is 0.
double inconsistency_coefficient(const Dendrogram& dendro, std::size_t merge_index, int depth);

struct AgglomerativeResult {
  Dendrogram dendrogram;
  std::vector<std::size_t> assignment;  // per item
  std::size_t clusters = 0;
};

AgglomerativeResult run_agglomerative(ClusterState state, const StopRule& stop);

/// Expands a per-code assignment (indexed by bucket) to every instance.
std::vector<std::size_t> retrieve_instances(const HashTable& table,
                                            const std::vector<std::size_t>& code_assignment);

/// CSV with header left,right,height,new_id,size.
void save_dendrogram_csv(const Dendrogram& dendro, const std::filesystem::path& path);
/// CSV with header instance_index,cluster_label.
void save_assignment_csv(const std::vector<std::size_t>& labels, const std::filesystem::path& path);
std::vector<std::size_t> load_assignment_csv(const std::filesystem::path& path);

}  // namespace klshc
