#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <utility>
#include <vector>

#include "klshc/common.hpp"

namespace klshc {

inline constexpr int kUnlabeled = -1;

/// n x d feature matrix with optional per-row class ids.
///
/// `labels` is either empty (no labels at all) or has one entry per row,
/// where kUnlabeled marks a row without a class.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Matrix features, std::vector<int> labels = {});

  std::size_t n() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(features_.cols()); }
  const Matrix& features() const { return features_; }
  auto row(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)); }

  bool has_labels() const { return !labels_.empty(); }
  const std::vector<int>& labels() const { return labels_; }
  int label(std::size_t i) const { return labels_.empty() ? kUnlabeled : labels_[i]; }

  /// Rows in the given order (duplicates allowed).
  Dataset select(const std::vector<std::size_t>& rows) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Must-link (similar) and cannot-link (dissimilar) pairs. Pairs are stored
/// normalized with first < second, sorted, without duplicates.
struct ConstraintSet {
  std::vector<IndexPair> similar;
  std::vector<IndexPair> dissimilar;

  /// Throws if the sets overlap, a pair is (i,i), or an index is >= n.
  void validate(std::size_t n) const;
};

// Ingestion. All loaders are single-threaded.

/// MNIST IDX pair. Gzipped files (".gz") are decompressed transparently.
/// Pixels are scaled to [0,1] by dividing by 255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Header-less CSV of d floats per row; when `label_column` is set the last
/// column is an integer class id (-1 = unlabeled).
Dataset load_csv(const std::filesystem::path& path, bool label_column);
void save_csv(const Dataset& ds, const std::filesystem::path& path, bool label_column);

/// k isotropic Gaussian blobs; centers drawn uniformly in [-10, 10]^d.
Dataset synth_blobs(int k, int n_per, int d, double spread, std::uint64_t seed);

/// Samples `per_class` rows from each labeled class and emits every same-class
/// pair as similar and every cross-class pair as dissimilar.
ConstraintSet make_constraints(const Dataset& ds, const std::set<int>& labeled_classes,
                               std::size_t per_class, std::uint64_t seed);

/// Seeded uniform subset of `n` rows drawn from rows whose label is in
/// `classes` (all labeled rows when `classes` is empty). Rows keep their
/// original relative order.
Dataset subset_by_class(const Dataset& ds, const std::set<int>& classes, std::size_t n,
                        std::uint64_t seed);

}  // namespace klshc
