#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "klshc/common.hpp"
#include "klshc/dataset.hpp"
#include "klshc/metric.hpp"

namespace klshc {

/// Fixed-width m-bit code; bit j is the output of hash function j.
class HashCode {
 public:
  HashCode() = default;
  explicit HashCode(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

  std::size_t size() const { return bits_; }
  bool bit(std::size_t j) const { return (words_[j / 64] >> (j % 64)) & 1U; }
  void set(std::size_t j, bool v) {
    const std::uint64_t mask = std::uint64_t{1} << (j % 64);
    if (v) words_[j / 64] |= mask; else words_[j / 64] &= ~mask;
  }
  const std::vector<std::uint64_t>& words() const { return words_; }

  /// ceil(m/4) hex digits; bit 0 is the most significant bit of the first digit.
  std::string to_hex() const;
  static HashCode from_hex(std::string_view hex, std::size_t bits);

  friend bool operator==(const HashCode&, const HashCode&) = default;
  friend auto operator<=>(const HashCode&, const HashCode&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Number of differing bits. Throws on width mismatch.
std::size_t hamming(const HashCode& a, const HashCode& b);

/// exp(-||x - y||_A^2 / sigma^2)
double kernel_value(const Vector& x, const Vector& y, const MetricMatrix& metric, double sigma);

struct SigmaMode {
  enum class Kind { median_heuristic, fixed } kind = Kind::median_heuristic;
  double value = 0.0;
  static SigmaMode median() { return {}; }
  static SigmaMode fixed(double v) { return {Kind::fixed, v}; }
};

struct KlshParams {
  std::size_t anchors = 300;  // p
  std::size_t selector = 30;  // t
  std::size_t bits = 32;      // m
  SigmaMode sigma;
  std::uint64_t seed = 0;
  /// Subtract the anchor mean from each selector, e_s - (t/p) 1. Without it
  /// every score is a sum of mostly positive terms and all codes collapse to 1s.
  bool centered = true;
};

/// Frozen A-distance KLSH model. Each bit j is
/// sign(sum_i weights(j,i) * k(x, anchor_i)) with weights row j = K^{-1/2} e_s(j),
/// or K^{-1/2} (e_s(j) - t/p) for a centered model.
class KlshModel {
 public:
  KlshModel(Matrix anchors, std::vector<std::size_t> anchor_rows, double sigma,
            Matrix weights, std::vector<std::vector<std::size_t>> selectors,
            std::size_t selector_size, MetricMatrix metric, std::uint64_t seed,
            bool centered = true);

  std::size_t bits() const { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t anchor_count() const { return static_cast<std::size_t>(anchors_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(anchors_.cols()); }
  std::size_t selector_size() const { return t_; }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  bool centered() const { return centered_; }
  const Matrix& anchors() const { return anchors_; }
  const std::vector<std::size_t>& anchor_rows() const { return anchor_rows_; }
  const Matrix& weights() const { return weights_; }
  const std::vector<std::vector<std::size_t>>& selectors() const { return selectors_; }
  const MetricMatrix& metric() const { return metric_; }

  /// Eigenvalues of K below -1e-8 that were clamped while building.
  int clamped_eigenvalues = 0;

  /// Kernel values k(x, anchor_i), i = 0..p-1.
  Vector kernel_row(const Eigen::Ref<const Vector>& x) const;

 private:
  Matrix anchors_;
  std::vector<std::size_t> anchor_rows_;
  double sigma_;
  Matrix weights_;
  std::vector<std::vector<std::size_t>> selectors_;
  std::size_t t_;
  MetricMatrix metric_;
  std::uint64_t seed_;
  bool centered_;
  Matrix factor_;           // A = L L'
  Matrix mapped_anchors_;   // anchors * L
};

KlshModel build_klsh(const Dataset& ds, const MetricMatrix& metric, const KlshParams& params);

HashCode hash_point(const KlshModel& model, const Eigen::Ref<const Vector>& x);

/// Instances grouped by code. Buckets are ordered by their smallest member
/// index and each bucket lists its members in increasing order.
struct HashTable {
  std::size_t bits = 0;
  std::vector<HashCode> code_of;
  std::vector<HashCode> keys;
  std::vector<std::vector<std::size_t>> buckets;
  std::vector<std::size_t> bucket_of;

  std::size_t size() const { return code_of.size(); }
  /// Bucket position of a code, or npos.
  std::size_t find(const HashCode& code) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  static HashTable from_codes(std::vector<HashCode> codes);

 private:
  std::map<HashCode, std::size_t> index_;
};

/// Hashes every row; the result does not depend on `threads`.
HashTable hash_dataset(const KlshModel& model, const Dataset& ds, unsigned threads = 1);

void save_model(const KlshModel& model, const std::filesystem::path& path);
KlshModel load_model(const std::filesystem::path& path);

/// One line per instance: "index,hexcode".
void save_codes(const HashTable& table, const std::filesystem::path& path);

}  // namespace klshc
