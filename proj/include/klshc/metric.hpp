#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "klshc/common.hpp"
#include "klshc/dataset.hpp"

namespace klshc {

/// Symmetric PSD d x d matrix A defining ||x - y||_A = sqrt((x-y)' A (x-y)).
class MetricMatrix {
 public:
  static constexpr double kSymmetryTol = 1e-10;
  static constexpr double kEigenTol = -1e-8;

  /// Validates symmetry and numerical PSD; throws numerical errors otherwise.
  explicit MetricMatrix(Matrix a);
  static MetricMatrix identity(std::size_t d);
  static MetricMatrix diagonal(const Vector& diag);

  const Matrix& matrix() const { return a_; }
  std::size_t dim() const { return static_cast<std::size_t>(a_.rows()); }
  bool is_diagonal() const { return diagonal_; }
  double min_eigenvalue() const;

  /// L with A = L L' (spectral square root); rows of X*L live in the learned space.
  Matrix factor() const;

 private:
  Matrix a_;
  bool diagonal_ = false;
};

enum class MetricMode { diagonal, full };
const char* to_string(MetricMode mode);
MetricMode parse_metric_mode(const std::string& s);

struct MetricLearnConfig {
  /// Unset: diagonal when d > 32, full otherwise.
  std::optional<MetricMode> mode;
  int max_iters = 200;
  double step_init = 1.0;
  /// Relative objective change that ends the descent.
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  std::size_t full_dim_cap = 1024;
  /// Per-set cap; larger sets are subsampled with the seed.
  std::size_t max_pairs = 50000;
};

struct MetricLearnResult {
  MetricMatrix metric;
  MetricMode mode;
  /// Objective after the initial point and after every accepted step.
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
  /// Set when the line search exhausted its halvings away from a stationary point.
  bool line_search_failed = false;
};

double mahalanobis(const Vector& x, const Vector& y, const MetricMatrix& a);

/// sum_S ||xi - xj||_A^2 - log(sum_D ||xi - xj||_A)
double objective(const MetricMatrix& a, const Dataset& ds, const ConstraintSet& cs);

/// Gradient of `objective` with respect to every entry of A.
Matrix objective_gradient(const MetricMatrix& a, const Dataset& ds, const ConstraintSet& cs);

MetricLearnResult learn_metric(const Dataset& ds, const ConstraintSet& cs,
                               const MetricLearnConfig& cfg);

/// Frobenius-nearest PSD matrix (negative eigenvalues clamped to zero).
MetricMatrix project_psd(const Matrix& m);

/// Rows mapped by the spectral square root of A; Euclidean distances in the
/// result equal A-distances in the input.
Dataset transform(const Dataset& ds, const MetricMatrix& a);

/// d rows of d comma-separated values after a one-line `#` header.
void save_metric_csv(const MetricMatrix& a, const std::filesystem::path& path,
                     const std::string& header);
MetricMatrix load_metric_csv(const std::filesystem::path& path);

}  // namespace klshc
