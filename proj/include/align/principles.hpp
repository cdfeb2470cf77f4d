#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "align/random.hpp"

namespace align {

enum class Stage { baseline, resolution };

std::string_view to_string(Stage stage) noexcept;
Stage parse_stage(std::string_view text);

/// Ordered list of K distinct principle names with a designated reference
/// principle against which log-relative allocations are measured.
class PrincipleSet {
 public:
  PrincipleSet(std::vector<std::string> names, std::size_t reference_index = 0);

  /// The six design principles in the order used by the capstone study:
  /// clarity, exhaustive, data-matching, reproducible, second-order, skeptical.
  static PrincipleSet canonical();

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t reference_index() const noexcept { return reference_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t k) const { return names_.at(k); }
  std::optional<std::size_t> index_of(std::string_view name) const noexcept;

  /// Accepts either a principle name or a decimal index.
  std::size_t resolve(std::string_view name_or_index) const;

  PrincipleSet with_reference(std::size_t reference_index) const;

  bool operator==(const PrincipleSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::size_t reference_;
};

/// Positive Dirichlet concentration parameters (alpha for analysts, omega for
/// consumers) together with their total.
class ConcentrationVector {
 public:
  explicit ConcentrationVector(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t k) const { return values_.at(k); }
  double total() const noexcept { return total_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
  double total_;
};

/// A point on the K-simplex. Zero components are representable so that
/// boundary survey responses can be smoothed explicitly; log_relative rejects
/// them unless smoothing is requested.
class AllocationVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit AllocationVector(std::vector<double> weights,
                            Stage stage = Stage::baseline);

  /// Rescales raw weights to sum to one when the raw sum is within
  /// `tolerance` of one; otherwise throws sum_violation.
  static AllocationVector renormalized(std::vector<double> raw, Stage stage,
                                       double tolerance);

  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](std::size_t k) const { return weights_.at(k); }
  std::size_t size() const noexcept { return weights_.size(); }
  Stage stage() const noexcept { return stage_; }
  bool on_boundary() const noexcept;

  bool operator==(const AllocationVector&) const = default;

 private:
  std::vector<double> weights_;
  Stage stage_;
};

/// Natural-log ratios against a reference principle; the reference component
/// is exactly zero.
class LogRelativeVector {
 public:
  LogRelativeVector(std::vector<double> values, std::size_t reference_index);

  static LogRelativeVector zeros(std::size_t k, std::size_t reference_index);

  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t k) const { return values_.at(k); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t reference_index() const noexcept { return reference_; }

  bool operator==(const LogRelativeVector&) const = default;

 private:
  std::vector<double> values_;
  std::size_t reference_;
};

// Componentwise arithmetic; operands must share K and the reference index.
LogRelativeVector operator+(const LogRelativeVector& a, const LogRelativeVector& b);
LogRelativeVector operator-(const LogRelativeVector& a, const LogRelativeVector& b);
LogRelativeVector operator*(double scale, const LogRelativeVector& v);

void require_compatible(const LogRelativeVector& a, const LogRelativeVector& b);

inline constexpr double kDefaultSmoothing = 1e-6;

AllocationVector mean_allocation(const ConcentrationVector& c);

/// values[k] = ln(w[k] / w[r]). With smoothing > 0 a vector that touches the
/// boundary is first mapped to (w + c) / (1 + K c); interior vectors are left
/// untouched. With smoothing == 0 a zero weight is a boundary_allocation error.
LogRelativeVector log_relative(const AllocationVector& a,
                               std::size_t reference_index,
                               double smoothing = 0.0);

/// Softmax inverse of log_relative: returns total * exp(psi) / sum(exp(psi)).
ConcentrationVector from_log_relative(const LogRelativeVector& psi, double total);

AllocationVector dirichlet_draw(const ConcentrationVector& c, Rng& rng);

std::vector<AllocationVector> sample_allocations(const ConcentrationVector& c,
                                                 std::size_t n, Seed seed);

struct BetaParams {
  double shape1;
  double shape2;

  double mean() const noexcept { return shape1 / (shape1 + shape2); }
  double variance() const noexcept {
    const double s = shape1 + shape2;
    return shape1 * shape2 / (s * s * (s + 1.0));
  }
};

/// Marginal of component k of Dirichlet(c): Beta(c_k, c_0 - c_k).
BetaParams marginal_beta_params(const ConcentrationVector& c, std::size_t k);

}  // namespace align
