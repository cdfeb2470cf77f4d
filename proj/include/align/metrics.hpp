#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "align/principles.hpp"

namespace align {

enum class Role { analyst, consumer };

std::string_view to_string(Role role) noexcept;
Role parse_role(std::string_view text);

/// Mean-model decomposition of one party's log-relative allocation:
/// field mean + individual deviation (+ negotiation adjustment at resolution).
struct PartyParams {
  PartyParams(Role role, int field_id, LogRelativeVector field_mean,
              LogRelativeVector individual_deviation,
              std::optional<LogRelativeVector> negotiation_adjustment = std::nullopt);

  std::size_t size() const noexcept { return field_mean.size(); }
  std::size_t reference_index() const noexcept { return field_mean.reference_index(); }

  Role role;
  int field_id;
  LogRelativeVector field_mean;
  LogRelativeVector individual_deviation;
  LogRelativeVector negotiation_adjustment;
};

enum class AlignmentKind { baseline, residual, overall };

std::string_view to_string(AlignmentKind kind) noexcept;

/// Per-principle analyst-minus-consumer differences (B, R or D). K components
/// are stored; the reference component is structurally zero.
class AlignmentVector {
 public:
  AlignmentVector(AlignmentKind kind, std::vector<double> values, std::size_t reference_index);
  AlignmentVector(AlignmentKind kind, const LogRelativeVector& values);

  AlignmentKind kind() const noexcept { return kind_; }
  std::span<const double> values() const { return values_.values(); }
  double operator[](std::size_t k) const { return values_[k]; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t reference_index() const noexcept { return values_.reference_index(); }
  const LogRelativeVector& as_log_relative() const noexcept { return values_; }

  bool operator==(const AlignmentVector&) const = default;

 private:
  AlignmentKind kind_;
  LogRelativeVector values_;
};

struct AlignmentThresholds {
  double epsilon = 0.1;
  double p = 2.0;

  void validate() const;
};

struct NormCheck {
  double norm;
  bool aligned;
};

struct AlignmentVerdict {
  bool strong;
  bool weak;
  double sup_norm;
  double p_norm;
  double epsilon;
  double p;

  bool operator==(const AlignmentVerdict&) const = default;
};

double sup_norm(std::span<const double> values) noexcept;

/// ((1/K) sum |x_k|^p)^(1/p), averaged over all K components.
double power_mean_norm(std::span<const double> values, double p);

LogRelativeVector party_log_relative(const PartyParams& party, Stage stage);

/// B = (lambda_analyst - lambda_consumer) + (delta - eta).
AlignmentVector baseline_alignment(const PartyParams& analyst, const PartyParams& consumer);

/// B from realised log-relative allocations: psi - kappa.
AlignmentVector alignment_difference(const LogRelativeVector& analyst,
                                     const LogRelativeVector& consumer);

struct OverallAlignment {
  AlignmentVector overall;   // D
  AlignmentVector residual;  // R
};

/// R = phi - theta and D = B + R.
OverallAlignment overall_alignment(const AlignmentVector& baseline, const LogRelativeVector& phi,
                                   const LogRelativeVector& theta);

/// Strict sup-norm test: max_k |D_k| < epsilon.
NormCheck strong_check(const AlignmentVector& d, double epsilon);

/// Strict averaged power-mean test.
NormCheck weak_check(const AlignmentVector& d, double epsilon, double p);

AlignmentVerdict assess(const AlignmentVector& d, const AlignmentThresholds& thresholds);

/// Average of the pairwise baseline alignments against a group of J consumers.
AlignmentVector group_baseline_alignment(const PartyParams& analyst,
                                         std::span<const PartyParams> consumers);

/// D = B_group + (phi - mean_j theta_j).
AlignmentVector group_overall_alignment(const AlignmentVector& group_baseline,
                                        const LogRelativeVector& phi,
                                        std::span<const LogRelativeVector> thetas);

}  // namespace align
