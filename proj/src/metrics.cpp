#include "align/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "align/error.hpp"

namespace align {

std::string_view to_string(Role role) noexcept {
  return role == Role::analyst ? "analyst" : "consumer";
}

Role parse_role(std::string_view text) {
  if (text == "analyst") return Role::analyst;
  if (text == "consumer") return Role::consumer;
  throw Error(Errc::invalid_argument,
              "unknown role '" + std::string(text) + "' (expected analyst or consumer)");
}

std::string_view to_string(AlignmentKind kind) noexcept {
  switch (kind) {
    case AlignmentKind::baseline: return "baseline";
    case AlignmentKind::residual: return "residual";
    case AlignmentKind::overall: return "overall";
  }
  return "?";
}

PartyParams::PartyParams(Role role_, int field_id_, LogRelativeVector field_mean_,
                         LogRelativeVector individual_deviation_,
                         std::optional<LogRelativeVector> negotiation_adjustment_)
    : role(role_),
      field_id(field_id_),
      field_mean(std::move(field_mean_)),
      individual_deviation(std::move(individual_deviation_)),
      negotiation_adjustment(negotiation_adjustment_
                                 ? std::move(*negotiation_adjustment_)
                                 : LogRelativeVector::zeros(field_mean.size(),
                                                            field_mean.reference_index())) {
  if (field_id < 1) throw Error(Errc::invalid_argument, "field id must be >= 1");
  require_compatible(field_mean, individual_deviation);
  require_compatible(field_mean, negotiation_adjustment);
}

AlignmentVector::AlignmentVector(AlignmentKind kind, std::vector<double> values,
                                 std::size_t reference_index)
    : kind_(kind), values_(std::move(values), reference_index) {}

AlignmentVector::AlignmentVector(AlignmentKind kind, const LogRelativeVector& values)
    : kind_(kind), values_(values) {}

void AlignmentThresholds::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(Errc::invalid_argument, "epsilon must be a positive finite number");
  }
  if (!(p >= 1.0) || !std::isfinite(p)) {
    throw Error(Errc::invalid_argument, "p must be a finite number >= 1");
  }
}

double sup_norm(std::span<const double> values) noexcept {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double power_mean_norm(std::span<const double> values, double p) {
  if (!(p >= 1.0)) throw Error(Errc::invalid_argument, "p must be >= 1");
  if (values.empty()) throw Error(Errc::empty_input, "norm of an empty vector");
  const double m = sup_norm(values);
  if (m == 0.0) return 0.0;
  // Scaling by the max keeps |x|^p away from overflow and underflow for large p.
  double acc = 0.0;
  for (double v : values) acc += std::pow(std::abs(v) / m, p);
  return m * std::pow(acc / static_cast<double>(values.size()), 1.0 / p);
}

LogRelativeVector party_log_relative(const PartyParams& party, Stage stage) {
  auto psi = party.field_mean + party.individual_deviation;
  if (stage == Stage::resolution) psi = psi + party.negotiation_adjustment;
  return psi;
}

namespace {

void require_roles(const PartyParams& analyst, const PartyParams& consumer) {
  if (analyst.role != Role::analyst) {
    throw Error(Errc::invalid_argument, "first party must have the analyst role");
  }
  if (consumer.role != Role::consumer) {
    throw Error(Errc::invalid_argument, "second party must have the consumer role");
  }
  require_compatible(analyst.field_mean, consumer.field_mean);
}

}  // namespace

AlignmentVector baseline_alignment(const PartyParams& analyst, const PartyParams& consumer) {
  require_roles(analyst, consumer);
  const auto field_gap = analyst.field_mean - consumer.field_mean;
  const auto individual_gap = analyst.individual_deviation - consumer.individual_deviation;
  return AlignmentVector(AlignmentKind::baseline, field_gap + individual_gap);
}

AlignmentVector alignment_difference(const LogRelativeVector& analyst,
                                     const LogRelativeVector& consumer) {
  return AlignmentVector(AlignmentKind::baseline, analyst - consumer);
}

OverallAlignment overall_alignment(const AlignmentVector& baseline, const LogRelativeVector& phi,
                                   const LogRelativeVector& theta) {
  require_compatible(baseline.as_log_relative(), phi);
  require_compatible(phi, theta);
  AlignmentVector residual(AlignmentKind::residual, phi - theta);
  AlignmentVector overall(AlignmentKind::overall,
                          baseline.as_log_relative() + residual.as_log_relative());
  return {std::move(overall), std::move(residual)};
}

NormCheck strong_check(const AlignmentVector& d, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(Errc::invalid_argument, "epsilon must be positive");
  const double n = sup_norm(d.values());
  return {n, n < epsilon};
}

NormCheck weak_check(const AlignmentVector& d, double epsilon, double p) {
  if (!(epsilon > 0.0)) throw Error(Errc::invalid_argument, "epsilon must be positive");
  const double n = power_mean_norm(d.values(), p);
  return {n, n < epsilon};
}

AlignmentVerdict assess(const AlignmentVector& d, const AlignmentThresholds& thresholds) {
  thresholds.validate();
  const auto s = strong_check(d, thresholds.epsilon);
  const auto w = weak_check(d, thresholds.epsilon, thresholds.p);
  return {s.aligned, w.aligned, s.norm, w.norm, thresholds.epsilon, thresholds.p};
}

AlignmentVector group_baseline_alignment(const PartyParams& analyst,
                                         std::span<const PartyParams> consumers) {
  if (consumers.empty()) throw Error(Errc::empty_input, "consumer group is empty");
  auto acc = baseline_alignment(analyst, consumers.front()).as_log_relative();
  for (std::size_t j = 1; j < consumers.size(); ++j) {
    acc = acc + baseline_alignment(analyst, consumers[j]).as_log_relative();
  }
  if (consumers.size() > 1) acc = (1.0 / static_cast<double>(consumers.size())) * acc;
  return AlignmentVector(AlignmentKind::baseline, acc);
}

AlignmentVector group_overall_alignment(const AlignmentVector& group_baseline,
                                        const LogRelativeVector& phi,
                                        std::span<const LogRelativeVector> thetas) {
  if (thetas.empty()) throw Error(Errc::empty_input, "consumer adjustment list is empty");
  LogRelativeVector mean_theta = thetas.front();
  for (std::size_t j = 1; j < thetas.size(); ++j) mean_theta = mean_theta + thetas[j];
  if (thetas.size() > 1) mean_theta = (1.0 / static_cast<double>(thetas.size())) * mean_theta;
  return overall_alignment(group_baseline, phi, mean_theta).overall;
}

}  // namespace align
