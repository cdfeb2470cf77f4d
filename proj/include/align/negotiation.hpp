#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "align/metrics.hpp"
#include "align/random.hpp"

namespace align {

enum class StrategyKind {
  accommodating_analyst,  // accommodating analyst, intransigent consumer
  intransigent_analyst,   // intransigent analyst, accommodating consumer
  design_focused,         // both concede a fraction of the gap
  alpha_scaled,           // R = -alpha * B, split evenly
};

std::string_view to_string(StrategyKind kind) noexcept;
StrategyKind parse_strategy_kind(std::string_view text);

/// A negotiation profile. Concessions apply to design_focused only, alpha to
/// alpha_scaled only; supplying a parameter the kind does not use is a
/// strategy_mismatch error.
struct NegotiationStrategy {
  StrategyKind kind = StrategyKind::design_focused;
  std::optional<double> analyst_concession;
  std::optional<double> consumer_concession;
  std::optional<double> alpha;

  static NegotiationStrategy accommodating_analyst();
  static NegotiationStrategy intransigent_analyst();
  static NegotiationStrategy design_focused(double analyst_concession,
                                            double consumer_concession);
  static NegotiationStrategy alpha_scaled(double alpha);

  void validate() const;
};

struct NegotiationOutcome {
  LogRelativeVector phi;
  LogRelativeVector theta;
  AlignmentVector baseline;
  AlignmentVector residual;
  AlignmentVector overall;
  bool improved;
  AlignmentVerdict verdict;
};

/// Applies a strategy to the pair's baseline gap and evaluates the result.
NegotiationOutcome negotiate(const PartyParams& analyst, const PartyParams& consumer,
                             const NegotiationStrategy& strategy,
                             const AlignmentThresholds& thresholds = {});

/// True iff the p = 2 averaged norm of B + R does not exceed that of B.
bool improvement_check(const AlignmentVector& baseline, const AlignmentVector& residual);

/// R = -B, which drives D to zero.
AlignmentVector optimal_adjustment(const AlignmentVector& baseline);

/// Draws a party whose individual deviation is i.i.d. N(0, sd^2) on every
/// non-reference component. sd == 0 yields an exactly zero deviation.
PartyParams sample_party(Role role, int field_id, const LogRelativeVector& field_mean,
                         double deviation_sd, Rng& rng);
PartyParams sample_party(Role role, int field_id, const LogRelativeVector& field_mean,
                         double deviation_sd, Seed seed);

/// Gaussian deviation vector with zero reference component.
LogRelativeVector sample_deviation(std::size_t k, std::size_t reference_index, double sd,
                                   Rng& rng);

struct LargeAudienceDraw {
  AlignmentVector baseline;                // B_i.
  LogRelativeVector audience_mean_deviation;  // (1/J) sum_j eta_j
};

/// Group baseline alignment of an analyst against J consumers drawn from the
/// analyst's own field: B = (lambda_i - lambda) + (delta_i - mean eta).
LargeAudienceDraw large_audience_baseline(const PartyParams& analyst,
                                          const LogRelativeVector& field_mean,
                                          double audience_sd, std::size_t audience_size,
                                          Seed seed);

}  // namespace align
