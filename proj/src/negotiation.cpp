#include "align/negotiation.hpp"

#include <cmath>
#include <string>

#include "align/error.hpp"

namespace align {

std::string_view to_string(StrategyKind kind) noexcept {
  switch (kind) {
    case StrategyKind::accommodating_analyst: return "accommodating_analyst";
    case StrategyKind::intransigent_analyst: return "intransigent_analyst";
    case StrategyKind::design_focused: return "design_focused";
    case StrategyKind::alpha_scaled: return "alpha_scaled";
  }
  return "?";
}

StrategyKind parse_strategy_kind(std::string_view text) {
  if (text == "accommodating_analyst" || text == "accommodating_analyst_intransigent_consumer") {
    return StrategyKind::accommodating_analyst;
  }
  if (text == "intransigent_analyst" || text == "intransigent_analyst_accommodating_consumer") {
    return StrategyKind::intransigent_analyst;
  }
  if (text == "design_focused") return StrategyKind::design_focused;
  if (text == "alpha_scaled") return StrategyKind::alpha_scaled;
  throw Error(Errc::invalid_argument, "unknown negotiation strategy '" + std::string(text) + "'");
}

NegotiationStrategy NegotiationStrategy::accommodating_analyst() {
  return {StrategyKind::accommodating_analyst, std::nullopt, std::nullopt, std::nullopt};
}

NegotiationStrategy NegotiationStrategy::intransigent_analyst() {
  return {StrategyKind::intransigent_analyst, std::nullopt, std::nullopt, std::nullopt};
}

NegotiationStrategy NegotiationStrategy::design_focused(double analyst_concession,
                                                        double consumer_concession) {
  NegotiationStrategy s{StrategyKind::design_focused, analyst_concession, consumer_concession,
                        std::nullopt};
  s.validate();
  return s;
}

NegotiationStrategy NegotiationStrategy::alpha_scaled(double alpha) {
  NegotiationStrategy s{StrategyKind::alpha_scaled, std::nullopt, std::nullopt, alpha};
  s.validate();
  return s;
}

void NegotiationStrategy::validate() const {
  const bool has_concessions = analyst_concession || consumer_concession;
  const auto name = std::string(to_string(kind));
  switch (kind) {
    case StrategyKind::accommodating_analyst:
    case StrategyKind::intransigent_analyst:
      if (has_concessions || alpha) {
        throw Error(Errc::strategy_mismatch, name + " takes no concession or alpha parameters");
      }
      break;
    case StrategyKind::design_focused:
      if (alpha) throw Error(Errc::strategy_mismatch, "design_focused does not take alpha");
      if (!analyst_concession || !consumer_concession) {
        throw Error(Errc::strategy_mismatch, "design_focused needs both concessions");
      }
      for (double g : {*analyst_concession, *consumer_concession}) {
        if (!(g >= 0.0 && g <= 1.0)) {
          throw Error(Errc::invalid_argument, "concessions must lie in [0, 1]");
        }
      }
      break;
    case StrategyKind::alpha_scaled:
      if (has_concessions) {
        throw Error(Errc::strategy_mismatch, "alpha_scaled does not take concessions");
      }
      if (!alpha) throw Error(Errc::strategy_mismatch, "alpha_scaled needs alpha");
      if (!(*alpha >= 0.0) || !std::isfinite(*alpha)) {
        throw Error(Errc::invalid_argument, "alpha must be finite and >= 0");
      }
      break;
  }
}

NegotiationOutcome negotiate(const PartyParams& analyst, const PartyParams& consumer,
                             const NegotiationStrategy& strategy,
                             const AlignmentThresholds& thresholds) {
  strategy.validate();
  thresholds.validate();
  auto b = baseline_alignment(analyst, consumer);
  const auto& gap = b.as_log_relative();
  const auto zero = LogRelativeVector::zeros(gap.size(), gap.reference_index());

  LogRelativeVector phi = zero;
  LogRelativeVector theta = zero;
  switch (strategy.kind) {
    case StrategyKind::accommodating_analyst:
      phi = -1.0 * gap;
      break;
    case StrategyKind::intransigent_analyst:
      theta = gap;
      break;
    case StrategyKind::design_focused:
      phi = -*strategy.analyst_concession * gap;
      theta = *strategy.consumer_concession * gap;
      break;
    case StrategyKind::alpha_scaled:
      phi = -(*strategy.alpha / 2.0) * gap;
      theta = (*strategy.alpha / 2.0) * gap;
      break;
  }

  auto [overall, residual] = overall_alignment(b, phi, theta);
  const bool improved = improvement_check(b, residual);
  const auto verdict = assess(overall, thresholds);
  return {std::move(phi), std::move(theta), std::move(b), std::move(residual),
          std::move(overall), improved, verdict};
}

bool improvement_check(const AlignmentVector& baseline, const AlignmentVector& residual) {
  require_compatible(baseline.as_log_relative(), residual.as_log_relative());
  const auto d = baseline.as_log_relative() + residual.as_log_relative();
  return power_mean_norm(d.values(), 2.0) <= power_mean_norm(baseline.values(), 2.0);
}

AlignmentVector optimal_adjustment(const AlignmentVector& baseline) {
  return AlignmentVector(AlignmentKind::residual, -1.0 * baseline.as_log_relative());
}

LogRelativeVector sample_deviation(std::size_t k, std::size_t reference_index, double sd,
                                   Rng& rng) {
  if (!(sd >= 0.0) || !std::isfinite(sd)) {
    throw Error(Errc::invalid_argument, "deviation sd must be finite and >= 0");
  }
  std::vector<double> v(k, 0.0);
  if (sd > 0.0) {
    std::normal_distribution<double> normal(0.0, sd);
    for (std::size_t c = 0; c < k; ++c) {
      if (c != reference_index) v[c] = normal(rng);
    }
  }
  return LogRelativeVector(std::move(v), reference_index);
}

PartyParams sample_party(Role role, int field_id, const LogRelativeVector& field_mean,
                         double deviation_sd, Rng& rng) {
  auto deviation =
      sample_deviation(field_mean.size(), field_mean.reference_index(), deviation_sd, rng);
  return PartyParams(role, field_id, field_mean, std::move(deviation));
}

PartyParams sample_party(Role role, int field_id, const LogRelativeVector& field_mean,
                         double deviation_sd, Seed seed) {
  Rng rng(seed);
  return sample_party(role, field_id, field_mean, deviation_sd, rng);
}

LargeAudienceDraw large_audience_baseline(const PartyParams& analyst,
                                          const LogRelativeVector& field_mean,
                                          double audience_sd, std::size_t audience_size,
                                          Seed seed) {
  if (analyst.role != Role::analyst) {
    throw Error(Errc::invalid_argument, "large-audience baseline needs an analyst");
  }
  require_compatible(analyst.field_mean, field_mean);
  if (!(analyst.field_mean == field_mean)) {
    throw Error(Errc::invalid_argument, "audience must share the analyst's field mean");
  }
  if (audience_size == 0) throw Error(Errc::empty_input, "audience size must be >= 1");

  Rng rng(seed);
  const std::size_t k = field_mean.size();
  const std::size_t r = field_mean.reference_index();
  auto eta_sum = sample_deviation(k, r, audience_sd, rng);
  for (std::size_t j = 1; j < audience_size; ++j) {
    eta_sum = eta_sum + sample_deviation(k, r, audience_sd, rng);
  }
  std::vector<double> mean(k);
  for (std::size_t c = 0; c < k; ++c) mean[c] = eta_sum[c] / static_cast<double>(audience_size);
  LogRelativeVector eta_mean(std::move(mean), r);

  auto b = (analyst.field_mean - field_mean) + (analyst.individual_deviation - eta_mean);
  return {AlignmentVector(AlignmentKind::baseline, b), std::move(eta_mean)};
}

}  // namespace align
