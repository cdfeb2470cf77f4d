#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "align/metrics.hpp"
#include "align/negotiation.hpp"
#include "align/principles.hpp"
#include "align/random.hpp"

namespace align {

enum class ExperimentKind { alpha_effect, scenario, propositions, large_audience };

std::string_view to_string(ExperimentKind kind) noexcept;
ExperimentKind parse_experiment_kind(std::string_view text);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::propositions;
  PrincipleSet principles = PrincipleSet::canonical();

  // Mean model. Empty vectors select the defaults: zeros for the analyst
  // field and for the alpha-effect mean, and an alternating +/-0.3 pattern
  // for the consumer field.
  std::vector<double> analyst_field_mean;
  std::vector<double> consumer_field_mean;
  std::vector<double> mean_log_relative;
  double deviation_sd = 0.2;
  std::optional<double> audience_sd;  // defaults to deviation_sd

  std::vector<double> alpha_zero = {1.0, 100.0};
  std::size_t sample_count = 100000;
  std::size_t replicates = 1000;
  std::optional<NegotiationStrategy> strategy;
  std::vector<std::size_t> audience_sizes = {1, 100, 10000};

  // Proposition suite sizes.
  std::vector<double> alpha_grid = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5,
                                    1.75, 2.0, 2.25, 2.5, 2.75, 3.0};
  std::size_t grid_vectors = 100;
  std::size_t optimal_vectors = 1000;
  std::size_t field_matched_draws = 10000;
  std::size_t continuity_draws = 100000;
  std::size_t audience_replicates = 200;

  AlignmentThresholds thresholds;
  Seed seed = 42;
  unsigned threads = 0;  // 0 selects std::thread::hardware_concurrency()
  bool keep_raw = false;

  LogRelativeVector analyst_lambda() const;
  LogRelativeVector consumer_lambda() const;
  LogRelativeVector mean_psi() const;
  double audience_deviation_sd() const { return audience_sd.value_or(deviation_sd); }

  void validate() const;
};

/// Parses a JSON experiment description. Unknown keys are rejected.
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

enum class CheckStatus { pass, fail, not_applicable, negative_control };

std::string_view to_string(CheckStatus status) noexcept;

struct SummaryRow {
  std::string condition;
  std::string principle;  // "*" for whole-vector statistics
  std::string statistic;
  double value;
  std::optional<double> reference;
  std::optional<CheckStatus> status;
};

struct Check {
  std::string name;
  CheckStatus status;
  std::string detail;
};

struct RawDraw {
  std::string condition;
  std::size_t draw;
  std::string principle;
  std::string quantity;
  double value;
};

struct ExperimentResult {
  ExperimentKind experiment;
  Seed seed;
  std::vector<SummaryRow> rows;  // sorted by (condition, principle)
  std::vector<Check> checks;
  std::vector<RawDraw> raw;

  /// No check failed; negative controls and inapplicable checks do not fail.
  bool passed() const noexcept;
};

/// Sweeps alpha_0 at a fixed mean allocation and reports per-principle
/// empirical means and variances against the Dirichlet moments.
ExperimentResult run_alpha_effect(const ExperimentConfig& config);

/// Replicated analyst/consumer pairs negotiated under config.strategy.
ExperimentResult run_scenario(const ExperimentConfig& config);

/// Monte Carlo checks of the five alignment propositions.
ExperimentResult run_propositions(const ExperimentConfig& config);

/// Quantiles of |B_group - delta|_inf per audience size.
ExperimentResult run_large_audience(const ExperimentConfig& config);

ExperimentResult run_experiment(const ExperimentConfig& config);

void write_summary_csv(std::ostream& out, const ExperimentResult& result);
void write_raw_csv(std::ostream& out, const ExperimentResult& result);

}  // namespace align
