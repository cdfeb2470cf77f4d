#include "align/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include <json.hpp>

#include "align/csv.hpp"
#include "align/error.hpp"

namespace align {

namespace {

using nlohmann::json;

constexpr double kExactTolerance = 1e-12;

// Stream labels for derive_seed; each experiment family draws from its own
// stream so adding draws to one never perturbs another.
enum Stream : std::uint64_t {
  kAlphaEffect = 1,
  kScenario,
  kGrid,
  kOptimal,
  kFieldMatched,
  kContinuity,
  kAudienceAnalyst,
  kAudienceMembers,
};

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n). Work items write to disjoint pre-sized slots,
// so the result is independent of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Linear-interpolation quantile (type 7).
double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error(Errc::empty_input, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Moments {
  double mean;
  double variance;  // unbiased
};

Moments column_moments(const std::vector<double>& flat, std::size_t k_count, std::size_t k) {
  const std::size_t n = flat.size() / k_count;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += flat[i * k_count + k];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = flat[i * k_count + k] - mean;
    ss += d * d;
  }
  return {mean, n > 1 ? ss / static_cast<double>(n - 1) : 0.0};
}

CheckStatus status_of(bool ok) { return ok ? CheckStatus::pass : CheckStatus::fail; }

std::string label(std::string_view prefix, double value) {
  return std::string(prefix) + csv::format_double(value);
}

LogRelativeVector lambda_or(const std::vector<double>& values, const PrincipleSet& set,
                            std::vector<double> fallback, const char* what) {
  if (values.empty()) return LogRelativeVector(std::move(fallback), set.reference_index());
  if (values.size() != set.size()) {
    throw Error(Errc::dimension_mismatch, std::string(what) + " has " +
                                              std::to_string(values.size()) +
                                              " components, expected " +
                                              std::to_string(set.size()));
  }
  return LogRelativeVector(values, set.reference_index());
}

std::string strategy_label(const NegotiationStrategy& s) {
  std::string out(to_string(s.kind));
  if (s.kind == StrategyKind::design_focused) {
    out += "(" + csv::format_double(*s.analyst_concession) + "," +
           csv::format_double(*s.consumer_concession) + ")";
  } else if (s.kind == StrategyKind::alpha_scaled) {
    out += "(" + csv::format_double(*s.alpha) + ")";
  }
  return out;
}

void sort_rows(ExperimentResult& result) {
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.condition, a.principle) < std::tie(b.condition, b.principle);
  });
}

double l2(const AlignmentVector& v) { return power_mean_norm(v.values(), 2.0); }

// Errors |B_group - delta|_inf for `replicates` analysts facing an audience of
// `audience_size` same-field consumers. `exact` reports whether every draw
// satisfied B_group == delta - mean(eta) bit for bit.
struct AudienceSample {
  std::vector<double> errors;
  bool exact = true;
};

AudienceSample audience_errors(const ExperimentConfig& config, std::size_t j_index,
                               std::size_t audience_size, std::size_t replicates) {
  const auto lambda = config.analyst_lambda();
  AudienceSample out;
  out.errors.resize(replicates);
  std::vector<char> exact(replicates, 1);
  parallel_for(replicates, config.threads, [&](std::size_t r) {
    Rng rng(derive_seed(derive_seed(config.seed, kAudienceAnalyst, j_index), 0, r));
    const auto analyst = sample_party(Role::analyst, 1, lambda, config.deviation_sd, rng);
    const auto draw = large_audience_baseline(
        analyst, lambda, config.audience_deviation_sd(), audience_size,
        derive_seed(derive_seed(config.seed, kAudienceMembers, j_index), 0, r));
    const auto gap = draw.baseline.as_log_relative() - analyst.individual_deviation;
    out.errors[r] = sup_norm(gap.values());
    const auto expected = analyst.individual_deviation - draw.audience_mean_deviation;
    exact[r] = draw.baseline.as_log_relative() == expected;
  });
  out.exact = std::all_of(exact.begin(), exact.end(), [](char c) { return c != 0; });
  return out;
}

// Appends per-J quantile rows and consecutive-J rate rows; returns the
// overall status of the 1/sqrt(J) rate check.
CheckStatus audience_rows(const ExperimentConfig& config, const std::string& prefix,
                          ExperimentResult& result, bool& exact_all) {
  const auto& sizes = config.audience_sizes;
  std::vector<double> medians;
  bool all_zero = true;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    auto sample = audience_errors(config, j, sizes[j], config.audience_replicates);
    exact_all = exact_all && sample.exact;
    const std::string cond = prefix + "J=" + std::to_string(sizes[j]);
    const double median = quantile(sample.errors, 0.5);
    result.rows.push_back({cond, "*", "error_q10", quantile(sample.errors, 0.1), {}, {}});
    result.rows.push_back({cond, "*", "error_median", median, {}, {}});
    result.rows.push_back({cond, "*", "error_q90", quantile(sample.errors, 0.9), {}, {}});
    result.rows.push_back({cond, "*", "error_max",
                           *std::max_element(sample.errors.begin(), sample.errors.end()), {},
                           {}});
    const double sd = config.audience_deviation_sd();
    if (sd > 0.0) {
      const double bound = 3.0 * sd / std::sqrt(static_cast<double>(sizes[j]));
      const auto within = std::count_if(sample.errors.begin(), sample.errors.end(),
                                        [&](double e) { return e < bound; });
      result.rows.push_back({cond, "*", "fraction_within_3se",
                             static_cast<double>(within) /
                                 static_cast<double>(sample.errors.size()),
                             bound, {}});
    }
    all_zero = all_zero && std::all_of(sample.errors.begin(), sample.errors.end(),
                                       [](double e) { return e == 0.0; });
    medians.push_back(median);
  }
  if (config.audience_deviation_sd() == 0.0) {
    return all_zero ? CheckStatus::pass : CheckStatus::fail;
  }
  if (sizes.size() < 2) return CheckStatus::not_applicable;
  bool ok = true;
  for (std::size_t j = 0; j + 1 < sizes.size(); ++j) {
    const double ratio = medians[j] / medians[j + 1];
    const double expected =
        std::sqrt(static_cast<double>(sizes[j + 1]) / static_cast<double>(sizes[j]));
    const bool cell = ratio / expected <= 1.5 && ratio / expected >= 1.0 / 1.5;
    ok = ok && cell;
    result.rows.push_back({prefix + "rate J=" + std::to_string(sizes[j]) + "/J=" +
                               std::to_string(sizes[j + 1]),
                           "*", "median_ratio", ratio, expected, status_of(cell)});
  }
  return status_of(ok);
}

}  // namespace

// ---------------------------------------------------------------------------
// Names

std::string_view to_string(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::alpha_effect: return "alpha_effect";
    case ExperimentKind::scenario: return "scenario";
    case ExperimentKind::propositions: return "propositions";
    case ExperimentKind::large_audience: return "large_audience";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view text) {
  for (auto kind : {ExperimentKind::alpha_effect, ExperimentKind::scenario,
                    ExperimentKind::propositions, ExperimentKind::large_audience}) {
    if (text == to_string(kind)) return kind;
  }
  throw Error(Errc::invalid_argument, "unknown experiment '" + std::string(text) + "'");
}

std::string_view to_string(CheckStatus status) noexcept {
  switch (status) {
    case CheckStatus::pass: return "PASS";
    case CheckStatus::fail: return "FAIL";
    case CheckStatus::not_applicable: return "N/A";
    case CheckStatus::negative_control: return "NEGATIVE-CONTROL";
  }
  return "?";
}

bool ExperimentResult::passed() const noexcept {
  return std::none_of(checks.begin(), checks.end(),
                      [](const Check& c) { return c.status == CheckStatus::fail; });
}

// ---------------------------------------------------------------------------
// Config

LogRelativeVector ExperimentConfig::analyst_lambda() const {
  return lambda_or(analyst_field_mean, principles, std::vector<double>(principles.size(), 0.0),
                   "analyst_field_mean");
}

LogRelativeVector ExperimentConfig::consumer_lambda() const {
  std::vector<double> fallback(principles.size(), 0.0);
  double sign = 1.0;
  for (std::size_t k = 0; k < fallback.size(); ++k) {
    if (k == principles.reference_index()) continue;
    fallback[k] = 0.3 * sign;
    sign = -sign;
  }
  return lambda_or(consumer_field_mean, principles, std::move(fallback), "consumer_field_mean");
}

LogRelativeVector ExperimentConfig::mean_psi() const {
  return lambda_or(mean_log_relative, principles, std::vector<double>(principles.size(), 0.0),
                   "mean_log_relative");
}

void ExperimentConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(Errc::invalid_argument, std::string(name) + " must be >= 1");
  };
  positive(sample_count, "sample_count");
  positive(replicates, "replicates");
  positive(grid_vectors, "grid_vectors");
  positive(optimal_vectors, "optimal_vectors");
  positive(field_matched_draws, "field_matched_draws");
  positive(continuity_draws, "continuity_draws");
  positive(audience_replicates, "audience_replicates");
  for (double a : alpha_zero) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw Error(Errc::invalid_argument, "alpha_zero values must be positive");
    }
  }
  for (auto j : audience_sizes) positive(j, "audience size");
  if (!(deviation_sd >= 0.0) || !std::isfinite(deviation_sd)) {
    throw Error(Errc::invalid_argument, "deviation_sd must be >= 0");
  }
  if (audience_sd && (!(*audience_sd >= 0.0) || !std::isfinite(*audience_sd))) {
    throw Error(Errc::invalid_argument, "audience_sd must be >= 0");
  }
  for (double a : alpha_grid) {
    if (!std::isfinite(a)) throw Error(Errc::invalid_argument, "alpha_grid must be finite");
  }
  if (strategy) strategy->validate();
  thresholds.validate();
  analyst_lambda();
  consumer_lambda();
  mean_psi();
}

ExperimentConfig parse_experiment_config(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::schema, std::string("experiment config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::schema, "experiment config must be a JSON object");

  static const std::set<std::string> known = {
      "experiment",          "principles",          "reference",
      "analyst_field_mean",  "consumer_field_mean", "mean_log_relative",
      "deviation_sd",        "audience_sd",         "alpha_zero",
      "sample_count",        "replicates",          "strategy",
      "audience_sizes",      "alpha_grid",          "grid_vectors",
      "optimal_vectors",     "field_matched_draws", "continuity_draws",
      "audience_replicates", "epsilon",             "p",
      "seed",                "threads",             "keep_raw"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw Error(Errc::schema, "unknown config key '" + key + "'");
  }

  ExperimentConfig c;
  try {
    if (doc.contains("experiment")) {
      c.experiment = parse_experiment_kind(doc["experiment"].get<std::string>());
    }
    if (doc.contains("principles")) {
      c.principles = PrincipleSet(doc["principles"].get<std::vector<std::string>>());
    }
    if (doc.contains("reference")) {
      const auto& r = doc["reference"];
      const auto idx = r.is_string() ? c.principles.resolve(r.get<std::string>())
                                     : c.principles.resolve(std::to_string(r.get<std::size_t>()));
      c.principles = c.principles.with_reference(idx);
    }
    auto vec = [&](const char* key, std::vector<double>& out) {
      if (doc.contains(key)) out = doc[key].get<std::vector<double>>();
    };
    auto count = [&](const char* key, std::size_t& out) {
      if (doc.contains(key)) out = doc[key].get<std::size_t>();
    };
    vec("analyst_field_mean", c.analyst_field_mean);
    vec("consumer_field_mean", c.consumer_field_mean);
    vec("mean_log_relative", c.mean_log_relative);
    vec("alpha_zero", c.alpha_zero);
    vec("alpha_grid", c.alpha_grid);
    if (doc.contains("deviation_sd")) c.deviation_sd = doc["deviation_sd"].get<double>();
    if (doc.contains("audience_sd")) c.audience_sd = doc["audience_sd"].get<double>();
    count("sample_count", c.sample_count);
    count("replicates", c.replicates);
    count("grid_vectors", c.grid_vectors);
    count("optimal_vectors", c.optimal_vectors);
    count("field_matched_draws", c.field_matched_draws);
    count("continuity_draws", c.continuity_draws);
    count("audience_replicates", c.audience_replicates);
    if (doc.contains("audience_sizes")) {
      c.audience_sizes = doc["audience_sizes"].get<std::vector<std::size_t>>();
    }
    if (doc.contains("strategy")) {
      const auto& s = doc["strategy"];
      NegotiationStrategy strategy;
      strategy.kind = parse_strategy_kind(s.at("kind").get<std::string>());
      if (s.contains("analyst_concession")) {
        strategy.analyst_concession = s["analyst_concession"].get<double>();
      }
      if (s.contains("consumer_concession")) {
        strategy.consumer_concession = s["consumer_concession"].get<double>();
      }
      if (s.contains("alpha")) strategy.alpha = s["alpha"].get<double>();
      c.strategy = strategy;
    }
    if (doc.contains("epsilon")) c.thresholds.epsilon = doc["epsilon"].get<double>();
    if (doc.contains("p")) c.thresholds.p = doc["p"].get<double>();
    if (doc.contains("seed")) c.seed = doc["seed"].get<Seed>();
    if (doc.contains("threads")) c.threads = doc["threads"].get<unsigned>();
    if (doc.contains("keep_raw")) c.keep_raw = doc["keep_raw"].get<bool>();
  } catch (const json::exception& e) {
    throw Error(Errc::schema, std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open config '" + path.string() + "'");
  return parse_experiment_config(in);
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentResult run_alpha_effect(const ExperimentConfig& config) {
  config.validate();
  if (config.alpha_zero.size() < 2) {
    throw Error(Errc::invalid_argument, "alpha_effect needs at least two alpha_zero values");
  }
  ExperimentResult result{ExperimentKind::alpha_effect, config.seed, {}, {}, {}};
  const auto& names = config.principles.names();
  const std::size_t k_count = names.size();
  const std::size_t n = config.sample_count;
  const auto psi = config.mean_psi();
  const auto mu = mean_allocation(from_log_relative(psi, 1.0));
  const std::size_t blocks = std::min<std::size_t>(n, 64);

  std::vector<std::vector<double>> variances(config.alpha_zero.size());
  bool moments_ok = true;
  for (std::size_t c = 0; c < config.alpha_zero.size(); ++c) {
    const double a0 = config.alpha_zero[c];
    const auto alpha = from_log_relative(psi, a0);
    std::vector<double> draws(n * k_count);
    parallel_for(blocks, config.threads, [&](std::size_t b) {
      Rng rng(derive_seed(config.seed, kAlphaEffect, c * 1000003ULL + b));
      const std::size_t lo = b * n / blocks;
      const std::size_t hi = (b + 1) * n / blocks;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto w = dirichlet_draw(alpha, rng);
        std::copy(w.weights().begin(), w.weights().end(), draws.begin() + i * k_count);
      }
    });
    const std::string cond = label("alpha0=", a0);
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto m = column_moments(draws, k_count, k);
      const auto beta = marginal_beta_params(alpha, k);
      const double expected_var = beta.variance();
      const double se = std::sqrt(expected_var / static_cast<double>(n));
      const bool mean_ok = std::abs(m.mean - mu[k]) <= 3.0 * se;
      const bool var_ok = std::abs(m.variance - expected_var) <= 0.1 * expected_var;
      moments_ok = moments_ok && mean_ok && var_ok;
      result.rows.push_back({cond, names[k], "mean", m.mean, mu[k], status_of(mean_ok)});
      result.rows.push_back({cond, names[k], "variance", m.variance, expected_var,
                             status_of(var_ok)});
      variances[c].push_back(m.variance);
    }
    if (config.keep_raw) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < k_count; ++k) {
          result.raw.push_back({cond, i, names[k], "allocation", draws[i * k_count + k]});
        }
      }
    }
  }
  result.checks.push_back({"dirichlet_moments", status_of(moments_ok),
                           "means within 3 standard errors, variances within 10% relative"});

  std::vector<std::size_t> order(config.alpha_zero.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return config.alpha_zero[a] < config.alpha_zero[b]; });
  bool decreasing = true;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    if (config.alpha_zero[order[i]] == config.alpha_zero[order[i + 1]]) continue;
    for (std::size_t k = 0; k < k_count; ++k) {
      decreasing = decreasing && variances[order[i + 1]][k] < variances[order[i]][k];
    }
  }
  result.checks.push_back({"variance_decreasing_in_alpha0", status_of(decreasing),
                           "per-principle variance shrinks as alpha0 grows"});

  const std::size_t lo = order.front();
  const std::size_t hi = order.back();
  const double expected_ratio = (config.alpha_zero[hi] + 1.0) / (config.alpha_zero[lo] + 1.0);
  bool ratio_ok = true;
  const std::string ratio_cond = "ratio alpha0=" + csv::format_double(config.alpha_zero[lo]) +
                                 "/alpha0=" + csv::format_double(config.alpha_zero[hi]);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double ratio = variances[lo][k] / variances[hi][k];
    const bool ok = std::abs(ratio - expected_ratio) <= 0.2 * expected_ratio;
    ratio_ok = ratio_ok && ok;
    result.rows.push_back({ratio_cond, names[k], "variance_ratio", ratio, expected_ratio,
                           status_of(ok)});
  }
  result.checks.push_back({"variance_ratio", status_of(ratio_ok),
                           "variance ratio within 20% of (alpha0_hi + 1) / (alpha0_lo + 1)"});
  sort_rows(result);
  return result;
}

ExperimentResult run_scenario(const ExperimentConfig& config) {
  config.validate();
  if (!config.strategy) throw Error(Errc::invalid_argument, "scenario experiment needs a strategy");
  const auto& strategy = *config.strategy;
  ExperimentResult result{ExperimentKind::scenario, config.seed, {}, {}, {}};
  const auto& names = config.principles.names();
  const std::size_t k_count = names.size();
  const auto lambda_a = config.analyst_lambda();
  const auto lambda_c = config.consumer_lambda();

  static const char* quantities[] = {"B",          "phi",         "theta",     "D",
                                     "psi_baseline", "psi_resolution", "kappa_baseline",
                                     "kappa_resolution"};
  constexpr std::size_t kQ = std::size(quantities);
  struct Replicate {
    std::vector<double> values;  // kQ x K
    double b_l2 = 0, d_l2 = 0;
    bool improved = false, strong = false, weak = false;
  };
  std::vector<Replicate> reps(config.replicates);

  parallel_for(config.replicates, config.threads, [&](std::size_t r) {
    Rng rng(derive_seed(config.seed, kScenario, r));
    auto analyst = sample_party(Role::analyst, 1, lambda_a, config.deviation_sd, rng);
    auto consumer = sample_party(Role::consumer, 2, lambda_c, config.deviation_sd, rng);
    const auto out = negotiate(analyst, consumer, strategy, config.thresholds);
    analyst.negotiation_adjustment = out.phi;
    consumer.negotiation_adjustment = out.theta;
    const LogRelativeVector* vecs[] = {&out.baseline.as_log_relative(), &out.phi, &out.theta,
                                       &out.overall.as_log_relative()};
    const auto psi_b = party_log_relative(analyst, Stage::baseline);
    const auto psi_r = party_log_relative(analyst, Stage::resolution);
    const auto kap_b = party_log_relative(consumer, Stage::baseline);
    const auto kap_r = party_log_relative(consumer, Stage::resolution);
    const LogRelativeVector* party_vecs[] = {&psi_b, &psi_r, &kap_b, &kap_r};
    auto& rep = reps[r];
    rep.values.resize(kQ * k_count);
    for (std::size_t q = 0; q < kQ; ++q) {
      const auto* v = q < 4 ? vecs[q] : party_vecs[q - 4];
      for (std::size_t k = 0; k < k_count; ++k) rep.values[q * k_count + k] = (*v)[k];
    }
    rep.b_l2 = l2(out.baseline);
    rep.d_l2 = l2(out.overall);
    rep.improved = out.improved;
    rep.strong = out.verdict.strong;
    rep.weak = out.verdict.weak;
  });

  const std::string cond = strategy_label(strategy);
  const double n = static_cast<double>(reps.size());
  for (std::size_t q = 0; q < kQ; ++q) {
    for (std::size_t k = 0; k < k_count; ++k) {
      double mean = 0.0;
      for (const auto& rep : reps) mean += rep.values[q * k_count + k];
      result.rows.push_back({cond, names[k], std::string("mean_") + quantities[q], mean / n, {},
                             {}});
    }
  }
  auto at = [&](const Replicate& rep, std::size_t q, std::size_t k) {
    return rep.values[q * k_count + k];
  };
  double mean_b = 0, mean_d = 0, max_d = 0, max_phi = 0, max_theta = 0;
  double improved = 0, strong = 0, weak = 0;
  bool bounds_ok = true;
  double worst_scaling = 0.0;
  double target_scale = 0.0;
  switch (strategy.kind) {
    case StrategyKind::accommodating_analyst:
    case StrategyKind::intransigent_analyst: target_scale = 0.0; break;
    case StrategyKind::design_focused:
      target_scale = std::abs(1.0 - *strategy.analyst_concession - *strategy.consumer_concession);
      break;
    case StrategyKind::alpha_scaled: target_scale = std::abs(1.0 - *strategy.alpha); break;
  }
  bool improvement_law = true;
  for (const auto& rep : reps) {
    mean_b += rep.b_l2;
    mean_d += rep.d_l2;
    improved += rep.improved;
    strong += rep.strong;
    weak += rep.weak;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double b = std::abs(at(rep, 0, k));
      max_phi = std::max(max_phi, std::abs(at(rep, 1, k)));
      max_theta = std::max(max_theta, std::abs(at(rep, 2, k)));
      max_d = std::max(max_d, std::abs(at(rep, 3, k)));
      if (strategy.kind == StrategyKind::design_focused) {
        bounds_ok = bounds_ok && std::abs(at(rep, 1, k)) <= b && std::abs(at(rep, 2, k)) <= b;
      }
    }
    if (rep.b_l2 > 0.0) {
      worst_scaling = std::max(worst_scaling, std::abs(rep.d_l2 - target_scale * rep.b_l2) / rep.b_l2);
      improvement_law = improvement_law && rep.improved == (target_scale <= 1.0);
    }
  }
  result.rows.push_back({cond, "*", "mean_l2_B", mean_b / n, {}, {}});
  result.rows.push_back({cond, "*", "mean_l2_D", mean_d / n, target_scale * mean_b / n, {}});
  result.rows.push_back({cond, "*", "max_abs_D", max_d, {}, {}});
  result.rows.push_back({cond, "*", "max_abs_phi", max_phi, {}, {}});
  result.rows.push_back({cond, "*", "max_abs_theta", max_theta, {}, {}});
  result.rows.push_back({cond, "*", "improved_fraction", improved / n, {}, {}});
  result.rows.push_back({cond, "*", "strong_fraction", strong / n, {}, {}});
  result.rows.push_back({cond, "*", "weak_fraction", weak / n, {}, {}});
  result.rows.push_back({cond, "*", "max_relative_scaling_error", worst_scaling, 0.0,
                         status_of(worst_scaling <= kExactTolerance)});

  result.checks.push_back({"norm_scaling", status_of(worst_scaling <= kExactTolerance),
                           "|D|_2 = " + csv::format_double(target_scale) +
                               " * |B|_2 per replicate to 1e-12 relative"});
  result.checks.push_back({"improvement_law", status_of(improvement_law),
                           "improved exactly when the residual scale is at most 1"});
  switch (strategy.kind) {
    case StrategyKind::accommodating_analyst:
      result.checks.push_back({"zero_overall", status_of(max_d <= kExactTolerance),
                               "D = 0 in every replicate"});
      result.checks.push_back({"intransigent_consumer", status_of(max_theta == 0.0),
                               "theta = 0 in every replicate"});
      break;
    case StrategyKind::intransigent_analyst:
      result.checks.push_back({"zero_overall", status_of(max_d <= kExactTolerance),
                               "D = 0 in every replicate"});
      result.checks.push_back({"intransigent_analyst", status_of(max_phi == 0.0),
                               "phi = 0 in every replicate"});
      break;
    case StrategyKind::design_focused:
      result.checks.push_back({"concession_bounds", status_of(bounds_ok),
                               "|phi_k| <= |B_k| and |theta_k| <= |B_k|"});
      if (target_scale == 0.0) {
        result.checks.push_back({"zero_overall", status_of(max_d <= kExactTolerance),
                                 "D = 0 in every replicate"});
      }
      break;
    case StrategyKind::alpha_scaled: break;
  }

  if (config.keep_raw) {
    for (std::size_t r = 0; r < reps.size(); ++r) {
      for (std::size_t q = 0; q < kQ; ++q) {
        for (std::size_t k = 0; k < k_count; ++k) {
          result.raw.push_back({cond, r, names[k], quantities[q], at(reps[r], q, k)});
        }
      }
    }
  }
  sort_rows(result);
  return result;
}

ExperimentResult run_propositions(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result{ExperimentKind::propositions, config.seed, {}, {}, {}};
  const auto& names = config.principles.names();
  const std::size_t k_count = names.size();
  const auto lambda_a = config.analyst_lambda();
  const auto lambda_c = config.consumer_lambda();
  const double sd = config.deviation_sd;

  auto draw_pair = [&](Rng& rng, const LogRelativeVector& consumer_field, int consumer_id) {
    auto a = sample_party(Role::analyst, 1, lambda_a, sd, rng);
    auto c = sample_party(Role::consumer, consumer_id, consumer_field, sd, rng);
    return std::make_pair(std::move(a), std::move(c));
  };
  auto draw_baseline = [&](Stream stream, std::size_t i) {
    Rng rng(derive_seed(config.seed, stream, i));
    auto [a, c] = draw_pair(rng, lambda_c, 2);
    return baseline_alignment(a, c);
  };

  // Proposition 1: R = -alpha B improves the p = 2 norm iff 0 <= alpha <= 2.
  {
    std::vector<AlignmentVector> bs;
    for (std::size_t i = 0; i < config.grid_vectors; ++i) {
      auto b = draw_baseline(kGrid, i);
      if (sup_norm(b.values()) > 0.0) bs.push_back(std::move(b));
    }
    CheckStatus overall = CheckStatus::pass;
    std::size_t negatives = 0;
    double worst_identity = 0.0;
    if (bs.empty()) {
      overall = CheckStatus::not_applicable;
    } else {
      for (double alpha : config.alpha_grid) {
        std::size_t improved = 0;
        for (const auto& b : bs) {
          const AlignmentVector r(AlignmentKind::residual, -alpha * b.as_log_relative());
          improved += improvement_check(b, r);
          const auto d = b.as_log_relative() + r.as_log_relative();
          const double bn = l2(b);
          worst_identity = std::max(
              worst_identity, std::abs(power_mean_norm(d.values(), 2.0) - std::abs(1.0 - alpha) * bn) / bn);
        }
        const bool expected = alpha >= 0.0 && alpha <= 2.0;
        CheckStatus cell;
        if (expected) {
          cell = status_of(improved == bs.size());
        } else if (improved == 0) {
          cell = CheckStatus::negative_control;
          ++negatives;
        } else {
          cell = CheckStatus::fail;
        }
        if (cell == CheckStatus::fail) overall = CheckStatus::fail;
        result.rows.push_back({label("P1 alpha=", alpha), "*", "improved_fraction",
                               static_cast<double>(improved) / static_cast<double>(bs.size()),
                               expected ? 1.0 : 0.0, cell});
      }
      const bool identity_ok = worst_identity <= kExactTolerance;
      if (!identity_ok) overall = CheckStatus::fail;
      result.rows.push_back({"P1 identity", "*", "max_relative_error", worst_identity, 0.0,
                             status_of(identity_ok)});
    }
    result.checks.push_back(
        {"proposition_1", overall,
         "alignment improves iff 0 <= alpha <= 2 over " + std::to_string(bs.size()) +
             " baselines x " + std::to_string(config.alpha_grid.size()) + " alphas (" +
             std::to_string(negatives) + " negative-control cells)"});
  }

  // Proposition 2: R = -B gives |D|_2 = 0.
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < config.optimal_vectors; ++i) {
      const auto b = draw_baseline(kOptimal, i);
      const auto r = optimal_adjustment(b);
      const auto d = b.as_log_relative() + r.as_log_relative();
      worst = std::max(worst, power_mean_norm(d.values(), 2.0));
    }
    result.rows.push_back({"P2", "*", "max_l2_D", worst, 0.0, status_of(worst == 0.0)});
    result.checks.push_back({"proposition_2", status_of(worst == 0.0),
                             "optimal adjustment zeroes D on " +
                                 std::to_string(config.optimal_vectors) + " baselines"});
  }

  // Proposition 3: same field => B = delta - eta, centred at zero.
  {
    const std::size_t n = config.field_matched_draws;
    std::vector<double> flat(n * k_count);
    std::vector<double> cross_l2(n), same_l2(n);
    std::vector<char> exact(n, 1);
    parallel_for(n, config.threads, [&](std::size_t i) {
      Rng rng(derive_seed(config.seed, kFieldMatched, i));
      auto [a, c] = draw_pair(rng, lambda_a, 1);
      const auto b = baseline_alignment(a, c);
      exact[i] = b.as_log_relative() == a.individual_deviation - c.individual_deviation;
      for (std::size_t k = 0; k < k_count; ++k) flat[i * k_count + k] = b[k];
      same_l2[i] = l2(b);
      const PartyParams other(Role::consumer, 2, lambda_c, c.individual_deviation);
      cross_l2[i] = l2(baseline_alignment(a, other));
    });
    bool ok = std::all_of(exact.begin(), exact.end(), [](char c) { return c != 0; });
    result.rows.push_back({"P3", "*", "decomposition_exact", ok ? 1.0 : 0.0, 1.0, status_of(ok)});
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto m = column_moments(flat, k_count, k);
      const double se = std::sqrt(m.variance / static_cast<double>(n));
      const bool cell = std::abs(m.mean) <= 3.0 * se;
      ok = ok && cell;
      result.rows.push_back({"P3", names[k], "mean_B", m.mean, 0.0, status_of(cell)});
      result.rows.push_back({"P3", names[k], "standard_error", se, {}, {}});
    }
    double same = 0, cross = 0;
    for (std::size_t i = 0; i < n; ++i) {
      same += same_l2[i];
      cross += cross_l2[i];
    }
    result.rows.push_back({"P3", "*", "mean_l2_B_same_field", same / static_cast<double>(n), {}, {}});
    result.rows.push_back({"P3", "*", "mean_l2_B_cross_field", cross / static_cast<double>(n), {}, {}});
    result.checks.push_back({"proposition_3", status_of(ok),
                             "same-field B equals delta - eta and averages to 0 within 3 SE over " +
                                 std::to_string(n) + " pairs"});
  }

  // Proposition 4: continuous deviations => |B| > 0 almost surely.
  if (sd == 0.0) {
    result.rows.push_back({"P4", "*", "zero_norm_draws", 0.0, {}, CheckStatus::not_applicable});
    result.checks.push_back({"proposition_4", CheckStatus::not_applicable,
                             "not applicable: continuity assumption violated (deviation_sd = 0)"});
  } else {
    const std::size_t n = config.continuity_draws;
    std::vector<char> zero_norm(n, 0), zero_component(n, 0);
    parallel_for(n, config.threads, [&](std::size_t i) {
      const auto b = draw_baseline(kContinuity, i);
      zero_norm[i] = sup_norm(b.values()) == 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        if (k != b.reference_index() && b[k] == 0.0) zero_component[i] = 1;
      }
    });
    const auto zn = std::count(zero_norm.begin(), zero_norm.end(), 1);
    const auto zc = std::count(zero_component.begin(), zero_component.end(), 1);
    result.rows.push_back({"P4", "*", "zero_norm_draws", static_cast<double>(zn), 0.0,
                           status_of(zn == 0)});
    result.rows.push_back({"P4", "*", "zero_component_draws", static_cast<double>(zc), 0.0,
                           status_of(zc == 0)});
    result.checks.push_back({"proposition_4", status_of(zn == 0 && zc == 0),
                             "|B| > 0 in all " + std::to_string(n) + " draws"});
  }

  // Proposition 5: large same-field audiences leave only the analyst's deviation.
  {
    bool exact = true;
    const auto rate = audience_rows(config, "P5 ", result, exact);
    result.rows.push_back({"P5", "*", "decomposition_exact", exact ? 1.0 : 0.0, 1.0,
                           status_of(exact)});
    CheckStatus status = rate;
    if (!exact) status = CheckStatus::fail;
    result.checks.push_back({"proposition_5", status,
                             "|B_group - delta|_inf median shrinks like 1/sqrt(J)"});
  }

  sort_rows(result);
  return result;
}

ExperimentResult run_large_audience(const ExperimentConfig& config) {
  config.validate();
  if (config.audience_sizes.size() < 2) {
    throw Error(Errc::invalid_argument, "large_audience needs at least two audience sizes");
  }
  ExperimentResult result{ExperimentKind::large_audience, config.seed, {}, {}, {}};
  bool exact = true;
  const auto rate = audience_rows(config, "", result, exact);
  result.checks.push_back({"rate", rate, "median error ratio within a factor 1.5 of sqrt(J ratio)"});
  result.checks.push_back({"decomposition_exact", status_of(exact),
                           "B_group = delta - mean(eta) in every replicate"});
  sort_rows(result);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.experiment) {
    case ExperimentKind::alpha_effect: return run_alpha_effect(config);
    case ExperimentKind::scenario: return run_scenario(config);
    case ExperimentKind::propositions: return run_propositions(config);
    case ExperimentKind::large_audience: return run_large_audience(config);
  }
  throw Error(Errc::invalid_argument, "unknown experiment");
}

void write_summary_csv(std::ostream& out, const ExperimentResult& result) {
  csv::write_row(out, {"condition", "principle", "statistic", "value", "reference", "status"});
  for (const auto& r : result.rows) {
    csv::write_row(out, {r.condition, r.principle, r.statistic, csv::format_double(r.value),
                         r.reference ? csv::format_double(*r.reference) : "",
                         r.status ? std::string(to_string(*r.status)) : ""});
  }
  // Check verdicts follow the data rows under the reserved condition "~check".
  for (const auto& c : result.checks) {
    csv::write_row(out, {"~check", "*", c.name, c.status == CheckStatus::fail ? "0" : "1", "",
                         std::string(to_string(c.status))});
  }
}

void write_raw_csv(std::ostream& out, const ExperimentResult& result) {
  csv::write_row(out, {"condition", "draw", "principle", "quantity", "value"});
  for (const auto& r : result.raw) {
    csv::write_row(out, {r.condition, std::to_string(r.draw), r.principle, r.quantity,
                         csv::format_double(r.value)});
  }
}

}  // namespace align
