#include "align/principles.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "align/error.hpp"

namespace align {

namespace {

constexpr double kMaxLogRatio = 700.0;

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string_view to_string(Stage stage) noexcept {
  return stage == Stage::baseline ? "baseline" : "resolution";
}

Stage parse_stage(std::string_view text) {
  if (text == "baseline") return Stage::baseline;
  if (text == "resolution") return Stage::resolution;
  throw Error(Errc::invalid_argument,
              "unknown stage '" + std::string(text) + "' (expected baseline or resolution)");
}

// ---------------------------------------------------------------------------
// PrincipleSet

PrincipleSet::PrincipleSet(std::vector<std::string> names, std::size_t reference_index)
    : names_(std::move(names)), reference_(reference_index) {
  if (names_.size() < 2) {
    throw Error(Errc::invalid_argument, "a principle set needs at least 2 principles, got " +
                                            std::to_string(names_.size()));
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(Errc::invalid_argument, "principle names must be non-empty");
    if (!seen.insert(n).second) {
      throw Error(Errc::invalid_argument, "duplicate principle name '" + n + "'");
    }
  }
  if (reference_ >= names_.size()) {
    throw Error(Errc::invalid_argument, "reference index " + std::to_string(reference_) +
                                            " out of range for " + std::to_string(names_.size()) +
                                            " principles");
  }
}

PrincipleSet PrincipleSet::canonical() {
  return PrincipleSet({"clarity", "exhaustive", "data-matching", "reproducible", "second-order",
                       "skeptical"});
}

std::optional<std::size_t> PrincipleSet::index_of(std::string_view name) const noexcept {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t PrincipleSet::resolve(std::string_view name_or_index) const {
  if (auto idx = index_of(name_or_index)) return *idx;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(name_or_index.data(),
                                   name_or_index.data() + name_or_index.size(), value);
  if (ec == std::errc() && ptr == name_or_index.data() + name_or_index.size() &&
      value < names_.size()) {
    return value;
  }
  throw Error(Errc::unknown_principle,
              "unknown principle '" + std::string(name_or_index) + "'");
}

PrincipleSet PrincipleSet::with_reference(std::size_t reference_index) const {
  return PrincipleSet(names_, reference_index);
}

// ---------------------------------------------------------------------------
// ConcentrationVector

ConcentrationVector::ConcentrationVector(std::vector<double> values)
    : values_(std::move(values)), total_(0.0) {
  if (values_.size() < 2) {
    throw Error(Errc::invalid_argument, "concentration vector needs at least 2 components");
  }
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!(values_[k] > 0.0) || !std::isfinite(values_[k])) {
      throw Error(Errc::invalid_argument, "concentration component " + std::to_string(k) +
                                              " must be positive and finite, got " +
                                              fmt_double(values_[k]));
    }
  }
  total_ = std::accumulate(values_.begin(), values_.end(), 0.0);
}

// ---------------------------------------------------------------------------
// AllocationVector

AllocationVector::AllocationVector(std::vector<double> weights, Stage stage)
    : weights_(std::move(weights)), stage_(stage) {
  if (weights_.size() < 2) {
    throw Error(Errc::invalid_argument, "allocation vector needs at least 2 components");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double w = weights_[k];
    if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
      throw Error(Errc::simplex_violation, "allocation component " + std::to_string(k) +
                                               " must lie in [0, 1], got " + fmt_double(w));
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw Error(Errc::simplex_violation, "allocations must sum to 1, got " + fmt_double(sum));
  }
}

AllocationVector AllocationVector::renormalized(std::vector<double> raw, Stage stage,
                                                double tolerance) {
  double sum = 0.0;
  for (double w : raw) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(Errc::simplex_violation,
                  "allocation weights must be finite and non-negative, got " + fmt_double(w));
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > tolerance * (1.0 + 1e-9)) {
    throw Error(Errc::sum_violation,
                "allocations sum to " + fmt_double(sum) + ", outside 1 +/- " + fmt_double(tolerance));
  }
  for (double& w : raw) w /= sum;
  return AllocationVector(std::move(raw), stage);
}

bool AllocationVector::on_boundary() const noexcept {
  return std::any_of(weights_.begin(), weights_.end(), [](double w) { return w == 0.0; });
}

// ---------------------------------------------------------------------------
// LogRelativeVector

LogRelativeVector::LogRelativeVector(std::vector<double> values, std::size_t reference_index)
    : values_(std::move(values)), reference_(reference_index) {
  if (values_.size() < 2) {
    throw Error(Errc::invalid_argument, "log-relative vector needs at least 2 components");
  }
  if (reference_ >= values_.size()) {
    throw Error(Errc::invalid_argument, "reference index out of range");
  }
  if (values_[reference_] != 0.0) {
    throw Error(Errc::invalid_argument, "reference component must be exactly 0, got " +
                                            fmt_double(values_[reference_]));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(Errc::invalid_argument, "log-relative values must be finite");
  }
  values_[reference_] = 0.0;  // canonicalise -0.0
}

LogRelativeVector LogRelativeVector::zeros(std::size_t k, std::size_t reference_index) {
  return LogRelativeVector(std::vector<double>(k, 0.0), reference_index);
}

void require_compatible(const LogRelativeVector& a, const LogRelativeVector& b) {
  if (a.size() != b.size() || a.reference_index() != b.reference_index()) {
    throw Error(Errc::dimension_mismatch,
                "log-relative vectors differ in size or reference (" + std::to_string(a.size()) +
                    "/r=" + std::to_string(a.reference_index()) + " vs " +
                    std::to_string(b.size()) + "/r=" + std::to_string(b.reference_index()) + ")");
  }
}

LogRelativeVector operator+(const LogRelativeVector& a, const LogRelativeVector& b) {
  require_compatible(a, b);
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + b[k];
  return LogRelativeVector(std::move(out), a.reference_index());
}

LogRelativeVector operator-(const LogRelativeVector& a, const LogRelativeVector& b) {
  require_compatible(a, b);
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] - b[k];
  return LogRelativeVector(std::move(out), a.reference_index());
}

LogRelativeVector operator*(double scale, const LogRelativeVector& v) {
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = scale * v[k];
  out[v.reference_index()] = 0.0;
  return LogRelativeVector(std::move(out), v.reference_index());
}

// ---------------------------------------------------------------------------
// Operations

AllocationVector mean_allocation(const ConcentrationVector& c) {
  std::vector<double> mu(c.size());
  for (std::size_t k = 0; k < mu.size(); ++k) mu[k] = c[k] / c.total();
  return AllocationVector(std::move(mu));
}

LogRelativeVector log_relative(const AllocationVector& a, std::size_t reference_index,
                               double smoothing) {
  if (reference_index >= a.size()) {
    throw Error(Errc::invalid_argument, "reference index out of range");
  }
  if (smoothing < 0.0 || !std::isfinite(smoothing)) {
    throw Error(Errc::invalid_argument, "smoothing constant must be >= 0");
  }
  std::vector<double> w(a.weights().begin(), a.weights().end());
  if (a.on_boundary()) {
    if (smoothing == 0.0) {
      throw Error(Errc::boundary_allocation,
                  "allocation has a zero component; log-ratio undefined (enable smoothing)");
    }
    const double denom = 1.0 + static_cast<double>(w.size()) * smoothing;
    for (double& x : w) x = (x + smoothing) / denom;
  }
  const double log_ref = std::log(w[reference_index]);
  std::vector<double> out(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    out[k] = k == reference_index ? 0.0 : std::log(w[k]) - log_ref;
  }
  return LogRelativeVector(std::move(out), reference_index);
}

ConcentrationVector from_log_relative(const LogRelativeVector& psi, double total) {
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(Errc::invalid_argument, "total must be positive and finite");
  }
  double peak = psi[0];
  for (double v : psi.values()) {
    if (std::abs(v) > kMaxLogRatio) {
      throw Error(Errc::overflow, "log-relative component " + fmt_double(v) +
                                      " exceeds the +/-700 overflow guard");
    }
    peak = std::max(peak, v);
  }
  std::vector<double> e(psi.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    e[k] = std::exp(psi[k] - peak);
    sum += e[k];
  }
  for (double& x : e) {
    x = total * (x / sum);
    if (!(x > 0.0)) {
      throw Error(Errc::overflow, "log-relative spread underflows a concentration component");
    }
  }
  return ConcentrationVector(std::move(e));
}

AllocationVector dirichlet_draw(const ConcentrationVector& c, Rng& rng) {
  std::vector<double> g(c.size());
  double sum = 0.0;
  // A draw where every gamma variate underflows carries no direction; redraw.
  while (!(sum > 0.0)) {
    sum = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      std::gamma_distribution<double> gamma(c[k], 1.0);
      g[k] = gamma(rng);
      sum += g[k];
    }
  }
  for (double& x : g) x /= sum;
  return AllocationVector(std::move(g));
}

std::vector<AllocationVector> sample_allocations(const ConcentrationVector& c, std::size_t n,
                                                 Seed seed) {
  if (n == 0) throw Error(Errc::invalid_argument, "sample count must be >= 1");
  Rng rng(seed);
  std::vector<AllocationVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(dirichlet_draw(c, rng));
  return out;
}

BetaParams marginal_beta_params(const ConcentrationVector& c, std::size_t k) {
  if (k >= c.size()) throw Error(Errc::invalid_argument, "principle index out of range");
  return {c[k], c.total() - c[k]};
}

}  // namespace align
