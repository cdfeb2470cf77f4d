#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "align/metrics.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"

using namespace align;
using oracle::vec;

namespace {

LogRelativeVector lr(std::vector<double> v, std::size_t ref = 0) { return {std::move(v), ref}; }

PartyParams party(Role role, std::vector<double> lambda, std::vector<double> dev,
                  std::optional<std::vector<double>> adj = std::nullopt, std::size_t ref = 0) {
  std::optional<LogRelativeVector> a;
  if (adj) a = lr(*adj, ref);
  return PartyParams(role, 1, lr(std::move(lambda), ref), lr(std::move(dev), ref), a);
}

AlignmentVector av(std::vector<double> v, std::size_t ref = 0) {
  return AlignmentVector(AlignmentKind::overall, std::move(v), ref);
}

}  // namespace

TEST(PartyLogRelative, AdjustmentOnlyAtResolution) {
  const auto p = party(Role::analyst, {0, 0.5}, {0, 0.05}, std::vector<double>{0, -0.3});
  EXPECT_NEAR(party_log_relative(p, Stage::baseline)[1], 0.55, 1e-15);
  EXPECT_NEAR(party_log_relative(p, Stage::resolution)[1], 0.25, 1e-15);
  const auto z = party(Role::consumer, {0, 0, 0}, {0, 0, 0});
  EXPECT_EQ(party_log_relative(z, Stage::baseline), LogRelativeVector::zeros(3, 0));
  EXPECT_EQ(party_log_relative(z, Stage::resolution), LogRelativeVector::zeros(3, 0));
}

TEST(PartyParams, RejectsInconsistentShapes) {
  expect_code(Errc::dimension_mismatch, [] { party(Role::analyst, {0, 1}, {0, 1, 2}); });
  expect_code(Errc::invalid_argument,
              [] { PartyParams(Role::analyst, 0, lr({0, 1}), lr({0, 1})); });
}

TEST(BaselineAlignment, HandExample) {
  const auto a = party(Role::analyst, {0, 0.5, -0.2}, {0, 0.05, -0.05});
  const auto c = party(Role::consumer, {0, 0.1, 0.3}, {0, -0.05, 0.1});
  const auto b = baseline_alignment(a, c);
  EXPECT_EQ(b.kind(), AlignmentKind::baseline);
  EXPECT_EQ(b[0], 0.0);
  EXPECT_NEAR(b[1], 0.5, 1e-15);
  EXPECT_NEAR(b[2], -0.65, 1e-15);
}

TEST(BaselineAlignment, IdentityAndCancellation) {
  const auto a = party(Role::analyst, {0, 0.4, -0.1}, {0, 0.2, 0.3});
  const auto c = party(Role::consumer, {0, 0.4, -0.1}, {0, 0.2, 0.3});
  for (double v : vec(baseline_alignment(a, c).values())) EXPECT_EQ(v, 0.0);
  expect_code(Errc::invalid_argument, [&] { baseline_alignment(c, a); });
  expect_code(Errc::dimension_mismatch,
              [&] { baseline_alignment(a, party(Role::consumer, {0, 1}, {0, 1})); });
}

TEST(OverallAlignment, HandExamples) {
  const AlignmentVector b(AlignmentKind::baseline, {0, 0.5, -0.65}, 0);
  auto [d, r] = overall_alignment(b, lr({0, -0.25, 0.325}), lr({0, 0.25, -0.325}));
  for (double v : vec(d.values())) EXPECT_NEAR(v, 0.0, 1e-15);
  EXPECT_EQ(r.kind(), AlignmentKind::residual);
  EXPECT_EQ(d.kind(), AlignmentKind::overall);

  const auto same = overall_alignment(b, LogRelativeVector::zeros(3, 0), LogRelativeVector::zeros(3, 0));
  EXPECT_EQ(vec(same.overall.values()), vec(b.values()));

  const AlignmentVector b2(AlignmentKind::baseline, {0, 0.3, -0.4}, 0);
  const auto acc = overall_alignment(b2, lr({0, -0.3, 0.4}), LogRelativeVector::zeros(3, 0));
  for (double v : vec(acc.overall.values())) EXPECT_EQ(v, 0.0);
}

TEST(StrongCheck, StrictSupNorm) {
  const auto d = av({0, 0.3, -0.4});
  const auto s = strong_check(d, 0.5);
  EXPECT_DOUBLE_EQ(s.norm, 0.4);
  EXPECT_TRUE(s.aligned);
  EXPECT_FALSE(strong_check(d, 0.4).aligned);
  EXPECT_TRUE(strong_check(av({0, 0, 0}), 1e-300).aligned);
}

TEST(WeakCheck, AveragedPowerMean) {
  const auto d = av({0, 0.3, -0.4});
  const auto w = weak_check(d, 0.3, 2.0);
  EXPECT_NEAR(w.norm, std::sqrt(0.25 / 3.0), 1e-15);
  EXPECT_NEAR(w.norm, 0.288675, 1e-6);
  EXPECT_TRUE(w.aligned);
  EXPECT_EQ(weak_check(av({0, 0, 0}), 1e-9, 3.0).norm, 0.0);
  EXPECT_NEAR(weak_check(d, 1.0, 64.0).norm, 0.3932, 1e-4);
  EXPECT_NEAR(weak_check(d, 1.0, 64.0).norm, oracle::averaged_p_norm({0, 0.3, -0.4}, 64.0), 1e-12);
  expect_code(Errc::invalid_argument, [&] { weak_check(d, 0.1, 0.5); });
  expect_code(Errc::invalid_argument, [&] { strong_check(d, 0.0); });
}

TEST(Assess, DefaultsAndVerdictFields) {
  const AlignmentThresholds t;
  EXPECT_EQ(t.epsilon, 0.1);
  EXPECT_EQ(t.p, 2.0);
  const auto v = assess(av({0, 0.05, -0.02}), t);
  EXPECT_TRUE(v.strong);
  EXPECT_TRUE(v.weak);
  EXPECT_EQ(v.epsilon, 0.1);
  EXPECT_EQ(v.p, 2.0);
}

TEST(GroupAlignment, HandExamples) {
  const auto a = party(Role::analyst, {0, 0.4}, {0, 0});
  const std::vector<PartyParams> cs = {party(Role::consumer, {0, 0.2}, {0, 0}),
                                       party(Role::consumer, {0, 0.6}, {0, 0})};
  for (double v : vec(group_baseline_alignment(a, cs).values())) EXPECT_NEAR(v, 0.0, 1e-15);

  const std::vector<PartyParams> same = {party(Role::consumer, {0, 0.4}, {0, 0}),
                                         party(Role::consumer, {0, 0.4}, {0, 0})};
  for (double v : vec(group_baseline_alignment(a, same).values())) EXPECT_EQ(v, 0.0);

  expect_code(Errc::empty_input, [&] { group_baseline_alignment(a, std::span<const PartyParams>{}); });

  const AlignmentVector bg(AlignmentKind::baseline, {0, 0.2}, 0);
  const std::vector<LogRelativeVector> thetas = {lr({0, 0.05}), lr({0, 0.15})};
  for (double v : vec(group_overall_alignment(bg, lr({0, -0.1}), thetas).values())) {
    EXPECT_NEAR(v, 0.0, 1e-15);
  }
  const std::vector<LogRelativeVector> equal = {lr({0, -0.1}), lr({0, -0.1})};
  EXPECT_EQ(vec(group_overall_alignment(bg, lr({0, -0.1}), equal).values()), vec(bg.values()));
  expect_code(Errc::empty_input,
              [&] { group_overall_alignment(bg, lr({0, 0}), std::span<const LogRelativeVector>{}); });
}

// ---------------------------------------------------------------------------
// Properties over generated inputs.

TEST(Property, DecompositionMatchesRealisedDifference) {
  oracle::Gen gen(21);
  for (int t = 0; t < 2000; ++t) {
    const auto k = gen.dim();
    const auto ref = gen.index(k);
    const auto a = party(Role::analyst, gen.log_relative(k, ref), gen.log_relative(k, ref, 0.5),
                         std::nullopt, ref);
    const auto c = party(Role::consumer, gen.log_relative(k, ref), gen.log_relative(k, ref, 0.5),
                         std::nullopt, ref);
    const auto b = baseline_alignment(a, c);
    const auto psi = oracle::add(vec(a.field_mean.values()), vec(a.individual_deviation.values()));
    const auto kappa = oracle::add(vec(c.field_mean.values()), vec(c.individual_deviation.values()));
    EXPECT_LT(oracle::max_abs_diff(vec(b.values()), oracle::sub(psi, kappa)), 1e-12);
    EXPECT_EQ(b[ref], 0.0);
  }
}

TEST(Property, OverallIsExactSumAndReferenceStaysZero) {
  oracle::Gen gen(22);
  for (int t = 0; t < 2000; ++t) {
    const auto k = gen.dim();
    const auto ref = gen.index(k);
    const AlignmentVector b(AlignmentKind::baseline, gen.log_relative(k, ref), ref);
    const auto phi = lr(gen.log_relative(k, ref), ref);
    const auto theta = lr(gen.log_relative(k, ref), ref);
    const auto [d, r] = overall_alignment(b, phi, theta);
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_EQ(r[i], phi[i] - theta[i]);
      EXPECT_EQ(d[i], b[i] + r[i]);
    }
    EXPECT_EQ(d[ref], 0.0);
    EXPECT_EQ(r[ref], 0.0);
  }
}

TEST(Property, StrongImpliesWeakAndNormsMatchOracle) {
  oracle::Gen gen(23);
  for (int t = 0; t < 5000; ++t) {
    const auto k = gen.dim();
    const auto ref = gen.index(k);
    const auto values = gen.log_relative(k, ref, gen.uniform(1e-3, 3.0));
    const AlignmentVector d(AlignmentKind::overall, values, ref);
    const double p = gen.uniform(1.0, 12.0);
    const double eps = gen.uniform(1e-3, 3.0);
    const auto v = assess(d, {eps, p});
    EXPECT_EQ(v.sup_norm, oracle::sup_norm(values));
    EXPECT_NEAR(v.p_norm, oracle::averaged_p_norm(values, p), 1e-12 * (1 + v.sup_norm));
    EXPECT_LE(v.p_norm, v.sup_norm);
    if (v.strong) EXPECT_TRUE(v.weak);
    EXPECT_EQ(v.strong, v.sup_norm < eps);
    EXPECT_EQ(v.weak, v.p_norm < eps);
  }
}

TEST(Property, GroupOfOneIsBitwisePairwise) {
  oracle::Gen gen(24);
  for (int t = 0; t < 1000; ++t) {
    const auto k = gen.dim();
    const auto ref = gen.index(k);
    const auto a = party(Role::analyst, gen.log_relative(k, ref), gen.log_relative(k, ref), std::nullopt, ref);
    const std::vector<PartyParams> one = {
        party(Role::consumer, gen.log_relative(k, ref), gen.log_relative(k, ref), std::nullopt, ref)};
    const auto pair = baseline_alignment(a, one[0]);
    const auto group = group_baseline_alignment(a, one);
    EXPECT_EQ(vec(group.values()), vec(pair.values()));
    const auto phi = lr(gen.log_relative(k, ref), ref);
    const std::vector<LogRelativeVector> thetas = {lr(gen.log_relative(k, ref), ref)};
    EXPECT_EQ(vec(group_overall_alignment(group, phi, thetas).values()),
              vec(overall_alignment(pair, phi, thetas[0]).overall.values()));
  }
}

TEST(Property, GroupEqualsMeanOfPairwise) {
  oracle::Gen gen(25);
  for (int t = 0; t < 300; ++t) {
    const auto k = gen.dim();
    const auto j = gen.dim(2, 12);
    const auto a = party(Role::analyst, gen.log_relative(k, 0), gen.log_relative(k, 0));
    std::vector<PartyParams> cs;
    std::vector<double> mean(k, 0.0);
    for (std::size_t n = 0; n < j; ++n) {
      cs.push_back(party(Role::consumer, gen.log_relative(k, 0), gen.log_relative(k, 0)));
      const auto b = vec(baseline_alignment(a, cs.back()).values());
      for (std::size_t i = 0; i < k; ++i) mean[i] += b[i] / static_cast<double>(j);
    }
    EXPECT_LT(oracle::max_abs_diff(vec(group_baseline_alignment(a, cs).values()), mean), 1e-12);
  }
}

TEST(Property, PermutingNonReferencePrinciplesIsEquivariant) {
  oracle::Gen gen(26);
  for (int t = 0; t < 1000; ++t) {
    const auto k = gen.dim(3, 8);
    const auto a = party(Role::analyst, gen.log_relative(k, 0), gen.log_relative(k, 0));
    const auto c = party(Role::consumer, gen.log_relative(k, 0), gen.log_relative(k, 0));
    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    std::shuffle(perm.begin() + 1, perm.end(), gen.engine());
    auto permute = [&](std::span<const double> v) {
      std::vector<double> out(k);
      for (std::size_t i = 0; i < k; ++i) out[i] = v[perm[i]];
      return out;
    };
    const auto ap = party(Role::analyst, permute(a.field_mean.values()),
                          permute(a.individual_deviation.values()));
    const auto cp = party(Role::consumer, permute(c.field_mean.values()),
                          permute(c.individual_deviation.values()));
    const auto b = baseline_alignment(a, c);
    const auto bp = baseline_alignment(ap, cp);
    EXPECT_EQ(vec(bp.values()), permute(b.values()));
    const auto v = assess(b, {0.1, 2.0});
    const auto vp = assess(bp, {0.1, 2.0});
    EXPECT_EQ(v.sup_norm, vp.sup_norm);
    EXPECT_NEAR(v.p_norm, vp.p_norm, 1e-15);
  }
}
