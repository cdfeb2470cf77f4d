#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "align/csv.hpp"
#include "align/estimation.hpp"
#include "align/session.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace align;
using oracle::vec;

namespace {

const std::vector<double> kAnalyst6 = {0.30, 0.20, 0.15, 0.15, 0.10, 0.10};
const std::vector<double> kConsumer6 = {0.10, 0.10, 0.30, 0.25, 0.05, 0.20};

SessionRecord fresh(std::vector<std::string> names = PrincipleSet::canonical().names()) {
  return new_session("s1", PrincipleSet(std::move(names)), {}, 0.0, "t0");
}

std::size_t csv_rows(const std::string& text) {
  std::istringstream in(text);
  return csv::read(in).rows.size();
}

}  // namespace

TEST(SessionStateMachine, IdenticalBaselinesAreStronglyAligned) {
  auto s = fresh();
  submit_allocation(s, Role::analyst, Stage::baseline, kAnalyst6, "t1");
  EXPECT_EQ(s.stage, SessionStage::baseline);
  EXPECT_FALSE(s.computed.baseline);
  submit_allocation(s, Role::consumer, Stage::baseline, kAnalyst6, "t2");
  EXPECT_EQ(s.stage, SessionStage::negotiation);
  ASSERT_TRUE(s.computed.baseline);
  for (double v : vec(s.computed.baseline->values())) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(s.computed.baseline_verdict->strong);
  EXPECT_FALSE(s.computed.overall);
  EXPECT_EQ(s.updated_at, "t2");
}

TEST(SessionStateMachine, HandBaselineExample) {
  auto s = fresh({"a", "b", "c"});
  submit_allocation(s, Role::analyst, Stage::baseline, {0.5, 0.3, 0.2}, "t");
  submit_allocation(s, Role::consumer, Stage::baseline, {0.3, 0.5, 0.2}, "t");
  const auto& b = *s.computed.baseline;
  EXPECT_EQ(b[0], 0.0);
  EXPECT_NEAR(b[1], std::log(0.3 / 0.5) - std::log(0.5 / 0.3), 1e-12);
  EXPECT_NEAR(b[1], -1.0217, 1e-4);
  EXPECT_NEAR(b[2], std::log(0.2 / 0.5) - std::log(0.2 / 0.3), 1e-12);
  EXPECT_NEAR(b[2], -0.5108, 1e-4);
}

TEST(SessionStateMachine, ResolutionComputesPhiThetaAndD) {
  auto s = fresh({"a", "b", "c"});
  submit_allocation(s, Role::analyst, Stage::baseline, {0.5, 0.3, 0.2}, "t");
  submit_allocation(s, Role::consumer, Stage::baseline, {0.3, 0.5, 0.2}, "t");
  submit_allocation(s, Role::analyst, Stage::resolution, {0.4, 0.4, 0.2}, "t");
  EXPECT_EQ(s.stage, SessionStage::resolution);
  ASSERT_TRUE(s.computed.overall);
  EXPECT_EQ(s.computed.resolution_pending, std::vector<Role>{Role::consumer});
  const auto phi = oracle::sub(oracle::log_ratio({0.4, 0.4, 0.2}, 0), oracle::log_ratio({0.5, 0.3, 0.2}, 0));
  EXPECT_LT(oracle::max_abs_diff(vec(s.computed.phi->values()), phi), 1e-12);
  EXPECT_EQ(*s.computed.theta, LogRelativeVector::zeros(3, 0));
  submit_allocation(s, Role::consumer, Stage::resolution, {0.4, 0.4, 0.2}, "t");
  EXPECT_TRUE(s.computed.resolution_pending.empty());
  // Both parties now report the same allocation, so D vanishes.
  EXPECT_LT(oracle::sup_norm(vec(s.computed.overall->values())), 1e-12);
  EXPECT_TRUE(*s.computed.improved);
}

TEST(SessionStateMachine, StageOrderIsEnforced) {
  auto s = fresh({"a", "b"});
  expect_code(Errc::stage_order, [&] { submit_allocation(s, Role::analyst, Stage::resolution, {0.5, 0.5}, "t"); });
  expect_code(Errc::stage_order, [&] { advance_session(s, SessionStage::negotiation, "t"); });
  submit_allocation(s, Role::analyst, Stage::baseline, {0.5, 0.5}, "t");
  submit_allocation(s, Role::consumer, Stage::baseline, {0.6, 0.4}, "t");
  advance_session(s, SessionStage::resolution, "t");
  expect_code(Errc::stage_order, [&] { advance_session(s, SessionStage::negotiation, "t"); });
  expect_code(Errc::stage_order, [&] { submit_allocation(s, Role::analyst, Stage::baseline, {0.5, 0.5}, "t"); });
  EXPECT_TRUE(s.computed.overall);  // resolution reached: D = B with no adjustments
  EXPECT_EQ(vec(s.computed.overall->values()), vec(s.computed.baseline->values()));
  advance_session(s, SessionStage::closed, "t");
  expect_code(Errc::stage_order, [&] { submit_allocation(s, Role::analyst, Stage::resolution, {0.5, 0.5}, "t"); });
  advance_session(s, SessionStage::closed, "t");  // same stage is a no-op
}

TEST(SessionStateMachine, SimplexViolationReportsSum) {
  auto s = fresh({"a", "b", "c"});
  try {
    submit_allocation(s, Role::analyst, Stage::baseline, {0.5, 0.4, 0.2}, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::sum_violation);
    EXPECT_NE(std::string(e.what()).find("1.1"), std::string::npos) << e.what();
  }
  expect_code(Errc::simplex_violation, [&] { submit_allocation(s, Role::analyst, Stage::baseline, {0.5, 0.5}, "t"); });
  EXPECT_TRUE(s.submissions.empty());
}

TEST(Suggest, ConcessionLimits) {
  auto s = fresh();
  expect_code(Errc::stage_order, [&] { suggest_resolution(s, 0.5, 0.5); });
  submit_allocation(s, Role::analyst, Stage::baseline, kAnalyst6, "t");
  submit_allocation(s, Role::consumer, Stage::baseline, kConsumer6, "t");

  const auto full = suggest_resolution(s, 1.0, 0.0);
  EXPECT_LT(oracle::max_abs_diff(oracle::log_ratio(vec(full.analyst.weights()), 0), oracle::log_ratio(kConsumer6, 0)), 1e-12);
  EXPECT_LT(oracle::max_abs_diff(vec(full.consumer.weights()), kConsumer6), 1e-12);

  const auto none = suggest_resolution(s, 0.0, 0.0);
  EXPECT_LT(oracle::max_abs_diff(vec(none.analyst.weights()), kAnalyst6), 1e-12);
  EXPECT_LT(oracle::max_abs_diff(vec(none.consumer.weights()), kConsumer6), 1e-12);
  EXPECT_EQ(vec(none.predicted_overall.values()), vec(s.computed.baseline->values()));

  const auto mid = suggest_resolution(s, 0.5, 0.5);
  EXPECT_LT(oracle::sup_norm(vec(mid.predicted_overall.values())), 1e-12);
  EXPECT_TRUE(mid.predicted_verdict.strong);
  expect_code(Errc::invalid_argument, [&] { suggest_resolution(s, 1.5, 0.0); });
}

TEST(Suggest, AdoptingMeetInTheMiddleGivesZeroD) {
  oracle::Gen gen(41);
  for (int t = 0; t < 200; ++t) {
    const auto k = gen.dim();
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("p" + std::to_string(i));
    auto s = fresh(names);
    submit_allocation(s, Role::analyst, Stage::baseline, gen.simplex(k), "t");
    submit_allocation(s, Role::consumer, Stage::baseline, gen.simplex(k), "t");
    const auto sug = suggest_resolution(s, 0.5, 0.5);
    submit_allocation(s, Role::analyst, Stage::resolution, vec(sug.analyst.weights()), "t");
    submit_allocation(s, Role::consumer, Stage::resolution, vec(sug.consumer.weights()), "t");
    EXPECT_LT(oracle::sup_norm(vec(s.computed.overall->values())), 1e-9);
    EXPECT_TRUE(s.computed.overall_verdict->strong);
  }
}

TEST(Export, RowCountsAndRoundTrip) {
  auto s = fresh();
  submit_allocation(s, Role::analyst, Stage::baseline, kAnalyst6, "t");
  submit_allocation(s, Role::consumer, Stage::baseline, kConsumer6, "t");
  EXPECT_EQ(csv_rows(export_session_csv(s)), 12u);
  const auto sug = suggest_resolution(s, 0.3, 0.6);
  submit_allocation(s, Role::analyst, Stage::resolution, vec(sug.analyst.weights()), "t");
  submit_allocation(s, Role::consumer, Stage::resolution, vec(sug.consumer.weights()), "t");
  const auto text = export_session_csv(s);
  EXPECT_EQ(csv_rows(text), 24u);

  std::istringstream in(text);
  const auto data = ingest(in);
  const auto f = fit(data, 0);
  const std::size_t ref = s.principles.reference_index();
  for (auto role : {Role::analyst, Role::consumer}) {
    const auto& subj = f.subjects.at(std::string(to_string(role)));
    EXPECT_EQ(subj.group_id, "s1");
    EXPECT_EQ(subj.role, role);
    const auto base = log_relative(*s.submission(role, Stage::baseline), ref);
    const auto res = log_relative(*s.submission(role, Stage::resolution), ref);
    EXPECT_LT(oracle::max_abs_diff(vec(subj.baseline.values()), vec(base.values())), 1e-9);
    EXPECT_LT(oracle::max_abs_diff(vec(subj.resolution->values()), vec(res.values())), 1e-9);
  }
  std::vector<std::string> consumer = {"consumer"};
  const auto report = alignment_report(f, "analyst", consumer);
  EXPECT_LT(oracle::max_abs_diff(vec(report.overall.values()), vec(s.computed.overall->values())), 1e-9);
}

TEST(Json, RoundTripRecomputesMetrics) {
  auto s = new_session("abc", PrincipleSet({"x", "y", "z"}, 2), {0.2, 3.0}, 1e-6, "t0");
  submit_allocation(s, Role::analyst, Stage::baseline, {0.5, 0.5, 0.0}, "t1");
  submit_allocation(s, Role::consumer, Stage::baseline, {0.2, 0.3, 0.5}, "t2");
  submit_allocation(s, Role::consumer, Stage::resolution, {0.3, 0.3, 0.4}, "t3");
  const auto back = session_from_json(session_to_json(s));
  EXPECT_EQ(back.session_id, s.session_id);
  EXPECT_EQ(back.principles, s.principles);
  EXPECT_EQ(back.thresholds.epsilon, 0.2);
  EXPECT_EQ(back.thresholds.p, 3.0);
  EXPECT_EQ(back.smoothing, 1e-6);
  EXPECT_EQ(back.stage, s.stage);
  EXPECT_EQ(back.submissions, s.submissions);
  EXPECT_EQ(back.computed, s.computed);
  EXPECT_EQ(back.created_at, "t0");
  EXPECT_EQ(back.updated_at, "t3");
  expect_code(Errc::schema, [] { session_from_json("{}"); });
  expect_code(Errc::schema, [] { session_from_json("not json"); });
}

TEST(Store, CreatePersistsBeforeReturning) {
  TempDir dir;
  SessionStore store(dir.path());
  const auto a = store.create(PrincipleSet::canonical(), {});
  const auto b = store.create(PrincipleSet::canonical(), {});
  EXPECT_NE(a.session_id, b.session_id);
  EXPECT_EQ(a.principles.size(), 6u);
  EXPECT_EQ(a.stage, SessionStage::baseline);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / (a.session_id + ".json")));
  EXPECT_EQ(store.get(a.session_id).session_id, a.session_id);
  expect_code(Errc::invalid_argument, [&] { store.create(PrincipleSet({"solo"}), {}); });
  expect_code(Errc::invalid_argument, [&] { store.create(PrincipleSet::canonical(), {0.0, 2.0}); });
}

TEST(Store, UnknownAndMalformedIds) {
  TempDir dir;
  SessionStore store(dir.path());
  expect_code(Errc::not_found, [&] { store.get("0123456789abcdef0123456789abcdef"); });
  expect_code(Errc::not_found, [&] { store.get("../etc/passwd"); });
  expect_code(Errc::not_found, [&] { store.submit("nope", Role::analyst, Stage::baseline, kAnalyst6); });
}

TEST(Store, FailedMutationPersistsNothing) {
  TempDir dir;
  SessionStore store(dir.path());
  const auto s = store.create(PrincipleSet::canonical(), {});
  expect_code(Errc::sum_violation, [&] { store.submit(s.session_id, Role::analyst, Stage::baseline, {0.9, 0.9, 0, 0, 0, 0}); });
  EXPECT_TRUE(store.get(s.session_id).submissions.empty());
}

TEST(Store, CrashBeforeRenameKeepsPreviousState) {
  TempDir dir;
  SessionStore store(dir.path());
  const auto s = store.create(PrincipleSet::canonical(), {});
  store.submit(s.session_id, Role::analyst, Stage::baseline, kAnalyst6);
  const auto before = store.get(s.session_id);

  struct Crash {};
  std::filesystem::path seen_temp;
  store.set_before_commit_hook([&](const std::filesystem::path& temp, const std::filesystem::path&) {
    seen_temp = temp;
    throw Crash{};
  });
  EXPECT_THROW(store.submit(s.session_id, Role::consumer, Stage::baseline, kConsumer6), Crash);
  // The new state was fully written to the temporary file, but the committed
  // document is still the previous one.
  EXPECT_TRUE(std::filesystem::exists(seen_temp));
  std::ifstream tmp(seen_temp);
  std::stringstream tmp_text;
  tmp_text << tmp.rdbuf();
  EXPECT_EQ(session_from_json(tmp_text.str()).stage, SessionStage::negotiation);

  store.set_before_commit_hook(nullptr);
  const auto after = store.get(s.session_id);
  EXPECT_EQ(after.stage, before.stage);
  EXPECT_EQ(after.submissions, before.submissions);
  EXPECT_EQ(after.updated_at, before.updated_at);

  // The store recovers on the next write.
  store.submit(s.session_id, Role::consumer, Stage::baseline, kConsumer6);
  EXPECT_EQ(store.get(s.session_id).stage, SessionStage::negotiation);
}

TEST(Store, CrashAtEveryWriteLeavesAReadableState) {
  TempDir dir;
  SessionStore store(dir.path());
  const auto id = store.create(PrincipleSet::canonical(), {}).session_id;
  struct Crash {};
  bool crash = false;
  store.set_before_commit_hook([&](const auto&, const auto&) {
    if (crash) throw Crash{};
  });
  const std::vector<std::function<void()>> steps = {
      [&] { store.submit(id, Role::analyst, Stage::baseline, kAnalyst6); },
      [&] { store.submit(id, Role::consumer, Stage::baseline, kConsumer6); },
      [&] { store.submit(id, Role::analyst, Stage::resolution, kConsumer6); },
      [&] { store.advance(id, SessionStage::closed); }};
  for (const auto& step : steps) {
    const auto prev = session_to_json(store.get(id));
    crash = true;
    EXPECT_THROW(step(), Crash);
    EXPECT_EQ(session_to_json(store.get(id)), prev);
    crash = false;
    step();
    EXPECT_NE(session_to_json(store.get(id)), prev);
  }
}

TEST(Store, ConcurrentWritersAreSerialised) {
  TempDir dir;
  SessionStore store(dir.path());
  const auto id = store.create(PrincipleSet({"a", "b"}), {}).session_id;
  store.submit(id, Role::analyst, Stage::baseline, {0.5, 0.5});
  store.submit(id, Role::consumer, Stage::baseline, {0.5, 0.5});
  std::atomic<int> read_failures{0};
  std::atomic<bool> done{false};
  std::thread reader([&] {
    while (!done) {
      try {
        store.get(id);
      } catch (...) {
        ++read_failures;
      }
    }
  });
  std::vector<std::thread> writers;
  for (int w = 0; w < 4; ++w) {
    writers.emplace_back([&, w] {
      for (int i = 0; i < 25; ++i) {
        const double x = 0.1 + 0.008 * (w * 25 + i);
        store.submit(id, w % 2 ? Role::consumer : Role::analyst, Stage::resolution, {x, 1 - x});
      }
    });
  }
  for (auto& t : writers) t.join();
  done = true;
  reader.join();
  EXPECT_EQ(read_failures.load(), 0);
  const auto s = store.get(id);
  EXPECT_EQ(s.stage, SessionStage::resolution);
  EXPECT_TRUE(s.computed.overall);
}
