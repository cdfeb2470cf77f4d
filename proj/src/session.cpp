#include "align/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "align/csv.hpp"
#include "align/error.hpp"
#include "align/estimation.hpp"
#include "align/negotiation.hpp"

namespace align {

namespace {

using nlohmann::json;

constexpr std::array<SessionStage, 4> kStages = {SessionStage::baseline, SessionStage::negotiation,
                                                 SessionStage::resolution, SessionStage::closed};
constexpr std::array<Role, 2> kRoles = {Role::analyst, Role::consumer};
constexpr const char* kFormat = "align-session/1";

json vector_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

json verdict_json(const AlignmentVerdict& v) {
  return {{"strong", v.strong}, {"weak", v.weak},       {"sup_norm", v.sup_norm},
          {"p_norm", v.p_norm}, {"epsilon", v.epsilon}, {"p", v.p}};
}

json metrics_json(const SessionMetrics& m) {
  json out = {{"baseline", nullptr}, {"resolution", nullptr}};
  if (m.baseline) {
    out["baseline"] = {{"B", vector_json(m.baseline->values())},
                       {"verdict", verdict_json(*m.baseline_verdict)}};
  }
  if (m.overall) {
    json pending = json::array();
    for (auto r : m.resolution_pending) pending.push_back(std::string(to_string(r)));
    out["resolution"] = {{"phi", vector_json(m.phi->values())},
                         {"theta", vector_json(m.theta->values())},
                         {"R", vector_json(m.residual->values())},
                         {"D", vector_json(m.overall->values())},
                         {"verdict", verdict_json(*m.overall_verdict)},
                         {"improved", *m.improved},
                         {"pending", pending}};
  }
  return out;
}

std::string session_file_name(const std::string& id) { return id + ".json"; }

void require_valid_id(const std::string& id) {
  const bool ok = !id.empty() && id.size() <= 64 &&
                  std::all_of(id.begin(), id.end(), [](unsigned char c) {
                    return std::isalnum(c) || c == '-' || c == '_';
                  });
  if (!ok) throw Error(Errc::not_found, "unknown session '" + id + "'");
}

std::string random_id() {
  std::random_device rd;
  std::uniform_int_distribution<int> hex(0, 15);
  std::string id;
  for (int i = 0; i < 32; ++i) id.push_back("0123456789abcdef"[hex(rd)]);
  return id;
}

}  // namespace

std::string_view to_string(SessionStage stage) noexcept {
  switch (stage) {
    case SessionStage::baseline: return "baseline";
    case SessionStage::negotiation: return "negotiation";
    case SessionStage::resolution: return "resolution";
    case SessionStage::closed: return "closed";
  }
  return "?";
}

SessionStage parse_session_stage(std::string_view text) {
  for (auto s : kStages) {
    if (text == to_string(s)) return s;
  }
  throw Error(Errc::invalid_argument, "unknown session stage '" + std::string(text) + "'");
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const AllocationVector* SessionRecord::submission(Role role, Stage s) const {
  auto it = submissions.find({role, s});
  return it == submissions.end() ? nullptr : &it->second;
}

SessionMetrics compute_metrics(const SessionRecord& session) {
  SessionMetrics m;
  const auto* a_base = session.submission(Role::analyst, Stage::baseline);
  const auto* c_base = session.submission(Role::consumer, Stage::baseline);
  if (!a_base || !c_base) return m;
  const std::size_t ref = session.principles.reference_index();
  const auto psi_b = log_relative(*a_base, ref, session.smoothing);
  const auto kappa_b = log_relative(*c_base, ref, session.smoothing);
  m.baseline = alignment_difference(psi_b, kappa_b);
  m.baseline_verdict = assess(*m.baseline, session.thresholds);

  const auto* a_res = session.submission(Role::analyst, Stage::resolution);
  const auto* c_res = session.submission(Role::consumer, Stage::resolution);
  const bool resolving = a_res || c_res || session.stage == SessionStage::resolution ||
                         session.stage == SessionStage::closed;
  if (!resolving) return m;
  const auto psi_r = a_res ? log_relative(*a_res, ref, session.smoothing) : psi_b;
  const auto kappa_r = c_res ? log_relative(*c_res, ref, session.smoothing) : kappa_b;
  m.phi = psi_r - psi_b;
  m.theta = kappa_r - kappa_b;
  auto [d, r] = overall_alignment(*m.baseline, *m.phi, *m.theta);
  m.improved = improvement_check(*m.baseline, r);
  m.overall_verdict = assess(d, session.thresholds);
  m.overall = std::move(d);
  m.residual = std::move(r);
  if (!a_res) m.resolution_pending.push_back(Role::analyst);
  if (!c_res) m.resolution_pending.push_back(Role::consumer);
  return m;
}

SessionRecord new_session(std::string session_id, PrincipleSet principles,
                          AlignmentThresholds thresholds, double smoothing,
                          std::string timestamp) {
  thresholds.validate();
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) {
    throw Error(Errc::invalid_argument, "smoothing must be >= 0");
  }
  SessionRecord s{std::move(session_id), std::move(principles), thresholds, smoothing,
                  SessionStage::baseline, {}, {}, timestamp, timestamp};
  return s;
}

void submit_allocation(SessionRecord& session, Role role, Stage stage,
                       std::vector<double> weights, std::string timestamp) {
  if (weights.size() != session.principles.size()) {
    throw Error(Errc::simplex_violation,
                "expected " + std::to_string(session.principles.size()) + " weights, got " +
                    std::to_string(weights.size()));
  }
  const auto current = session.stage;
  if (stage == Stage::baseline && current != SessionStage::baseline &&
      current != SessionStage::negotiation) {
    throw Error(Errc::stage_order, "baseline allocations are closed once the session reaches " +
                                       std::string(to_string(current)));
  }
  if (stage == Stage::resolution && current != SessionStage::negotiation &&
      current != SessionStage::resolution) {
    throw Error(Errc::stage_order, "resolution allocations are not accepted while the session is at " +
                                       std::string(to_string(current)));
  }
  auto alloc = AllocationVector::renormalized(std::move(weights), stage, kIngestSumTolerance);
  session.submissions.insert_or_assign({role, stage}, std::move(alloc));
  if (stage == Stage::baseline && session.submission(Role::analyst, Stage::baseline) &&
      session.submission(Role::consumer, Stage::baseline) &&
      session.stage == SessionStage::baseline) {
    session.stage = SessionStage::negotiation;
  }
  if (stage == Stage::resolution) session.stage = SessionStage::resolution;
  session.computed = compute_metrics(session);
  session.updated_at = std::move(timestamp);
}

void advance_session(SessionRecord& session, SessionStage to, std::string timestamp) {
  if (to < session.stage) {
    throw Error(Errc::stage_order, "cannot move a session back from " +
                                       std::string(to_string(session.stage)) + " to " +
                                       std::string(to_string(to)));
  }
  if (to == session.stage) return;
  const bool baselines = session.submission(Role::analyst, Stage::baseline) &&
                         session.submission(Role::consumer, Stage::baseline);
  if (!baselines) {
    throw Error(Errc::stage_order, "both baseline allocations are required before " +
                                       std::string(to_string(to)));
  }
  session.stage = to;
  session.computed = compute_metrics(session);
  session.updated_at = std::move(timestamp);
}

Suggestion suggest_resolution(const SessionRecord& session, double analyst_concession,
                              double consumer_concession) {
  for (double g : {analyst_concession, consumer_concession}) {
    if (!(g >= 0.0 && g <= 1.0)) throw Error(Errc::invalid_argument, "concessions must lie in [0, 1]");
  }
  const auto* a_base = session.submission(Role::analyst, Stage::baseline);
  const auto* c_base = session.submission(Role::consumer, Stage::baseline);
  if (!a_base || !c_base) {
    throw Error(Errc::stage_order, "both baseline allocations are required for a suggestion");
  }
  const std::size_t ref = session.principles.reference_index();
  const auto psi_b = log_relative(*a_base, ref, session.smoothing);
  const auto kappa_b = log_relative(*c_base, ref, session.smoothing);
  const auto b = alignment_difference(psi_b, kappa_b);
  const auto phi = -analyst_concession * b.as_log_relative();
  const auto theta = consumer_concession * b.as_log_relative();
  auto to_weights = [](const LogRelativeVector& lr) {
    auto mu = mean_allocation(from_log_relative(lr, 1.0));
    return AllocationVector(std::vector<double>(mu.weights().begin(), mu.weights().end()),
                            Stage::resolution);
  };
  auto predicted = overall_alignment(b, phi, theta).overall;
  const auto verdict = assess(predicted, session.thresholds);
  return {to_weights(psi_b + phi), to_weights(kappa_b + theta), std::move(predicted), verdict};
}

std::string export_session_csv(const SessionRecord& session) {
  std::vector<AllocationRecord> records;
  for (auto role : kRoles) {
    for (auto stage : {Stage::baseline, Stage::resolution}) {
      if (const auto* a = session.submission(role, stage)) {
        records.push_back({std::string(to_string(role)), session.session_id, role, stage, *a});
      }
    }
  }
  std::ostringstream out;
  write_records_csv(out, session.principles, records);
  return out.str();
}

std::string session_to_json(const SessionRecord& s) {
  json subs = json::object();
  for (auto role : kRoles) {
    json per_role = json::object();
    for (auto stage : {Stage::baseline, Stage::resolution}) {
      if (const auto* a = s.submission(role, stage)) {
        per_role[std::string(to_string(stage))] = vector_json(a->weights());
      }
    }
    subs[std::string(to_string(role))] = per_role;
  }
  json doc = {{"format", kFormat},
              {"session_id", s.session_id},
              {"stage", std::string(to_string(s.stage))},
              {"principles", s.principles.names()},
              {"reference", s.principles.reference_index()},
              {"epsilon", s.thresholds.epsilon},
              {"p", s.thresholds.p},
              {"smoothing", s.smoothing},
              {"created_at", s.created_at},
              {"updated_at", s.updated_at},
              {"submissions", subs},
              {"metrics", metrics_json(s.computed)}};
  return doc.dump(2);
}

std::string suggestion_to_json(const Suggestion& s) {
  json doc = {{"analyst_weights", vector_json(s.analyst.weights())},
              {"consumer_weights", vector_json(s.consumer.weights())},
              {"predicted_D", vector_json(s.predicted_overall.values())},
              {"predicted_verdict", verdict_json(s.predicted_verdict)}};
  return doc.dump(2);
}

SessionRecord session_from_json(std::string_view text) {
  try {
    const auto doc = json::parse(text);
    if (doc.at("format").get<std::string>() != kFormat) {
      throw Error(Errc::schema, "unsupported session format");
    }
    PrincipleSet principles(doc.at("principles").get<std::vector<std::string>>(),
                            doc.at("reference").get<std::size_t>());
    AlignmentThresholds thresholds{doc.at("epsilon").get<double>(), doc.at("p").get<double>()};
    SessionRecord s = new_session(doc.at("session_id").get<std::string>(), std::move(principles),
                                  thresholds, doc.at("smoothing").get<double>(),
                                  doc.at("created_at").get<std::string>());
    s.updated_at = doc.at("updated_at").get<std::string>();
    s.stage = parse_session_stage(doc.at("stage").get<std::string>());
    for (const auto& [role_name, per_role] : doc.at("submissions").items()) {
      const auto role = parse_role(role_name);
      for (const auto& [stage_name, weights] : per_role.items()) {
        const auto stage = parse_stage(stage_name);
        s.submissions.insert_or_assign(
            {role, stage}, AllocationVector(weights.get<std::vector<double>>(), stage));
      }
    }
    s.computed = compute_metrics(s);
    return s;
  } catch (const json::exception& e) {
    throw Error(Errc::schema, std::string("malformed session document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// SessionStore

SessionStore::SessionStore(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec || !std::filesystem::is_directory(dir_)) {
    throw Error(Errc::io, "cannot create data directory '" + dir_.string() + "'");
  }
}

std::filesystem::path SessionStore::path_for(const std::string& session_id) const {
  require_valid_id(session_id);
  return dir_ / session_file_name(session_id);
}

void SessionStore::persist(const SessionRecord& session) const {
  const auto target = path_for(session.session_id);
  auto temp = target;
  temp += ".tmp";
  const auto body = session_to_json(session);
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write '" + temp.string() + "'");
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.flush();
    if (!out) throw Error(Errc::io, "short write to '" + temp.string() + "'");
  }
  if (int fd = ::open(temp.c_str(), O_RDONLY); fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
  if (before_commit_) before_commit_(temp, target);
  std::error_code ec;
  std::filesystem::rename(temp, target, ec);
  if (ec) throw Error(Errc::io, "cannot commit '" + target.string() + "': " + ec.message());
}

std::shared_ptr<std::mutex> SessionStore::lock_for(const std::string& session_id) {
  std::lock_guard guard(locks_mutex_);
  auto& slot = locks_[session_id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

template <typename Fn>
SessionRecord SessionStore::mutate(const std::string& session_id, Fn&& fn) {
  const auto lock = lock_for(session_id);
  std::lock_guard guard(*lock);
  SessionRecord session = get(session_id);
  fn(session);
  persist(session);
  return session;
}

SessionRecord SessionStore::create(PrincipleSet principles, AlignmentThresholds thresholds,
                                   double smoothing) {
  std::string id;
  do {
    id = random_id();
  } while (std::filesystem::exists(path_for(id)));
  auto session = new_session(id, std::move(principles), thresholds, smoothing, utc_timestamp());
  const auto lock = lock_for(id);
  std::lock_guard guard(*lock);
  persist(session);
  return session;
}

SessionRecord SessionStore::get(const std::string& session_id) const {
  const auto path = path_for(session_id);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::not_found, "unknown session '" + session_id + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return session_from_json(buf.str());
}

SessionRecord SessionStore::submit(const std::string& session_id, Role role, Stage stage,
                                   std::vector<double> weights) {
  return mutate(session_id, [&](SessionRecord& s) {
    submit_allocation(s, role, stage, std::move(weights), utc_timestamp());
  });
}

SessionRecord SessionStore::advance(const std::string& session_id, SessionStage to) {
  return mutate(session_id,
                [&](SessionRecord& s) { advance_session(s, to, utc_timestamp()); });
}

Suggestion SessionStore::suggest(const std::string& session_id, double analyst_concession,
                                 double consumer_concession) const {
  return suggest_resolution(get(session_id), analyst_concession, consumer_concession);
}

std::string SessionStore::export_csv(const std::string& session_id) const {
  return export_session_csv(get(session_id));
}

}  // namespace align
