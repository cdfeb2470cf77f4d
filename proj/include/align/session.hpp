#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "align/metrics.hpp"
#include "align/principles.hpp"

namespace align {

/// Stages of a live negotiation session. Sessions only ever move forward.
enum class SessionStage { baseline, negotiation, resolution, closed };

std::string_view to_string(SessionStage stage) noexcept;
SessionStage parse_session_stage(std::string_view text);

struct SessionMetrics {
  std::optional<AlignmentVector> baseline;  // B
  std::optional<AlignmentVerdict> baseline_verdict;
  std::optional<LogRelativeVector> phi;
  std::optional<LogRelativeVector> theta;
  std::optional<AlignmentVector> residual;  // R
  std::optional<AlignmentVector> overall;   // D
  std::optional<AlignmentVerdict> overall_verdict;
  std::optional<bool> improved;
  std::vector<Role> resolution_pending;

  bool operator==(const SessionMetrics&) const = default;
};

struct SessionRecord {
  std::string session_id;
  PrincipleSet principles;
  AlignmentThresholds thresholds;
  double smoothing = 0.0;
  SessionStage stage = SessionStage::baseline;
  std::map<std::pair<Role, Stage>, AllocationVector> submissions;
  SessionMetrics computed;
  std::string created_at;
  std::string updated_at;

  const AllocationVector* submission(Role role, Stage stage) const;
};

/// Recomputes B (both baselines present) and, once any resolution allocation
/// exists or the session has reached resolution, phi/theta/R/D. A party
/// without a resolution allocation keeps its baseline (zero adjustment).
SessionMetrics compute_metrics(const SessionRecord& session);

SessionRecord new_session(std::string session_id, PrincipleSet principles,
                          AlignmentThresholds thresholds, double smoothing,
                          std::string timestamp);

/// Stores one party's allocation. Baselines are accepted during baseline and
/// negotiation, resolutions during negotiation and resolution. Both baselines
/// move the session to negotiation; a resolution moves it to resolution.
void submit_allocation(SessionRecord& session, Role role, Stage stage,
                       std::vector<double> weights, std::string timestamp);

/// Moves the session forward to `to`; moving backward or skipping past a
/// stage whose preconditions are unmet is a stage_order error.
void advance_session(SessionRecord& session, SessionStage to, std::string timestamp);

struct Suggestion {
  AllocationVector analyst;
  AllocationVector consumer;
  AlignmentVector predicted_overall;
  AlignmentVerdict predicted_verdict;
};

/// Resolution allocations that realise phi = -gamma_a B and theta = gamma_c B.
Suggestion suggest_resolution(const SessionRecord& session, double analyst_concession,
                              double consumer_concession);

/// Estimation-schema CSV: subject_id is the role, group_id the session id.
std::string export_session_csv(const SessionRecord& session);

/// Full session view: configuration, submissions and computed metrics.
std::string session_to_json(const SessionRecord& session);
std::string suggestion_to_json(const Suggestion& suggestion);
SessionRecord session_from_json(std::string_view text);

std::string utc_timestamp();

/// One JSON document per session under a data directory. Writes go to a
/// temporary file which is fsynced and renamed over the previous state.
/// Mutations are serialised per session.
class SessionStore {
 public:
  using WriteHook = std::function<void(const std::filesystem::path& temp,
                                       const std::filesystem::path& target)>;

  explicit SessionStore(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const noexcept { return dir_; }

  SessionRecord create(PrincipleSet principles, AlignmentThresholds thresholds,
                       double smoothing = 0.0);
  SessionRecord get(const std::string& session_id) const;
  SessionRecord submit(const std::string& session_id, Role role, Stage stage,
                       std::vector<double> weights);
  SessionRecord advance(const std::string& session_id, SessionStage to);
  Suggestion suggest(const std::string& session_id, double analyst_concession,
                     double consumer_concession) const;
  std::string export_csv(const std::string& session_id) const;

  /// Called after the temporary file is complete and before the rename.
  /// Throwing from the hook simulates a crash at that point.
  void set_before_commit_hook(WriteHook hook) { before_commit_ = std::move(hook); }

 private:
  std::filesystem::path path_for(const std::string& session_id) const;
  void persist(const SessionRecord& session) const;
  std::shared_ptr<std::mutex> lock_for(const std::string& session_id);

  template <typename Fn>
  SessionRecord mutate(const std::string& session_id, Fn&& fn);

  std::filesystem::path dir_;
  WriteHook before_commit_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

}  // namespace align
