#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "align/metrics.hpp"
#include "align/principles.hpp"

namespace align {

/// One subject's allocation over the principle set at one stage.
struct AllocationRecord {
  std::string subject_id;
  std::string group_id;  // the subject's field
  Role role;
  Stage stage;
  AllocationVector allocations;
};

struct Dataset {
  PrincipleSet principles;
  std::vector<AllocationRecord> records;
  std::set<std::string> baseline_only;  // subjects without a resolution stage
};

inline constexpr double kIngestSumTolerance = 1e-6;

/// Reads long-format survey data with columns
/// subject_id,group_id,role,stage,principle,allocation (extra columns are
/// ignored; when a `kind` column is present only `subject` rows are read).
/// Without an explicit principle set, principles are taken in order of first
/// appearance and the reference is index 0.
Dataset ingest(std::istream& in, const std::optional<PrincipleSet>& principles = std::nullopt);
Dataset ingest_file(const std::filesystem::path& path,
                    const std::optional<PrincipleSet>& principles = std::nullopt);

void write_records_csv(std::ostream& out, const PrincipleSet& principles,
                       std::span<const AllocationRecord> records);

struct SubjectFit {
  std::string group_id;
  Role role;
  LogRelativeVector baseline;
  std::optional<LogRelativeVector> resolution;
};

struct FitResult {
  PrincipleSet principles;  // carries the reference used for the fit
  std::map<std::string, LogRelativeVector> field_means;  // per group
  std::map<std::string, LogRelativeVector> deviations;   // per subject
  std::map<std::string, LogRelativeVector> adjustments;  // per subject with both stages
  std::map<std::string, SubjectFit> subjects;
  double smoothing_constant = 0.0;
  std::size_t smoothed_vectors = 0;  // allocations that touched the boundary

  std::size_t reference_index() const noexcept { return principles.reference_index(); }
  int field_id(const std::string& group_id) const;
  PartyParams party(const std::string& subject_id, Role role) const;
};

/// Group means of baseline log-relative allocations, per-subject residuals
/// from the group mean, and resolution-minus-baseline adjustments.
FitResult fit(const Dataset& data, std::size_t reference_index, double smoothing_constant = 0.0);

struct AlignmentReport {
  std::string analyst_id;
  std::vector<std::string> consumer_ids;
  bool group_form;
  AlignmentVector baseline;
  AlignmentVector residual;
  AlignmentVector overall;
  AlignmentVerdict baseline_verdict;
  AlignmentVerdict overall_verdict;
  bool improved;
};

/// Alignment of one fitted subject (as analyst) against one or more fitted
/// subjects (as consumers). Subjects without a resolution stage contribute a
/// zero adjustment.
AlignmentReport alignment_report(const FitResult& fit, const std::string& analyst_id,
                                 std::span<const std::string> consumer_ids,
                                 const AlignmentThresholds& thresholds = {});

struct FigureRow {
  std::string subject_id;
  std::string group_id;
  std::string role;
  std::string stage;
  std::string principle;
  double allocation;
  std::string kind;  // subject | group_mean
  double log_relative;
};

/// Long-format plot data: one row per (subject, stage, principle) followed by
/// one group_mean row per (group, principle).
std::vector<FigureRow> figure_data(const Dataset& data, const FitResult& fit);
void write_figure_csv(std::ostream& out, std::span<const FigureRow> rows);

}  // namespace align
