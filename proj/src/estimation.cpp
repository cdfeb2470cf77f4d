#include "align/estimation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <unordered_map>

#include "align/csv.hpp"
#include "align/error.hpp"

namespace align {

namespace {

const std::vector<std::string> kRecordColumns = {"subject_id", "group_id", "role",
                                                 "stage",      "principle", "allocation"};

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

double parse_allocation(const std::string& text, std::size_t line) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(Errc::schema, at_line(line) + "allocation '" + text + "' is not a decimal number");
  }
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error(Errc::simplex_violation,
                at_line(line) + "allocation " + text + " lies outside [0, 1]");
  }
  return value;
}

struct PendingStage {
  std::string subject_id;
  Stage stage;
  std::vector<std::optional<double>> weights;
};

struct SubjectInfo {
  std::string group_id;
  Role role;
};

}  // namespace

Dataset ingest(std::istream& in, const std::optional<PrincipleSet>& principles) {
  const auto table = csv::read(in);
  std::vector<std::size_t> col;
  for (const auto& name : kRecordColumns) {
    auto c = table.column(name);
    if (!c) throw Error(Errc::schema, "missing required column '" + name + "'");
    col.push_back(*c);
  }
  const auto kind_col = table.column("kind");
  enum { SUBJECT, GROUP, ROLE, STAGE, PRINCIPLE, ALLOCATION };

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (kind_col) {
      const auto& kind = table.rows[i][*kind_col];
      if (kind == "group_mean") continue;
      if (kind != "subject") {
        throw Error(Errc::schema,
                    at_line(table.line_numbers[i]) + "unknown row kind '" + kind + "'");
      }
    }
    rows.push_back(i);
  }

  std::vector<std::string> names;
  if (principles) {
    names = principles->names();
  } else {
    for (std::size_t i : rows) {
      const auto& p = table.rows[i][col[PRINCIPLE]];
      if (std::find(names.begin(), names.end(), p) == names.end()) names.push_back(p);
    }
  }
  if (!principles && names.size() < 2) {
    throw Error(Errc::schema, "records name " + std::to_string(names.size()) +
                                  " distinct principle(s); at least 2 are required");
  }
  PrincipleSet set = principles ? *principles : PrincipleSet(names);
  const std::size_t k_count = set.size();

  std::map<std::string, SubjectInfo> subjects;
  std::vector<PendingStage> pending;
  std::map<std::pair<std::string, Stage>, std::size_t> slot;

  for (std::size_t i : rows) {
    const auto& row = table.rows[i];
    const std::size_t line = table.line_numbers[i];
    const auto& subject = row[col[SUBJECT]];
    if (subject.empty()) throw Error(Errc::schema, at_line(line) + "empty subject_id");
    Role role;
    Stage stage;
    try {
      role = parse_role(row[col[ROLE]]);
      stage = parse_stage(row[col[STAGE]]);
    } catch (const Error& e) {
      throw Error(Errc::schema, at_line(line) + e.what());
    }
    const auto k = set.index_of(row[col[PRINCIPLE]]);
    if (!k) {
      throw Error(Errc::unknown_principle,
                  at_line(line) + "unknown principle '" + row[col[PRINCIPLE]] + "'");
    }
    const double w = parse_allocation(row[col[ALLOCATION]], line);

    auto [it, inserted] = subjects.try_emplace(subject, SubjectInfo{row[col[GROUP]], role});
    if (!inserted && (it->second.group_id != row[col[GROUP]] || it->second.role != role)) {
      throw Error(Errc::schema, at_line(line) + "subject '" + subject +
                                    "' changes group or role between rows");
    }

    auto key = std::make_pair(subject, stage);
    auto [s, fresh] = slot.try_emplace(key, pending.size());
    if (fresh) {
      pending.push_back({subject, stage, std::vector<std::optional<double>>(k_count)});
    }
    auto& cell = pending[s->second].weights[*k];
    if (cell) {
      throw Error(Errc::schema, at_line(line) + "duplicate row for subject '" + subject + "', " +
                                    std::string(to_string(stage)) + ", principle '" +
                                    set.name(*k) + "'");
    }
    cell = w;
  }

  Dataset data{set, {}, {}};
  for (auto& p : pending) {
    std::vector<double> weights;
    weights.reserve(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
      if (!p.weights[k]) {
        throw Error(Errc::incomplete_subject, "subject '" + p.subject_id + "' has no " +
                                                  std::string(to_string(p.stage)) +
                                                  " allocation for principle '" + set.name(k) +
                                                  "'");
      }
      weights.push_back(*p.weights[k]);
    }
    AllocationVector alloc = [&] {
      try {
        return AllocationVector::renormalized(std::move(weights), p.stage, kIngestSumTolerance);
      } catch (const Error& e) {
        throw Error(e.code(), "subject '" + p.subject_id + "' " +
                                  std::string(to_string(p.stage)) + ": " + e.what());
      }
    }();
    const auto& info = subjects.at(p.subject_id);
    data.records.push_back({p.subject_id, info.group_id, info.role, p.stage, std::move(alloc)});
  }

  for (const auto& [id, info] : subjects) {
    const bool has_base = slot.count({id, Stage::baseline}) > 0;
    const bool has_res = slot.count({id, Stage::resolution}) > 0;
    if (!has_base) {
      throw Error(Errc::incomplete_subject, "subject '" + id + "' has no baseline allocations");
    }
    if (!has_res) data.baseline_only.insert(id);
  }
  return data;
}

Dataset ingest_file(const std::filesystem::path& path,
                    const std::optional<PrincipleSet>& principles) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "': file not found or unreadable");
  return ingest(in, principles);
}

void write_records_csv(std::ostream& out, const PrincipleSet& principles,
                       std::span<const AllocationRecord> records) {
  csv::write_row(out, kRecordColumns);
  for (const auto& r : records) {
    for (std::size_t k = 0; k < principles.size(); ++k) {
      csv::write_row(out, {r.subject_id, r.group_id, std::string(to_string(r.role)),
                           std::string(to_string(r.stage)), principles.name(k),
                           csv::format_double(r.allocations[k])});
    }
  }
}

// ---------------------------------------------------------------------------

int FitResult::field_id(const std::string& group_id) const {
  auto it = field_means.find(group_id);
  if (it == field_means.end()) throw Error(Errc::unknown_id, "unknown group '" + group_id + "'");
  return static_cast<int>(std::distance(field_means.begin(), it)) + 1;
}

PartyParams FitResult::party(const std::string& subject_id, Role role) const {
  auto it = subjects.find(subject_id);
  if (it == subjects.end()) {
    throw Error(Errc::unknown_id, "unknown subject '" + subject_id + "'");
  }
  const auto& s = it->second;
  auto adj = adjustments.find(subject_id);
  std::optional<LogRelativeVector> adjustment;
  if (adj != adjustments.end()) adjustment = adj->second;
  return PartyParams(role, field_id(s.group_id), field_means.at(s.group_id),
                     deviations.at(subject_id), adjustment);
}

FitResult fit(const Dataset& data, std::size_t reference_index, double smoothing_constant) {
  FitResult result{data.principles.with_reference(reference_index), {}, {}, {}, {},
                   smoothing_constant, 0};
  if (data.records.empty()) throw Error(Errc::empty_input, "dataset has no records");

  for (const auto& r : data.records) {
    if (r.allocations.on_boundary()) ++result.smoothed_vectors;
    auto lr = log_relative(r.allocations, reference_index, smoothing_constant);
    auto [it, inserted] = result.subjects.try_emplace(
        r.subject_id, SubjectFit{r.group_id, r.role, LogRelativeVector::zeros(lr.size(), reference_index),
                                 std::nullopt});
    if (r.stage == Stage::baseline) {
      it->second.baseline = std::move(lr);
    } else {
      it->second.resolution = std::move(lr);
    }
  }

  const std::size_t k_count = data.principles.size();
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;
  for (const auto& [id, s] : result.subjects) {
    auto& [acc, n] = sums.try_emplace(s.group_id, std::vector<double>(k_count, 0.0), 0).first->second;
    for (std::size_t k = 0; k < k_count; ++k) acc[k] += s.baseline[k];
    ++n;
  }
  for (auto& [group, entry] : sums) {
    auto& [acc, n] = entry;
    for (double& v : acc) v /= static_cast<double>(n);
    result.field_means.emplace(group, LogRelativeVector(acc, reference_index));
  }
  for (const auto& [id, s] : result.subjects) {
    result.deviations.emplace(id, s.baseline - result.field_means.at(s.group_id));
    if (s.resolution) result.adjustments.emplace(id, *s.resolution - s.baseline);
  }
  return result;
}

AlignmentReport alignment_report(const FitResult& fit, const std::string& analyst_id,
                                 std::span<const std::string> consumer_ids,
                                 const AlignmentThresholds& thresholds) {
  thresholds.validate();
  if (consumer_ids.empty()) throw Error(Errc::empty_input, "no consumer ids given");
  const auto analyst = fit.party(analyst_id, Role::analyst);
  std::vector<PartyParams> consumers;
  std::vector<LogRelativeVector> thetas;
  for (const auto& id : consumer_ids) {
    consumers.push_back(fit.party(id, Role::consumer));
    thetas.push_back(consumers.back().negotiation_adjustment);
  }
  const bool group = consumers.size() > 1;
  auto b = group_baseline_alignment(analyst, consumers);

  LogRelativeVector theta_bar = thetas.front();
  for (std::size_t j = 1; j < thetas.size(); ++j) theta_bar = theta_bar + thetas[j];
  if (group) theta_bar = (1.0 / static_cast<double>(thetas.size())) * theta_bar;
  auto [d, r] = overall_alignment(b, analyst.negotiation_adjustment, theta_bar);

  const auto baseline_verdict = assess(b, thresholds);
  const auto overall_verdict = assess(d, thresholds);
  const bool improved =
      power_mean_norm(d.values(), 2.0) <= power_mean_norm(b.values(), 2.0);
  return {analyst_id,
          {consumer_ids.begin(), consumer_ids.end()},
          group,
          std::move(b),
          std::move(r),
          std::move(d),
          baseline_verdict,
          overall_verdict,
          improved};
}

std::vector<FigureRow> figure_data(const Dataset& data, const FitResult& fit) {
  const auto& names = data.principles.names();
  std::vector<const AllocationRecord*> ordered;
  for (const auto& r : data.records) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return std::tie(a->group_id, a->subject_id, a->stage) <
           std::tie(b->group_id, b->subject_id, b->stage);
  });

  std::vector<FigureRow> rows;
  for (const auto* r : ordered) {
    const auto& s = fit.subjects.at(r->subject_id);
    const auto& lr = r->stage == Stage::baseline ? s.baseline : *s.resolution;
    for (std::size_t k = 0; k < names.size(); ++k) {
      rows.push_back({r->subject_id, r->group_id, std::string(to_string(r->role)),
                      std::string(to_string(r->stage)), names[k], r->allocations[k], "subject",
                      lr[k]});
    }
  }
  for (const auto& [group, lambda] : fit.field_means) {
    const auto mu = mean_allocation(from_log_relative(lambda, 1.0));
    for (std::size_t k = 0; k < names.size(); ++k) {
      rows.push_back({"", group, "", "baseline", names[k], mu[k], "group_mean", lambda[k]});
    }
  }
  return rows;
}

void write_figure_csv(std::ostream& out, std::span<const FigureRow> rows) {
  auto header = kRecordColumns;
  header.push_back("kind");
  header.push_back("log_relative");
  csv::write_row(out, header);
  for (const auto& r : rows) {
    csv::write_row(out, {r.subject_id, r.group_id, r.role, r.stage, r.principle,
                         csv::format_double(r.allocation), r.kind,
                         csv::format_double(r.log_relative)});
  }
}

}  // namespace align
