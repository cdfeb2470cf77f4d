#include "align/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "align/csv.hpp"
#include "align/error.hpp"
#include "align/estimation.hpp"
#include "align/service.hpp"
#include "align/simulation.hpp"

namespace align {

namespace {

struct PartyFile {
  std::vector<std::string> principles;
  std::vector<double> baseline;
  std::vector<double> resolution;
};

// A party allocation file is a CSV with `principle` and `allocation` columns
// and an optional `stage` column (baseline when absent).
PartyFile read_party_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, path + ": file not found or unreadable");
  const auto table = csv::read(in);
  const auto principle_col = table.column("principle");
  const auto alloc_col = table.column("allocation");
  const auto stage_col = table.column("stage");
  if (!principle_col || !alloc_col) {
    throw Error(Errc::schema, path + ": columns 'principle' and 'allocation' are required");
  }
  PartyFile file;
  std::vector<std::string> resolution_names;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto stage = stage_col ? parse_stage(row[*stage_col]) : Stage::baseline;
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(row[*alloc_col], &used);
      if (used != row[*alloc_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(Errc::schema, path + ": line " + std::to_string(table.line_numbers[i]) +
                                    ": field 'allocation' is not a number");
    }
    if (stage == Stage::baseline) {
      file.principles.push_back(row[*principle_col]);
      file.baseline.push_back(value);
    } else {
      resolution_names.push_back(row[*principle_col]);
      file.resolution.push_back(value);
    }
  }
  if (file.baseline.empty()) throw Error(Errc::incomplete_subject, path + ": no baseline rows");
  if (!file.resolution.empty() && resolution_names != file.principles) {
    throw Error(Errc::schema, path + ": resolution rows must list the baseline principles in order");
  }
  return file;
}

void print_verdict(std::ostream& out, const std::string& label, const AlignmentVerdict& v) {
  out << label << ": strong=" << (v.strong ? "true" : "false")
      << " weak=" << (v.weak ? "true" : "false") << " sup_norm=" << csv::format_double(v.sup_norm)
      << " p_norm=" << csv::format_double(v.p_norm) << " epsilon=" << csv::format_double(v.epsilon)
      << " p=" << csv::format_double(v.p) << '\n';
}

int cmd_metrics(const std::string& analyst_path, const std::string& consumer_path,
                const AlignmentThresholds& thresholds, const std::string& reference,
                double smoothing, std::ostream& out) {
  thresholds.validate();
  const auto a = read_party_file(analyst_path);
  const auto c = read_party_file(consumer_path);
  if (a.principles != c.principles) {
    throw Error(Errc::dimension_mismatch, "analyst and consumer files list different principles");
  }
  const PrincipleSet set(a.principles);
  const std::size_t ref = reference.empty() ? 0 : set.resolve(reference);
  auto lr = [&](const std::vector<double>& w, Stage s) {
    return log_relative(AllocationVector::renormalized(w, s, kIngestSumTolerance), ref, smoothing);
  };
  const auto psi_b = lr(a.baseline, Stage::baseline);
  const auto kappa_b = lr(c.baseline, Stage::baseline);
  const auto b = alignment_difference(psi_b, kappa_b);
  LogRelativeVector phi = LogRelativeVector::zeros(set.size(), ref);
  LogRelativeVector theta = phi;
  if (!a.resolution.empty()) phi = lr(a.resolution, Stage::resolution) - psi_b;
  if (!c.resolution.empty()) theta = lr(c.resolution, Stage::resolution) - kappa_b;
  const auto overall = overall_alignment(b, phi, theta);

  csv::write_row(out, {"principle", "B", "phi", "theta", "R", "D"});
  for (std::size_t k = 0; k < set.size(); ++k) {
    std::vector<std::string> row = {set.name(k)};
    for (double v : {b[k], phi[k], theta[k], overall.residual[k], overall.overall[k]}) {
      row.push_back(csv::format_double(v));
    }
    csv::write_row(out, row);
  }
  print_verdict(out, "baseline", assess(b, thresholds));
  print_verdict(out, "overall", assess(overall.overall, thresholds));
  out << "improved: " << (improvement_check(b, overall.residual) ? "true" : "false") << '\n';
  return kExitOk;
}

void write_to(const std::string& path, std::ostream& fallback,
              const std::function<void(std::ostream&)>& writer) {
  if (path.empty() || path == "-") {
    writer(fallback);
    return;
  }
  std::ofstream file(path);
  if (!file) throw Error(Errc::io, path + ": cannot open for writing");
  writer(file);
  if (!file) throw Error(Errc::io, path + ": write failed");
}

void print_checks(std::ostream& out, const ExperimentResult& result) {
  for (const auto& check : result.checks) {
    out << to_string(check.status) << ' ' << check.name;
    if (!check.detail.empty()) out << "  " << check.detail;
    out << '\n';
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) items.push_back(item);
  return items;
}

struct FitOptions {
  std::string input;
  std::string reference;
  double smoothing = kDefaultSmoothing;
  std::string principles;
  std::string analyst;
  std::vector<std::string> consumers;
  std::string out;
  AlignmentThresholds thresholds;
};

int cmd_fit(const FitOptions& o, std::ostream& out) {
  std::optional<PrincipleSet> given;
  if (!o.principles.empty()) given = PrincipleSet(split_list(o.principles));
  const auto data = ingest_file(o.input, given);
  const std::size_t ref = o.reference.empty() ? 0 : data.principles.resolve(o.reference);
  const auto result = fit(data, ref, o.smoothing);

  write_to(o.out, out, [&](std::ostream& os) {
    csv::write_row(os, {"parameter", "id", "principle", "value"});
    auto emit = [&](const char* name, const std::map<std::string, LogRelativeVector>& m) {
      for (const auto& [id, v] : m) {
        for (std::size_t k = 0; k < v.size(); ++k) {
          csv::write_row(os, {name, id, result.principles.name(k), csv::format_double(v.values()[k])});
        }
      }
    };
    emit("field_mean", result.field_means);
    emit("deviation", result.deviations);
    emit("adjustment", result.adjustments);
  });
  if (result.smoothed_vectors > 0) {
    out << "smoothed " << result.smoothed_vectors << " boundary allocation(s) with c="
        << csv::format_double(result.smoothing_constant) << '\n';
  }
  for (const auto& id : data.baseline_only) out << "baseline only: " << id << '\n';

  if (!o.analyst.empty()) {
    o.thresholds.validate();
    if (o.consumers.empty()) throw Error(Errc::invalid_argument, "--report needs --consumers");
    const auto report = alignment_report(result, o.analyst, o.consumers, o.thresholds);
    out << "report analyst=" << report.analyst_id << " consumers=" << report.consumer_ids.size()
        << (report.group_form ? " (group)" : "") << '\n';
    for (std::size_t k = 0; k < result.principles.size(); ++k) {
      out << result.principles.name(k) << ": B=" << csv::format_double(report.baseline.values()[k])
          << " R=" << csv::format_double(report.residual.values()[k])
          << " D=" << csv::format_double(report.overall.values()[k]) << '\n';
    }
    print_verdict(out, "baseline", report.baseline_verdict);
    print_verdict(out, "overall", report.overall_verdict);
    out << "improved: " << (report.improved ? "true" : "false") << '\n';
  }
  return kExitOk;
}

std::pair<std::string, int> parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::invalid_argument, "--listen expects addr:port");
  const std::string host = text.substr(0, colon);
  int port = -1;
  try {
    port = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
  }
  if (host.empty() || port < 0 || port > 65535) {
    throw Error(Errc::invalid_argument, "--listen expects addr:port, got '" + text + "'");
  }
  return {host, port};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Analyst-consumer alignment toolkit", "align"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a simulation experiment from a JSON config");
  std::string sim_config, sim_out, sim_raw;
  std::optional<Seed> sim_seed;
  std::optional<unsigned> sim_threads;
  simulate->add_option("--config", sim_config, "Experiment config (JSON)")->required();
  simulate->add_option("--out", sim_out, "Summary CSV path (stdout when omitted)");
  simulate->add_option("--raw", sim_raw, "Raw draws CSV path");
  simulate->add_option("--seed", sim_seed, "Override the config seed");
  simulate->add_option("--threads", sim_threads, "Worker threads (0 = all cores)");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Alignment of two party allocation files");
  std::string m_analyst, m_consumer, m_reference;
  AlignmentThresholds m_thresholds;
  double m_smoothing = 0.0;
  metrics->add_option("--analyst", m_analyst, "Analyst allocation CSV")->required();
  metrics->add_option("--consumer", m_consumer, "Consumer allocation CSV")->required();
  metrics->add_option("--epsilon", m_thresholds.epsilon, "Alignment threshold");
  metrics->add_option("--p", m_thresholds.p, "Power-mean exponent for weak alignment");
  metrics->add_option("--reference", m_reference, "Reference principle (name or index)");
  metrics->add_option("--smoothing", m_smoothing, "Boundary smoothing constant");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Estimate the mean model from allocation records");
  FitOptions fo;
  fit_cmd->add_option("--input", fo.input, "Records CSV")->required();
  fit_cmd->add_option("--reference", fo.reference, "Reference principle (name or index)");
  fit_cmd->add_option("--smoothing", fo.smoothing, "Boundary smoothing constant");
  fit_cmd->add_option("--principles", fo.principles, "Comma-separated principle order");
  fit_cmd->add_option("--report", fo.analyst, "Subject to report on as the analyst");
  fit_cmd->add_option("--consumers", fo.consumers, "Subjects acting as consumers")->delimiter(',');
  fit_cmd->add_option("--epsilon", fo.thresholds.epsilon, "Alignment threshold");
  fit_cmd->add_option("--p", fo.thresholds.p, "Power-mean exponent");
  fit_cmd->add_option("--out", fo.out, "Parameter CSV path (stdout when omitted)");

  // props
  auto* props = app.add_subcommand("props", "Run the proposition suite");
  std::optional<Seed> props_seed;
  std::string props_config;
  std::optional<unsigned> props_threads;
  props->add_option("--seed", props_seed, "Root seed");
  props->add_option("--config", props_config, "Optional config overriding suite sizes");
  props->add_option("--threads", props_threads, "Worker threads (0 = all cores)");

  // export-fig
  auto* export_fig = app.add_subcommand("export-fig", "Long-format plot data for allocations");
  std::string ef_input, ef_out, ef_reference;
  double ef_smoothing = kDefaultSmoothing;
  export_fig->add_option("--input", ef_input, "Records CSV")->required();
  export_fig->add_option("--out", ef_out, "Output CSV path (stdout when omitted)");
  export_fig->add_option("--reference", ef_reference, "Reference principle (name or index)");
  export_fig->add_option("--smoothing", ef_smoothing, "Boundary smoothing constant");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the session service");
  std::string data_dir;
  if (const char* env = std::getenv("ALIGN_DATA_DIR")) data_dir = env;
  if (data_dir.empty()) data_dir = "sessions";
  std::string listen = "127.0.0.1:8080";
  serve->add_option("--data-dir", data_dir, "Session directory (default $ALIGN_DATA_DIR)");
  serve->add_option("--listen", listen, "Listen address addr:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitInvalid;
  }

  try {
    if (simulate->parsed()) {
      auto config = load_experiment_config(sim_config);
      if (sim_seed) config.seed = *sim_seed;
      if (sim_threads) config.threads = *sim_threads;
      if (!sim_raw.empty()) config.keep_raw = true;
      config.validate();
      const auto result = run_experiment(config);
      write_to(sim_out, out, [&](std::ostream& os) { write_summary_csv(os, result); });
      if (!sim_raw.empty()) write_to(sim_raw, out, [&](std::ostream& os) { write_raw_csv(os, result); });
      out << "experiment=" << to_string(result.experiment) << " seed=" << result.seed << '\n';
      print_checks(out, result);
      return kExitOk;
    }
    if (metrics->parsed()) {
      return cmd_metrics(m_analyst, m_consumer, m_thresholds, m_reference, m_smoothing, out);
    }
    if (fit_cmd->parsed()) return cmd_fit(fo, out);
    if (props->parsed()) {
      ExperimentConfig config;
      if (!props_config.empty()) config = load_experiment_config(props_config);
      config.experiment = ExperimentKind::propositions;
      if (props_seed) config.seed = *props_seed;
      if (props_threads) config.threads = *props_threads;
      config.validate();
      const auto result = run_propositions(config);
      out << "seed=" << result.seed << '\n';
      print_checks(out, result);
      return result.passed() ? kExitOk : kExitInvalid;
    }
    if (export_fig->parsed()) {
      const auto data = ingest_file(ef_input);
      const std::size_t ref = ef_reference.empty() ? 0 : data.principles.resolve(ef_reference);
      const auto rows = figure_data(data, fit(data, ref, ef_smoothing));
      write_to(ef_out, out, [&](std::ostream& os) { write_figure_csv(os, rows); });
      return kExitOk;
    }
    if (serve->parsed()) {
      const auto [host, port] = parse_listen(listen);
      SessionService service(data_dir);
      const int bound = service.bind(host, port);
      out << "listening on " << host << ':' << bound << " data-dir=" << data_dir << std::endl;
      return service.listen_after_bind() ? kExitOk : kExitIo;
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return e.code() == Errc::io ? kExitIo : kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace align
