// biasaudit: administer value-statement batteries to chat models under
// assigned social identities, quantify ingroup/outgroup bias, and compare
// debiasing strategies. Fully runnable offline against the mock provider.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biasaudit/builtin.hpp"
#include "biasaudit/http_provider.hpp"
#include "biasaudit/report.hpp"
#include "biasaudit/runner.hpp"

namespace {

using namespace biasaudit;

std::vector<std::string> split_csv_list(const std::string& csv) {
  std::vector<std::string> tokens;
  std::stringstream stream(csv);
  std::string token;
  while (std::getline(stream, token, ',')) {
    if (!token.empty()) tokens.push_back(token);
  }
  return tokens;
}

struct SummaryTriple {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

SummaryTriple parse_triple(const std::string& text) {
  const auto parts = split_csv_list(text);
  if (parts.size() != 3) {
    throw Error("expected mean,sd,n but got '" + text + "'");
  }
  SummaryTriple triple;
  triple.mean = std::stod(parts[0]);
  triple.sd = std::stod(parts[1]);
  const long long n = std::stoll(parts[2]);
  if (n < 0) throw Error("sample count must be non-negative in '" + text + "'");
  triple.n = static_cast<std::size_t>(n);
  return triple;
}

ProbeMode parse_mode(const std::string& mode) {
  return biasaudit::detail::mode_from_string(mode);
}

ReportFormat parse_format(const std::string& format) {
  if (format == "table") return ReportFormat::table_text;
  if (format == "csv") return ReportFormat::csv;
  if (format == "structured") return ReportFormat::structured;
  throw Error("unknown format '" + format + "' (table, csv, structured)");
}

std::string format_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::table_text: return "txt";
    case ReportFormat::csv:        return "csv";
    case ReportFormat::structured: return "json";
  }
  return "txt";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("I/O failure writing '" + path + "'");
}

struct RunArgs {
  std::string battery;
  std::string conditions = "standard";
  int n = 100;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double temperature = 1.0;
  std::string provider;
  std::string record_path;
  std::string mode = "zero_shot";
  std::string format = "table";
  std::string exclude;
  std::string out_prefix = "audit";
  int concurrency = 4;
  int max_attempts = 20;
  bool split_system = false;
  std::string logprob_mapping = "per_token";
  std::string model = "gpt-4o";
  double rps = 0.0;
  bool all_pairs = false;
};

RunManifest build_manifest(const RunArgs& args, const Battery& battery) {
  RunManifest manifest;
  manifest.battery = args.battery;
  manifest.n_per_statement = args.n;
  manifest.seed = args.seed;
  manifest.max_attempts_per_sample = args.max_attempts;
  manifest.concurrency = args.concurrency;
  manifest.layout =
      args.split_system ? MessageLayout::split_system : MessageLayout::single_system;
  if (args.logprob_mapping == "per_token") {
    manifest.logprob_mapping = LogprobMapping::per_token;
  } else if (args.logprob_mapping == "post_average_linear") {
    manifest.logprob_mapping = LogprobMapping::post_average_linear;
  } else {
    throw Error("unknown logprob mapping '" + args.logprob_mapping + "'");
  }
  manifest.exclude = split_csv_list(args.exclude);

  const ProbeMode mode = parse_mode(args.mode);
  if (args.conditions == "standard") {
    manifest.conditions = standard_conditions(battery, mode, args.temperature);
  } else {
    for (const auto& token : split_csv_list(args.conditions)) {
      manifest.conditions.push_back(
          condition_from_token(battery, token, mode, args.temperature));
    }
  }

  const std::string& selector = args.provider;
  if (selector == "live") {
    manifest.provider = {ProviderChoice::Kind::live, ""};
  } else if (selector.rfind("mock:", 0) == 0) {
    manifest.provider = {ProviderChoice::Kind::mock, selector.substr(5)};
  } else if (selector.rfind("replay:", 0) == 0) {
    manifest.provider = {ProviderChoice::Kind::replay, selector.substr(7)};
  } else {
    throw Error("provider must be live, mock:<profile>, or replay:<cassette>, got '" +
                selector + "'");
  }
  if (!args.record_path.empty()) {
    if (manifest.provider.kind == ProviderChoice::Kind::replay) {
      throw Error("--record is only valid with the live or mock provider");
    }
    manifest.record_path = args.record_path;
  }
  if (manifest.provider.kind == ProviderChoice::Kind::mock && !args.seed_given) {
    throw Error("--seed is required for mock runs (no wall-clock seeding)");
  }
  validate_manifest(manifest);
  return manifest;
}

int cmd_run(const RunArgs& args) {
  Battery battery = resolve_battery(args.battery);
  RunManifest manifest = build_manifest(args, battery);

  std::shared_ptr<Provider> provider;
  if (manifest.provider.kind == ProviderChoice::Kind::live) {
    LiveConfig config;
    config.model = args.model;
    config.requests_per_second = args.rps;
    provider = make_live_provider(config);
  } else {
    provider = make_offline_provider(manifest);
  }
  if (manifest.record_path) {
    provider = std::shared_ptr<Provider>(record_wrap(
        provider, *manifest.record_path, {battery.name, manifest_digest(manifest)}));
  }

  RunResult run = run_audit(manifest, battery, *provider);
  const std::string results_path = args.out_prefix + ".results.jsonl";
  save_run_result(run, results_path);

  ReportOptions options;
  options.all_pairs = args.all_pairs;
  BiasReport report = build_bias_report(run, battery, options);
  const ReportFormat format = parse_format(args.format);
  const std::string rendered = emit(report, format);
  const std::string report_path =
      args.out_prefix + ".report." + format_extension(format);
  write_file(report_path, rendered);

  std::cout << rendered;
  std::cerr << "wrote " << results_path << " and " << report_path << " ("
            << run.records.size() << " records, " << run.wall_ms << " ms)\n";
  return 0;
}

int cmd_report(const std::string& results_path, const std::string& format_name,
               bool all_pairs, const std::string& out_path) {
  RunResult run = load_run_result(results_path);
  Battery battery = resolve_battery(run.manifest.battery);
  ReportOptions options;
  options.all_pairs = all_pairs;
  BiasReport report = build_bias_report(run, battery, options);
  const std::string rendered = emit(report, parse_format(format_name));
  if (!out_path.empty()) write_file(out_path, rendered);
  std::cout << rendered;
  return 0;
}

int cmd_validate(const std::string& path) {
  Battery battery = load_battery(path);
  std::cout << "battery '" << battery.name << "' OK: " << battery.statements.size()
            << " statements (" << battery.group_a() << "/" << battery.group_b()
            << "), " << battery.identities.size() << " identities, "
            << battery.debias.size() << " debias instructions\n";
  return 0;
}

int cmd_stats(const std::string& a_text, const std::string& b_text,
              std::vector<double> bias_means) {
  if (!a_text.empty() || !b_text.empty()) {
    if (a_text.empty() || b_text.empty()) {
      throw Error("stats needs both --a and --b (each mean,sd,n)");
    }
    const SummaryTriple a = parse_triple(a_text);
    const SummaryTriple b = parse_triple(b_text);
    const WelchResult result = welch_test(a.mean, a.sd, a.n, b.mean, b.sd, b.n);
    std::printf("Welch t(%.2f) = %.2f, p %s, Cohen's d = %.2f\n", result.df, result.t,
                format_p(result.p_two_sided).c_str(), result.cohen_d);
    std::printf("t=%.6f df=%.6f p=%.6g d=%.6f\n", result.t, result.df,
                result.p_two_sided, result.cohen_d);
  }
  if (!bias_means.empty()) {
    if (bias_means.size() != 4) {
      throw Error("--bias needs base_in,base_out,cond_in,cond_out");
    }
    const double base_in = bias_means[0];
    const double base_out = bias_means[1];
    const double cond_in = bias_means[2];
    const double cond_out = bias_means[3];
    const auto bias = intergroup_bias({"baseline", "in", 1, base_in, 0.0},
                                      {"baseline", "out", 1, base_out, 0.0},
                                      {"conditional", "in", 1, cond_in, 0.0},
                                      {"conditional", "out", 1, cond_out, 0.0},
                                      "conditional");
    std::printf("b_in=%+.4f b_out=%+.4f\n", bias.b_in, bias.b_out);
    std::printf("delta_baseline=%.4f delta_conditional=%.4f\n",
                std::abs(base_in - base_out), std::abs(cond_in - cond_out));
  }
  if (a_text.empty() && b_text.empty() && bias_means.empty()) {
    throw Error("stats needs --a/--b summaries or --bias means");
  }
  return 0;
}

int cmd_export(const std::string& kind, const std::string& name,
               const std::string& out_path) {
  std::string content;
  if (kind == "battery") {
    content = serialize_battery(builtin_battery(name)).dump(2) + "\n";
  } else if (kind == "profile") {
    content = serialize_mock_profile(builtin_mock_profile(name)).dump(2) + "\n";
  } else {
    throw Error("export kind must be 'battery' or 'profile'");
  }
  if (out_path.empty()) {
    std::cout << content;
  } else {
    write_file(out_path, content);
    std::cerr << "wrote " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identity-conditioned value audits for chat models"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "execute an audit and write results + report");
  run->add_option("--battery", run_args.battery, "bundled battery name or file path")
      ->required();
  run->add_option("--conditions", run_args.conditions,
                  "'standard' or comma list of condition tokens "
                  "(baseline, identity id, debias id, id+id)");
  run->add_option("--n", run_args.n, "valid samples per statement");
  auto* seed_opt = run->add_option("--seed", run_args.seed, "RNG seed (mock/survey)");
  run->add_option("--temperature", run_args.temperature, "sampling temperature");
  run->add_option("--provider", run_args.provider,
                  "live | mock:<profile path or bundled name> | replay:<cassette>")
      ->required();
  run->add_option("--record", run_args.record_path, "record probes to this cassette");
  run->add_option("--mode", run_args.mode,
                  "zero_shot | survey | explain | numeric_logprob");
  run->add_option("--format", run_args.format, "table | csv | structured");
  run->add_option("--exclude", run_args.exclude, "comma list of statement ids to skip");
  run->add_option("--out", run_args.out_prefix, "output file prefix");
  run->add_option("--concurrency", run_args.concurrency, "max in-flight probes");
  run->add_option("--max-attempts", run_args.max_attempts,
                  "attempts per sample before giving up");
  run->add_flag("--split-system", run_args.split_system,
                "send identity/debias/scale as separate system messages");
  run->add_option("--logprob-mapping", run_args.logprob_mapping,
                  "per_token | post_average_linear");
  run->add_option("--model", run_args.model, "model id for the live provider");
  run->add_option("--rps", run_args.rps, "requests-per-second cap (live)");
  run->add_flag("--all-pairs", run_args.all_pairs, "Welch tests for all condition pairs");

  std::string report_results;
  std::string report_format = "table";
  std::string report_out;
  bool report_all_pairs = false;
  auto* report = app.add_subcommand("report", "rebuild a report from saved results");
  report->add_option("results", report_results, "results file from a run")->required();
  report->add_option("--format", report_format, "table | csv | structured");
  report->add_option("--out", report_out, "also write the report here");
  report->add_flag("--all-pairs", report_all_pairs,
                   "Welch tests for all condition pairs");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a battery file");
  validate->add_option("battery", validate_path, "battery file path")->required();

  std::string stats_a;
  std::string stats_b;
  std::vector<double> stats_bias;
  auto* stats = app.add_subcommand(
      "stats", "Welch test / intergroup bias from summary numbers");
  stats->add_option("--a", stats_a, "first sample as mean,sd,n");
  stats->add_option("--b", stats_b, "second sample as mean,sd,n");
  stats->add_option("--bias", stats_bias,
                    "base_in,base_out,cond_in,cond_out means")
      ->delimiter(',');

  std::string export_kind;
  std::string export_name;
  std::string export_out;
  auto* export_cmd =
      app.add_subcommand("export", "write a bundled battery or mock profile");
  export_cmd->add_option("kind", export_kind, "battery | profile")->required();
  export_cmd->add_option("name", export_name, "bundled asset name")->required();
  export_cmd->add_option("--out", export_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
    if (run->parsed()) {
      run_args.seed_given = seed_opt->count() > 0;
      return cmd_run(run_args);
    }
    if (report->parsed()) {
      return cmd_report(report_results, report_format, report_all_pairs, report_out);
    }
    if (validate->parsed()) return cmd_validate(validate_path);
    if (stats->parsed()) return cmd_stats(stats_a, stats_b, stats_bias);
    if (export_cmd->parsed()) return cmd_export(export_kind, export_name, export_out);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
