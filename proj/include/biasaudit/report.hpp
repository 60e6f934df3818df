#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "biasaudit/battery.hpp"
#include "biasaudit/errors.hpp"
#include "biasaudit/metrics.hpp"
#include "biasaudit/runner.hpp"

namespace biasaudit {

// ---------------------------------------------------------------------------
// Aggregated audit report: summary tables, intergroup biases, misalignment
// deltas, statistical tests, response histograms, refusal statistics.
// ---------------------------------------------------------------------------

struct HistogramRow {
  std::string condition;
  std::string group;
  std::array<long, 6> counts{};  // per scale level, lowest to highest

  friend bool operator==(const HistogramRow&, const HistogramRow&) = default;
};

struct TestRow {
  std::string label;
  ScoreSummary a;
  ScoreSummary b;
  WelchResult result;

  friend bool operator==(const TestRow&, const TestRow&) = default;
};

struct RefusalRow {
  std::string condition;
  std::string statement;
  int count = 0;

  friend bool operator==(const RefusalRow&, const RefusalRow&) = default;
};

struct BiasReport {
  std::string battery;
  std::string baseline_condition;
  std::vector<std::string> conditions;  // manifest order
  std::vector<ScoreSummary> summaries;  // condition-major, group order as battery
  std::vector<IntergroupBias> intergroup;
  std::vector<std::pair<std::string, double>> deltas;  // per condition
  std::vector<TestRow> tests;
  std::vector<HistogramRow> histograms;
  std::vector<RefusalRow> refusals;

  const ScoreSummary* find_summary(const std::string& condition,
                                   const std::string& group) const {
    for (const auto& summary : summaries) {
      if (summary.condition == condition && summary.group == group) return &summary;
    }
    return nullptr;
  }

  std::optional<double> find_delta(const std::string& condition) const {
    for (const auto& [id, delta] : deltas) {
      if (id == condition) return delta;
    }
    return std::nullopt;
  }

  friend bool operator==(const BiasReport&, const BiasReport&) = default;
};

namespace detail {

/// Nearest scale level for histogram bucketing; ties resolve to the lower
/// level. Label-sourced scores land exactly.
inline std::size_t nearest_level_index(double value) {
  std::size_t best = 0;
  double best_distance = std::abs(value - likert_base_value(kLikertLevels[0]));
  for (std::size_t i = 1; i < 6; ++i) {
    const double distance = std::abs(value - likert_base_value(kLikertLevels[i]));
    if (distance < best_distance) {
      best = i;
      best_distance = distance;
    }
  }
  return best;
}

}  // namespace detail

struct ReportOptions {
  bool all_pairs = false;  // Welch tests for every condition pair per group
};

/// Aggregate a complete run into a report. Deterministic: record order is
/// immaterial, wall-clock metadata is ignored.
inline BiasReport build_bias_report(const RunResult& run, const Battery& battery,
                                    const ReportOptions& options = {}) {
  verify_complete(run, battery);

  const Condition* baseline = nullptr;
  for (const auto& condition : run.manifest.conditions) {
    if (condition.id == "baseline") {
      baseline = &condition;
      break;
    }
  }
  if (baseline == nullptr) {
    for (const auto& condition : run.manifest.conditions) {
      if (!condition.identity && !condition.debias) {
        baseline = &condition;
        break;
      }
    }
  }
  if (baseline == nullptr) {
    throw Error("baseline required for intergroup bias");
  }

  BiasReport report;
  report.battery = battery.name;
  report.baseline_condition = baseline->id;

  // Pool encoded scores per (condition, group).
  std::map<std::pair<std::string, std::string>, std::vector<double>> pooled;
  std::map<std::pair<std::string, std::string>, std::array<long, 6>> histogram;
  for (const auto& record : run.records) {
    if (!record.score) continue;
    const Statement* statement = battery.find_statement(record.statement);
    if (statement == nullptr) {
      throw Error("record references unknown statement '" + record.statement + "'");
    }
    const auto key = std::make_pair(record.condition, statement->group);
    pooled[key].push_back(record.score->value);
    histogram[key][detail::nearest_level_index(record.score->value)] += 1;
  }

  // Canonical accumulation order: float summation is not associative, and
  // the summaries must not depend on how records were interleaved.
  for (auto& [key, scores] : pooled) std::sort(scores.begin(), scores.end());

  const std::array<std::string, 2> groups{battery.group_a(), battery.group_b()};
  for (const auto& condition : run.manifest.conditions) {
    report.conditions.push_back(condition.id);
    for (const auto& group : groups) {
      auto it = pooled.find({condition.id, group});
      if (it == pooled.end()) {
        throw Error("no scores for condition '" + condition.id + "' group '" + group +
                    "'");
      }
      report.summaries.push_back(beta_summary(it->second, condition.id, group));
      HistogramRow row;
      row.condition = condition.id;
      row.group = group;
      row.counts = histogram[{condition.id, group}];
      report.histograms.push_back(std::move(row));
    }
  }

  for (const auto& condition : run.manifest.conditions) {
    const ScoreSummary& a = *report.find_summary(condition.id, groups[0]);
    const ScoreSummary& b = *report.find_summary(condition.id, groups[1]);
    report.deltas.emplace_back(condition.id, misalignment_delta(a, b));
  }

  const ScoreSummary& baseline_a = *report.find_summary(baseline->id, groups[0]);
  const ScoreSummary& baseline_b = *report.find_summary(baseline->id, groups[1]);

  for (const auto& condition : run.manifest.conditions) {
    if (!condition.identity) continue;
    const auto& alignment = condition.identity->alignment;
    if (alignment != Alignment::group_a && alignment != Alignment::group_b) continue;
    const std::string ingroup = battery.aligned_group(*condition.identity);
    const std::string outgroup = ingroup == groups[0] ? groups[1] : groups[0];
    report.intergroup.push_back(intergroup_bias(
        *report.find_summary(baseline->id, ingroup),
        *report.find_summary(baseline->id, outgroup),
        *report.find_summary(condition.id, ingroup),
        *report.find_summary(condition.id, outgroup), condition.id));
  }

  // Baseline group gap, then baseline-vs-conditional per group for each
  // identity condition (the comparisons the study tables report).
  if (baseline_a.n >= 2 && baseline_b.n >= 2) {
    report.tests.push_back({baseline->id + ": " + groups[0] + " vs " + groups[1],
                            baseline_a, baseline_b, welch_test(baseline_a, baseline_b)});
  }
  if (options.all_pairs) {
    for (const auto& group : groups) {
      for (std::size_t i = 0; i < report.conditions.size(); ++i) {
        for (std::size_t j = i + 1; j < report.conditions.size(); ++j) {
          const ScoreSummary& a = *report.find_summary(report.conditions[i], group);
          const ScoreSummary& b = *report.find_summary(report.conditions[j], group);
          if (a.n < 2 || b.n < 2) continue;
          report.tests.push_back({group + ": " + report.conditions[i] + " vs " +
                                      report.conditions[j],
                                  a, b, welch_test(a, b)});
        }
      }
    }
  } else {
    for (const auto& bias : report.intergroup) {
      for (const auto& group : groups) {
        const ScoreSummary& base = *report.find_summary(baseline->id, group);
        const ScoreSummary& cond = *report.find_summary(bias.identity, group);
        if (base.n < 2 || cond.n < 2) continue;
        report.tests.push_back({group + ": " + baseline->id + " vs " + bias.identity,
                                base, cond, welch_test(base, cond)});
      }
    }
  }

  for (const auto& [key, count] : run.refusal_counts) {
    report.refusals.push_back({key.first, key.second, count});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Debias strategy comparison.
// ---------------------------------------------------------------------------

struct DebiasComparison {
  std::vector<std::pair<std::string, double>> rows;  // baseline row first
  std::size_t min_index = 0;

  friend bool operator==(const DebiasComparison&, const DebiasComparison&) = default;
};

/// Compare misalignment deltas across debias strategies. Each entry names a
/// condition inside its report; the baseline row is prepended from the
/// first report.
inline DebiasComparison compare_debias(
    const std::vector<std::pair<std::string, const BiasReport*>>& keyed) {
  if (keyed.empty()) throw Error("compare_debias: no reports");
  const BiasReport& first = *keyed.front().second;
  DebiasComparison comparison;
  auto baseline_delta = first.find_delta(first.baseline_condition);
  if (!baseline_delta) {
    throw Error("compare_debias: first report lacks its baseline delta");
  }
  comparison.rows.emplace_back(first.baseline_condition, *baseline_delta);

  for (const auto& [strategy, report] : keyed) {
    if (report->battery != first.battery) {
      throw Error("compare_debias: battery mismatch ('" + report->battery + "' vs '" +
                  first.battery + "')");
    }
    if (strategy == first.baseline_condition) continue;
    auto delta = report->find_delta(strategy);
    if (!delta) {
      throw Error("compare_debias: report has no condition '" + strategy + "'");
    }
    comparison.rows.emplace_back(strategy, *delta);
  }

  for (std::size_t i = 1; i < comparison.rows.size(); ++i) {
    if (comparison.rows[i].second < comparison.rows[comparison.min_index].second) {
      comparison.min_index = i;
    }
  }
  return comparison;
}

inline DebiasComparison compare_debias(const BiasReport& report,
                                       const std::vector<std::string>& strategies) {
  std::vector<std::pair<std::string, const BiasReport*>> keyed;
  keyed.reserve(strategies.size());
  for (const auto& strategy : strategies) keyed.emplace_back(strategy, &report);
  return compare_debias(keyed);
}

// ---------------------------------------------------------------------------
// Structured (JSON) emit/import. Full precision, deterministic key order.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json summary_to_json(const ScoreSummary& summary) {
  return {{"condition", summary.condition},
          {"group", summary.group},
          {"n", summary.n},
          {"mean", summary.mean},
          {"sd", summary.sd}};
}

inline ScoreSummary summary_from_json(const nlohmann::json& doc) {
  return {doc.at("condition").get<std::string>(), doc.at("group").get<std::string>(),
          doc.at("n").get<std::size_t>(), doc.at("mean").get<double>(),
          doc.at("sd").get<double>()};
}

}  // namespace detail

inline nlohmann::json report_to_json(const BiasReport& report) {
  nlohmann::json doc;
  doc["battery"] = report.battery;
  doc["baseline_condition"] = report.baseline_condition;
  doc["conditions"] = report.conditions;
  doc["summaries"] = nlohmann::json::array();
  for (const auto& summary : report.summaries) {
    doc["summaries"].push_back(detail::summary_to_json(summary));
  }
  doc["intergroup"] = nlohmann::json::array();
  for (const auto& bias : report.intergroup) {
    doc["intergroup"].push_back({{"identity", bias.identity},
                                 {"ingroup", bias.ingroup},
                                 {"b_in", bias.b_in},
                                 {"b_out", bias.b_out}});
  }
  doc["deltas"] = nlohmann::json::array();
  for (const auto& [condition, delta] : report.deltas) {
    doc["deltas"].push_back({{"condition", condition}, {"delta", delta}});
  }
  doc["tests"] = nlohmann::json::array();
  for (const auto& row : report.tests) {
    doc["tests"].push_back({{"label", row.label},
                            {"a", detail::summary_to_json(row.a)},
                            {"b", detail::summary_to_json(row.b)},
                            {"t", row.result.t},
                            {"df", row.result.df},
                            {"p", row.result.p_two_sided},
                            {"d", row.result.cohen_d},
                            {"degenerate", row.result.degenerate}});
  }
  doc["histograms"] = nlohmann::json::array();
  for (const auto& row : report.histograms) {
    doc["histograms"].push_back(
        {{"condition", row.condition}, {"group", row.group}, {"counts", row.counts}});
  }
  doc["refusals"] = nlohmann::json::array();
  for (const auto& row : report.refusals) {
    doc["refusals"].push_back({{"condition", row.condition},
                               {"statement", row.statement},
                               {"count", row.count}});
  }
  return doc;
}

inline BiasReport report_from_json(const nlohmann::json& doc) {
  BiasReport report;
  report.battery = doc.at("battery").get<std::string>();
  report.baseline_condition = doc.at("baseline_condition").get<std::string>();
  report.conditions = doc.at("conditions").get<std::vector<std::string>>();
  for (const auto& entry : doc.at("summaries")) {
    report.summaries.push_back(detail::summary_from_json(entry));
  }
  for (const auto& entry : doc.at("intergroup")) {
    report.intergroup.push_back({entry.at("identity").get<std::string>(),
                                 entry.at("ingroup").get<std::string>(),
                                 entry.at("b_in").get<double>(),
                                 entry.at("b_out").get<double>()});
  }
  for (const auto& entry : doc.at("deltas")) {
    report.deltas.emplace_back(entry.at("condition").get<std::string>(),
                               entry.at("delta").get<double>());
  }
  for (const auto& entry : doc.at("tests")) {
    TestRow row;
    row.label = entry.at("label").get<std::string>();
    row.a = detail::summary_from_json(entry.at("a"));
    row.b = detail::summary_from_json(entry.at("b"));
    row.result.t = entry.at("t").get<double>();
    row.result.df = entry.at("df").get<double>();
    row.result.p_two_sided = entry.at("p").get<double>();
    row.result.cohen_d = entry.at("d").get<double>();
    row.result.degenerate = entry.value("degenerate", false);
    report.tests.push_back(std::move(row));
  }
  for (const auto& entry : doc.at("histograms")) {
    HistogramRow row;
    row.condition = entry.at("condition").get<std::string>();
    row.group = entry.at("group").get<std::string>();
    const auto& counts = entry.at("counts");
    for (std::size_t i = 0; i < 6; ++i) row.counts[i] = counts.at(i).get<long>();
    report.histograms.push_back(std::move(row));
  }
  for (const auto& entry : doc.at("refusals")) {
    report.refusals.push_back({entry.at("condition").get<std::string>(),
                               entry.at("statement").get<std::string>(),
                               entry.at("count").get<int>()});
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV emit/import. One row per (kind, condition, group, key, value); full
// precision so re-imported summaries match to 1e-9 and better.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += "\"\"";
    else quoted += c;
  }
  quoted += "\"";
  return quoted;
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

inline std::string full_precision(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace detail

inline std::string report_to_csv(const BiasReport& report) {
  std::ostringstream out;
  out << "kind,condition,group,key,value\n";
  auto row = [&](const std::string& kind, const std::string& condition,
                 const std::string& group, const std::string& key,
                 const std::string& value) {
    out << detail::csv_quote(kind) << ',' << detail::csv_quote(condition) << ','
        << detail::csv_quote(group) << ',' << detail::csv_quote(key) << ','
        << detail::csv_quote(value) << '\n';
  };
  row("meta", "", "", "battery", report.battery);
  row("meta", "", "", "baseline_condition", report.baseline_condition);
  for (const auto& condition : report.conditions) {
    row("condition", condition, "", "", "");
  }
  for (const auto& summary : report.summaries) {
    row("summary", summary.condition, summary.group, "n", std::to_string(summary.n));
    row("summary", summary.condition, summary.group, "mean",
        detail::full_precision(summary.mean));
    row("summary", summary.condition, summary.group, "sd",
        detail::full_precision(summary.sd));
  }
  for (const auto& bias : report.intergroup) {
    row("intergroup", bias.identity, bias.ingroup, "b_in",
        detail::full_precision(bias.b_in));
    row("intergroup", bias.identity, bias.ingroup, "b_out",
        detail::full_precision(bias.b_out));
  }
  for (const auto& [condition, delta] : report.deltas) {
    row("delta", condition, "", "delta", detail::full_precision(delta));
  }
  for (const auto& test : report.tests) {
    row("test", test.label, "", "t", detail::full_precision(test.result.t));
    row("test", test.label, "", "df", detail::full_precision(test.result.df));
    row("test", test.label, "", "p", detail::full_precision(test.result.p_two_sided));
    row("test", test.label, "", "d", detail::full_precision(test.result.cohen_d));
  }
  for (const auto& histogram : report.histograms) {
    for (std::size_t i = 0; i < 6; ++i) {
      row("histogram", histogram.condition, histogram.group,
          std::to_string(likert_base_value(kLikertLevels[i])),
          std::to_string(histogram.counts[i]));
    }
  }
  for (const auto& refusal : report.refusals) {
    row("refusal", refusal.condition, "", refusal.statement,
        std::to_string(refusal.count));
  }
  return out.str();
}

/// Rebuild the summary-level content of a CSV export (summaries, intergroup,
/// deltas, histograms, refusals). Test rows are derivable and not imported.
inline BiasReport report_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  BiasReport report;
  std::map<std::pair<std::string, std::string>, ScoreSummary> summaries;
  std::map<std::pair<std::string, std::string>, HistogramRow> histograms;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      continue;  // column header
    }
    auto fields = detail::csv_split(line);
    if (fields.size() != 5) throw ParseError("CSV row with " +
                                             std::to_string(fields.size()) +
                                             " fields, expected 5");
    const auto& kind = fields[0];
    const auto& condition = fields[1];
    const auto& group = fields[2];
    const auto& key = fields[3];
    const auto& value = fields[4];
    if (kind == "meta") {
      if (key == "battery") report.battery = value;
      if (key == "baseline_condition") report.baseline_condition = value;
    } else if (kind == "condition") {
      report.conditions.push_back(condition);
    } else if (kind == "summary") {
      auto& summary = summaries[{condition, group}];
      summary.condition = condition;
      summary.group = group;
      if (key == "n") summary.n = static_cast<std::size_t>(std::stoull(value));
      if (key == "mean") summary.mean = std::stod(value);
      if (key == "sd") summary.sd = std::stod(value);
    } else if (kind == "intergroup") {
      IntergroupBias* bias = nullptr;
      for (auto& existing : report.intergroup) {
        if (existing.identity == condition) bias = &existing;
      }
      if (bias == nullptr) {
        report.intergroup.push_back({condition, group, 0.0, 0.0});
        bias = &report.intergroup.back();
      }
      if (key == "b_in") bias->b_in = std::stod(value);
      if (key == "b_out") bias->b_out = std::stod(value);
    } else if (kind == "delta") {
      report.deltas.emplace_back(condition, std::stod(value));
    } else if (kind == "histogram") {
      auto& histogram = histograms[{condition, group}];
      histogram.condition = condition;
      histogram.group = group;
      for (std::size_t i = 0; i < 6; ++i) {
        if (key == std::to_string(likert_base_value(kLikertLevels[i]))) {
          histogram.counts[i] = std::stol(value);
        }
      }
    } else if (kind == "refusal") {
      report.refusals.push_back({condition, key, std::stoi(value)});
    } else if (kind != "test") {
      throw ParseError("CSV row with unknown kind '" + kind + "'");
    }
  }
  // Preserve condition-major order.
  for (const auto& condition : report.conditions) {
    for (const auto& [key, summary] : summaries) {
      if (key.first == condition) report.summaries.push_back(summary);
    }
    for (const auto& [key, histogram] : histograms) {
      if (key.first == condition) report.histograms.push_back(histogram);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Human-readable table rendering (two-decimal display convention).
// ---------------------------------------------------------------------------

inline std::string report_to_table_text(const BiasReport& report) {
  std::ostringstream out;
  char buf[160];
  out << "battery: " << report.battery << "\n\n";

  out << "== group alignment (beta) ==\n";
  std::snprintf(buf, sizeof(buf), "%-24s %-10s %6s %8s %8s %8s\n", "condition", "group",
                "n", "mean", "sd", "delta");
  out << buf;
  for (const auto& condition : report.conditions) {
    bool first_row = true;
    for (const auto& summary : report.summaries) {
      if (summary.condition != condition) continue;
      if (first_row) {
        const auto delta = report.find_delta(condition);
        std::snprintf(buf, sizeof(buf), "%-24s %-10s %6zu %8.2f %8.2f %8.2f\n",
                      condition.c_str(), summary.group.c_str(), summary.n, summary.mean,
                      summary.sd, delta.value_or(0.0));
      } else {
        std::snprintf(buf, sizeof(buf), "%-24s %-10s %6zu %8.2f %8.2f %8s\n", "",
                      summary.group.c_str(), summary.n, summary.mean, summary.sd, "");
      }
      out << buf;
      first_row = false;
    }
  }

  if (!report.intergroup.empty()) {
    out << "\n== intergroup bias (vs " << report.baseline_condition << ") ==\n";
    std::snprintf(buf, sizeof(buf), "%-24s %-10s %8s %8s\n", "identity", "ingroup",
                  "b_in", "b_out");
    out << buf;
    for (const auto& bias : report.intergroup) {
      std::snprintf(buf, sizeof(buf), "%-24s %-10s %+8.2f %+8.2f\n",
                    bias.identity.c_str(), bias.ingroup.c_str(), bias.b_in, bias.b_out);
      out << buf;
    }
  }

  if (!report.tests.empty()) {
    out << "\n== Welch tests ==\n";
    std::snprintf(buf, sizeof(buf), "%-36s %9s %9s %10s %8s\n", "comparison", "t", "df",
                  "p", "d");
    out << buf;
    for (const auto& test : report.tests) {
      std::snprintf(buf, sizeof(buf), "%-36s %9.2f %9.2f %10s %8.2f\n",
                    test.label.c_str(), test.result.t, test.result.df,
                    format_p(test.result.p_two_sided).c_str(), test.result.cohen_d);
      out << buf;
    }
  }

  out << "\n== response histograms ==\n";
  std::snprintf(buf, sizeof(buf), "%-24s %-10s %6s %6s %6s %6s %6s %6s\n", "condition",
                "group", "-3", "-2", "-1", "+1", "+2", "+3");
  out << buf;
  for (const auto& histogram : report.histograms) {
    std::snprintf(buf, sizeof(buf), "%-24s %-10s %6ld %6ld %6ld %6ld %6ld %6ld\n",
                  histogram.condition.c_str(), histogram.group.c_str(),
                  histogram.counts[0], histogram.counts[1], histogram.counts[2],
                  histogram.counts[3], histogram.counts[4], histogram.counts[5]);
    out << buf;
  }

  if (!report.refusals.empty()) {
    out << "\n== refusals (resampled) ==\n";
    std::snprintf(buf, sizeof(buf), "%-24s %-12s %6s\n", "condition", "statement",
                  "count");
    out << buf;
    for (const auto& refusal : report.refusals) {
      std::snprintf(buf, sizeof(buf), "%-24s %-12s %6d\n", refusal.condition.c_str(),
                    refusal.statement.c_str(), refusal.count);
      out << buf;
    }
  }
  return out.str();
}

inline std::string render_debias_comparison(const DebiasComparison& comparison) {
  std::ostringstream out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-24s %8s\n", "strategy", "delta");
  out << buf;
  for (std::size_t i = 0; i < comparison.rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%-24s %8.2f%s\n", comparison.rows[i].first.c_str(),
                  comparison.rows[i].second,
                  i == comparison.min_index ? "  <- min" : "");
    out << buf;
  }
  return out.str();
}

enum class ReportFormat { table_text, csv, structured };

inline std::string emit(const BiasReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::table_text: return report_to_table_text(report);
    case ReportFormat::csv:        return report_to_csv(report);
    case ReportFormat::structured: return report_to_json(report).dump(2) + "\n";
  }
  return {};
}

}  // namespace biasaudit
