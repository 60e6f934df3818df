// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Runs entirely offline (mock provider).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "biasaudit/builtin.hpp"
#include "biasaudit/detail/rng.hpp"
#include "biasaudit/encoding.hpp"
#include "biasaudit/metrics.hpp"
#include "biasaudit/report.hpp"
#include "biasaudit/runner.hpp"

using namespace biasaudit;

namespace {

int failed_criteria = 0;

struct Criterion {
  explicit Criterion(std::string label) : name(std::move(label)) {}

  std::string name;
  bool ok = true;
  std::vector<std::string> failures;

  void expect(bool condition, const std::string& detail) {
    if (!condition) {
      ok = false;
      failures.push_back(detail);
    }
  }

  void expect_near(double actual, double expected, double tolerance,
                   const std::string& label) {
    if (!(std::abs(actual - expected) <= tolerance)) {
      ok = false;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s: got %.6f, want %.6f +/- %.4g",
                    label.c_str(), actual, expected, tolerance);
      failures.push_back(buf);
    }
  }

  void finish() {
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", name.c_str());
    for (const auto& failure : failures) {
      std::printf("    %s\n", failure.c_str());
    }
    if (!ok) ++failed_criteria;
  }
};

ScoreSummary mean_only(double mean, const std::string& condition,
                       const std::string& group) {
  return {condition, group, 600, mean, 0.0};
}

// --------------------------------------------------------------------------
// 1. Intergroup-bias formula reproduction from reference summary means.
// --------------------------------------------------------------------------
void criterion_1() {
  Criterion c("criterion 1: intergroup bias formula reproduction (+/-0.005)");

  struct Case {
    const char* label;
    double base_in, base_out, cond_in, cond_out;
    double want_in, want_out;
  };
  // (baseline ingroup, baseline outgroup, conditional ingroup, conditional
  // outgroup) means from the reference summary tables, against the printed
  // arrow values.
  const Case cases[] = {
      {"I_Rep", -1.53, 2.43, 0.90, -0.54, +2.43, -2.97},
      {"I_Dem", 2.43, -1.53, 2.84, -2.54, +0.41, -1.02},
      {"I_man", -1.06, -2.58, -1.80, -2.08, -0.74, +0.50},
      {"I_woman", -2.58, -1.06, -2.43, -0.54, +0.15, +0.52},
  };
  for (const auto& test : cases) {
    auto bias = intergroup_bias(mean_only(test.base_in, "baseline", "in"),
                                mean_only(test.base_out, "baseline", "out"),
                                mean_only(test.cond_in, test.label, "in"),
                                mean_only(test.cond_out, test.label, "out"),
                                test.label);
    c.expect_near(bias.b_in, test.want_in, 0.005,
                  std::string("B_In|") + test.label);
    c.expect_near(bias.b_out, test.want_out, 0.005,
                  std::string("B_Out|") + test.label);
  }
  if (!c.ok) {
    c.failures.push_back(
        "note: -1.02 is not derivable from its own two-decimal source means "
        "(-2.54 - (-1.53) = -1.01); the other seven arrows reproduce exactly");
  }
  c.finish();
}

// --------------------------------------------------------------------------
// 2. Welch t / df / Cohen's d reproduction from summary statistics.
// --------------------------------------------------------------------------
void criterion_2() {
  Criterion c("criterion 2: Welch test and effect size reproduction");

  auto political = welch_test(2.43, 0.57, 600, -1.53, 1.67, 600);
  c.expect_near(political.t, 54.86, 0.5, "political baseline t");
  c.expect_near(political.df, 738.36, 3.0, "political baseline df");
  c.expect_near(political.cohen_d, 3.17, 0.01, "political baseline d");
  c.expect(political.p_two_sided < 0.001, "political baseline p < .001");

  auto gender = welch_test(-1.06, 1.59, 500, -2.58, 0.49, 500);
  c.expect_near(gender.t, 20.47, 0.3, "gender baseline t");
  c.expect_near(gender.df, 595.01, 4.0, "gender baseline df");
  c.expect_near(gender.cohen_d, 1.29, 0.01, "gender baseline d");
  c.expect(gender.p_two_sided < 0.001, "gender baseline p < .001");

  struct EffectCase {
    const char* label;
    double m1, s1;
    std::size_t n1;
    double m2, s2;
    std::size_t n2;
    double want_d;
  };
  const EffectCase effects[] = {
      {"d(Rep ingroup shift)", 0.90, 2.02, 600, -1.53, 1.67, 600, 1.31},
      {"d(Dem ingroup shift)", 2.84, 0.38, 600, 2.43, 0.57, 600, 0.84},
      {"d(Dem outgroup shift)", 2.43, 0.57, 600, -0.54, 1.89, 600, 2.12},
      {"d(Rep outgroup shift)", -1.53, 1.67, 600, -2.54, 0.69, 600, 0.80},
      {"d(man ingroup shift)", -1.06, 1.59, 500, -1.80, 0.83, 500, 0.58},
      {"d(woman ingroup shift)", -2.43, 0.52, 500, -2.58, 0.49, 500, 0.29},
      {"d(woman outgroup shift)", -2.08, 0.46, 500, -2.58, 0.49, 500, 1.06},
      {"d(man outgroup shift)", -0.54, 1.69, 500, -1.06, 1.59, 500, 0.32},
  };
  for (const auto& test : effects) {
    auto result = welch_test(test.m1, test.s1, test.n1, test.m2, test.s2, test.n2);
    c.expect_near(result.cohen_d, test.want_d, 0.02, test.label);
    c.expect(result.p_two_sided < 0.001,
             std::string(test.label) + ": p < .001");
  }
  c.finish();
}

// --------------------------------------------------------------------------
// 3. Misalignment deltas from reference means.
// --------------------------------------------------------------------------
void criterion_3() {
  Criterion c("criterion 3: misalignment delta reproduction (+/-0.01)");
  auto delta = [](double a, double b) {
    return misalignment_delta({"c", "A", 1, a, 0.0}, {"c", "B", 1, b, 0.0});
  };
  c.expect_near(delta(2.43, -1.53), 3.96, 0.01, "political baseline delta");
  c.expect_near(delta(-1.06, -2.58), 1.52, 0.01, "gender baseline delta");
  c.expect_near(delta(-0.54, 0.90), 1.44, 0.01, "political I_Rep delta");
  c.expect_near(delta(-1.80, -2.08), 0.28, 0.01, "gender I_man delta");
  c.finish();
}

// --------------------------------------------------------------------------
// 4. End-to-end mock audit calibrated to the reference summary tables.
// --------------------------------------------------------------------------
void criterion_4() {
  Criterion c("criterion 4: end-to-end mock audit (beta +/-0.15, n uniform, <10s)");
  const auto start = std::chrono::steady_clock::now();

  auto battery = builtin_battery("political");
  RunManifest manifest;
  manifest.battery = "political";
  for (const auto& token : {"baseline", "I_Rep", "I_Dem"}) {
    manifest.conditions.push_back(
        condition_from_token(battery, token, ProbeMode::zero_shot, 1.0));
  }
  manifest.n_per_statement = 100;
  manifest.seed = 7;
  manifest.concurrency = 4;
  manifest.provider = {ProviderChoice::Kind::mock, "political_reference"};

  auto provider = make_offline_provider(manifest);
  auto run = run_audit(manifest, battery, *provider);
  auto report = build_bias_report(run, battery);

  // Beta estimates vs the configured distribution means (Monte-Carlo bound
  // at 600 pooled samples).
  const struct {
    const char* condition;
    const char* group;
    double want;
  } targets[] = {
      {"baseline", "Dem", 2.43}, {"baseline", "Rep", -1.53},
      {"I_Rep", "Dem", -0.54},   {"I_Rep", "Rep", 0.90},
      {"I_Dem", "Dem", 2.84},    {"I_Dem", "Rep", -2.54},
  };
  for (const auto& target : targets) {
    const ScoreSummary* summary = report.find_summary(target.condition, target.group);
    c.expect(summary != nullptr, std::string("summary present for ") +
                                     target.condition + "/" + target.group);
    if (summary != nullptr) {
      c.expect_near(summary->mean, target.want, 0.15,
                    std::string("beta ") + target.condition + "/" + target.group);
      c.expect(summary->n == 600, std::string("n=600 for ") + target.condition + "/" +
                                      target.group);
    }
  }

  // Refusal resampling at refusal probability 0.02 keeps exactly 100 valid
  // scores per statement, and some refusals actually occurred.
  for (const auto& condition : manifest.conditions) {
    for (const auto& statement : battery.statements) {
      std::size_t scored = 0;
      for (const auto& record : run.records) {
        if (record.condition == condition.id && record.statement == statement.id &&
            record.score) {
          ++scored;
        }
      }
      if (scored != 100) {
        c.expect(false, "condition " + condition.id + " statement " + statement.id +
                            " has " + std::to_string(scored) + " valid scores");
      }
    }
  }
  int total_refusals = 0;
  for (const auto& [key, count] : run.refusal_counts) total_refusals += count;
  c.expect(total_refusals > 0, "refusals occurred and were resampled");

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(seconds < 10.0,
           "runtime " + std::to_string(seconds) + "s under the 10s budget");
  c.finish();
}

// --------------------------------------------------------------------------
// 5. Log-probability weighted scoring.
// --------------------------------------------------------------------------
void criterion_5() {
  Criterion c("criterion 5: log-prob scoring examples (1e-9) and monotonicity");

  std::vector<TokenLogprob> point{{"6", std::log(1.0)}};
  auto point_score = logprob_score(point);
  c.expect(point_score.has_value(), "point mass scores");
  if (point_score) {
    c.expect_near(point_score->value, 3.0, 1e-9, "point mass on '6'");
  }

  std::vector<TokenLogprob> mixed{
      {"5", std::log(0.6)}, {"6", std::log(0.3)}, {"yes", std::log(0.1)}};
  auto mixed_score = logprob_score(mixed);
  c.expect(mixed_score.has_value(), "mixed mass scores");
  if (mixed_score) {
    c.expect_near(mixed_score->value, 7.0 / 3.0, 1e-9, "mixed mass 0.6/0.3");
  }

  std::vector<TokenLogprob> refusal{{"ok", std::log(0.9)}, {"sure", std::log(0.1)}};
  c.expect(!logprob_score(refusal).has_value(), "no numeric tokens -> refusal");

  // Monotonicity: moving probability mass to a higher digit never lowers
  // the score. 1,000 randomized profiles.
  biasaudit::detail::SplitMix rng(20250810);
  bool monotone = true;
  for (int iteration = 0; iteration < 1000 && monotone; ++iteration) {
    std::vector<double> weight(6);
    double total = 0.0;
    for (double& w : weight) {
      w = rng.next_unit() + 1e-4;
      total += w;
    }
    std::vector<TokenLogprob> entries;
    for (int digit = 0; digit < 6; ++digit) {
      entries.push_back({std::to_string(digit + 1), std::log(weight[digit] / total)});
    }
    const double before = logprob_score(entries)->value;
    auto lo = static_cast<std::size_t>(rng.next_below(5));
    auto hi = lo + 1 + static_cast<std::size_t>(rng.next_below(5 - lo));
    const double moved = weight[lo] * rng.next_unit();
    weight[lo] -= moved;
    weight[hi] += moved;
    for (int digit = 0; digit < 6; ++digit) {
      entries[static_cast<std::size_t>(digit)].logprob =
          std::log(weight[static_cast<std::size_t>(digit)] / total + 1e-300);
    }
    const double after = logprob_score(entries)->value;
    if (after < before - 1e-12) monotone = false;
  }
  c.expect(monotone, "monotone under upward mass moves (1000 profiles)");
  c.finish();
}

// --------------------------------------------------------------------------
// 6. Determinism: cassette record/replay and order-free aggregation.
// --------------------------------------------------------------------------
void criterion_6() {
  Criterion c("criterion 6: record/replay and aggregation determinism");

  auto battery = builtin_battery("gender");
  RunManifest manifest;
  manifest.battery = "gender";
  for (const auto& token : {"baseline", "I_man", "I_woman"}) {
    manifest.conditions.push_back(
        condition_from_token(battery, token, ProbeMode::zero_shot, 1.0));
  }
  manifest.n_per_statement = 20;
  manifest.seed = 99;
  manifest.concurrency = 4;
  manifest.provider = {ProviderChoice::Kind::mock, "gender_reference"};

  const auto cassette_path =
      (std::filesystem::temp_directory_path() / "biasaudit_acceptance_tape.jsonl")
          .string();
  auto recorder = record_wrap(make_offline_provider(manifest), cassette_path,
                              {battery.name, manifest_digest(manifest)});
  auto recorded_run = run_audit(manifest, battery, *recorder);
  auto recorded_report = emit(build_bias_report(recorded_run, battery),
                              ReportFormat::structured);

  RunManifest replay_manifest = manifest;
  replay_manifest.provider = {ProviderChoice::Kind::replay, cassette_path};
  auto replayer = make_offline_provider(replay_manifest);
  auto replayed_run = run_audit(replay_manifest, battery, *replayer);
  auto replayed_report = emit(build_bias_report(replayed_run, battery),
                              ReportFormat::structured);
  c.expect(recorded_report == replayed_report,
           "replayed structured report is byte-identical");

  // Aggregation is order-free: reversing and interleaving records changes
  // nothing.
  auto shuffled_run = recorded_run;
  biasaudit::detail::SplitMix rng(4242);
  for (std::size_t i = shuffled_run.records.size(); i > 1; --i) {
    std::swap(shuffled_run.records[i - 1],
              shuffled_run.records[rng.next_below(i)]);
  }
  auto shuffled_report = emit(build_bias_report(shuffled_run, battery),
                              ReportFormat::structured);
  c.expect(shuffled_report == recorded_report,
           "shuffled-record aggregation equals ordered aggregation");

  std::filesystem::remove(cassette_path);
  c.finish();
}

// --------------------------------------------------------------------------
// 7. Parser properties: round-trips, reverse encoding, collision corpus.
// --------------------------------------------------------------------------
void criterion_7() {
  Criterion c("criterion 7: parser round-trip, reverse encoding, 50-case corpus");

  for (LikertLabel label : kLikertLevels) {
    c.expect(parse_likert(std::string(likert_phrase(label))) == label,
             std::string("round-trip '") + std::string(likert_phrase(label)) + "'");
    c.expect(encode_score(label, true).value == -encode_score(label, false).value,
             std::string("reverse encoding negates '") +
                 std::string(likert_phrase(label)) + "'");
  }

  struct Case {
    const char* text;
    std::optional<LikertLabel> want;
  };
  const Case corpus[] = {
      // Bare labels and casing/punctuation variants.
      {"strongly agree", LikertLabel::strongly_agree},
      {"agree", LikertLabel::agree},
      {"disagree", LikertLabel::disagree},
      {"slightly agree", LikertLabel::slightly_agree},
      {"slightly disagree", LikertLabel::slightly_disagree},
      {"strongly disagree", LikertLabel::strongly_disagree},
      {"Strongly agree.", LikertLabel::strongly_agree},
      {"AGREE!", LikertLabel::agree},
      {"Disagree.", LikertLabel::disagree},
      {"Strongly Agree", LikertLabel::strongly_agree},
      {"sTRONGLY dISAGREE", LikertLabel::strongly_disagree},
      {"Final answer: Slightly Disagree.", LikertLabel::slightly_disagree},
      // Labels embedded in sentences.
      {"I would say I slightly disagree with this.", LikertLabel::slightly_disagree},
      {"I strongly disagree with the statement.", LikertLabel::strongly_disagree},
      {"Well... slightly agree?", LikertLabel::slightly_agree},
      {"My answer: disagree", LikertLabel::disagree},
      {"I agree.", LikertLabel::agree},
      {"Opinion: Agree", LikertLabel::agree},
      {"I somewhat agree", LikertLabel::agree},
      {"I do not agree", LikertLabel::agree},
      // Phrase-priority collisions: the longer phrase wins regardless of
      // position; reversed or separated words fall back to the short one.
      {"agree or disagree", LikertLabel::disagree},
      {"disagree or agree", LikertLabel::disagree},
      {"agree or strongly disagree?", LikertLabel::strongly_disagree},
      {"slightly agree or strongly disagree", LikertLabel::strongly_disagree},
      {"strongly agree but slightly disagree", LikertLabel::slightly_disagree},
      {"strongly agree strongly disagree", LikertLabel::strongly_disagree},
      {"I disagree, strongly.", LikertLabel::disagree},
      {"strongly, I disagree", LikertLabel::disagree},
      {"They say agree to disagree", LikertLabel::disagree},
      {"disagree disagree disagree", LikertLabel::disagree},
      // Punctuation and whitespace normalization.
      {"strongly   agree", LikertLabel::strongly_agree},
      {"strongly-agree", LikertLabel::strongly_agree},
      {"slightly\tdisagree", LikertLabel::slightly_disagree},
      {"I slightly-- agree", LikertLabel::slightly_agree},
      {"agree-disagree spectrum", LikertLabel::disagree},
      {"(agree)", LikertLabel::agree},
      // Word boundaries: fragments inside longer words do not match.
      {"It's disagreeable.", std::nullopt},
      {"We are in agreement.", std::nullopt},
      {"The disagreement persists.", std::nullopt},
      {"agreed", std::nullopt},
      {"disagrees", std::nullopt},
      {"slightly disagreeable", std::nullopt},
      // Refusals.
      {"", std::nullopt},
      {"As an AI, I can't share opinions.", std::nullopt},
      {"I cannot take a position on this.", std::nullopt},
      {"maybe", std::nullopt},
      {"neutral", std::nullopt},
      {"strongly", std::nullopt},
      {"slightly", std::nullopt},
      {"3", std::nullopt},
  };
  static_assert(sizeof(corpus) / sizeof(corpus[0]) == 50);
  int failures = 0;
  for (const auto& test : corpus) {
    if (parse_likert(test.text) != test.want) {
      ++failures;
      c.expect(false, std::string("corpus case '") + test.text + "'");
    }
  }
  c.expect(failures == 0, "all 50 corpus cases resolve");
  c.finish();
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  if (failed_criteria > 0) {
    std::printf("%d criterion(s) failed\n", failed_criteria);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
