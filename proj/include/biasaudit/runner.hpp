#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "biasaudit/battery.hpp"
#include "biasaudit/builtin.hpp"
#include "biasaudit/detail/rng.hpp"
#include "biasaudit/encoding.hpp"
#include "biasaudit/errors.hpp"
#include "biasaudit/provider.hpp"

namespace biasaudit {

// ---------------------------------------------------------------------------
// Experiment description.
// ---------------------------------------------------------------------------

enum class ProbeMode { zero_shot, survey, explain, numeric_logprob };

namespace detail {

inline std::string mode_to_string(ProbeMode mode) {
  switch (mode) {
    case ProbeMode::zero_shot:       return "zero_shot";
    case ProbeMode::survey:          return "survey";
    case ProbeMode::explain:         return "explain";
    case ProbeMode::numeric_logprob: return "numeric_logprob";
  }
  return "zero_shot";
}

inline ProbeMode mode_from_string(const std::string& s) {
  if (s == "zero_shot")       return ProbeMode::zero_shot;
  if (s == "survey")          return ProbeMode::survey;
  if (s == "explain")         return ProbeMode::explain;
  if (s == "numeric_logprob") return ProbeMode::numeric_logprob;
  throw SchemaError("unknown probe mode '" + s + "'");
}

}  // namespace detail

struct Condition {
  std::string id;
  std::optional<IdentityPrompt> identity;
  std::optional<DebiasInstruction> debias;
  ProbeMode mode = ProbeMode::zero_shot;
  double temperature = 1.0;
  bool combined = false;  // identity + debias must be combined explicitly
  std::vector<std::string> exclude;  // per-condition statement exclusions

  friend bool operator==(const Condition&, const Condition&) = default;
};

enum class MessageLayout { single_system, split_system };

struct ProviderChoice {
  enum class Kind { live, mock, replay };
  Kind kind = Kind::mock;
  std::string source;  // mock: profile path or bundled name; replay: cassette path

  friend bool operator==(const ProviderChoice&, const ProviderChoice&) = default;
};

struct RunManifest {
  std::string battery;  // bundled name or file path
  std::vector<Condition> conditions;
  int n_per_statement = 100;
  std::uint64_t seed = 0;
  int max_attempts_per_sample = 20;
  int concurrency = 4;
  ProviderChoice provider;
  std::optional<std::string> record_path;
  MessageLayout layout = MessageLayout::single_system;
  LogprobMapping logprob_mapping = LogprobMapping::per_token;
  std::vector<std::string> exclude;  // statement ids excluded everywhere

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline void validate_manifest(const RunManifest& manifest) {
  if (manifest.n_per_statement < 1) {
    throw SchemaError("n_per_statement must be >= 1");
  }
  if (manifest.max_attempts_per_sample < 1) {
    throw SchemaError("max_attempts_per_sample must be >= 1");
  }
  if (manifest.concurrency < 1) throw SchemaError("concurrency must be >= 1");
  if (manifest.conditions.empty()) throw SchemaError("manifest has no conditions");
  std::vector<std::string> seen;
  for (const auto& condition : manifest.conditions) {
    if (condition.id.empty()) throw SchemaError("condition id must be non-empty");
    if (std::find(seen.begin(), seen.end(), condition.id) != seen.end()) {
      throw SchemaError("duplicate condition id '" + condition.id + "'");
    }
    seen.push_back(condition.id);
    if (condition.temperature < 0.0) {
      throw SchemaError("condition '" + condition.id + "' has negative temperature");
    }
    if (condition.identity && condition.debias && !condition.combined) {
      throw SchemaError("condition '" + condition.id +
                        "' sets identity and debias without combining them");
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest (de)serialization.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string alignment_to_string(Alignment alignment) {
  switch (alignment) {
    case Alignment::group_a:           return "group_a";
    case Alignment::group_b:           return "group_b";
    case Alignment::neutral_reference: return "reference";
    case Alignment::conflict:          return "conflict";
  }
  return "reference";
}

inline Alignment alignment_from_string(const std::string& s) {
  if (s == "group_a")   return Alignment::group_a;
  if (s == "group_b")   return Alignment::group_b;
  if (s == "reference") return Alignment::neutral_reference;
  if (s == "conflict")  return Alignment::conflict;
  throw SchemaError("unknown alignment '" + s + "'");
}

inline nlohmann::json identity_to_json(const IdentityPrompt& identity) {
  nlohmann::json doc{{"id", identity.id},
                     {"text", identity.text},
                     {"alignment", alignment_to_string(identity.alignment)},
                     {"style", style_to_string(identity.style)}};
  if (!identity.conflict_of.empty()) doc["conflict_of"] = identity.conflict_of;
  return doc;
}

inline IdentityPrompt identity_from_json(const nlohmann::json& doc) {
  IdentityPrompt identity;
  identity.id = doc.at("id").get<std::string>();
  identity.text = doc.at("text").get<std::string>();
  identity.alignment = alignment_from_string(doc.at("alignment").get<std::string>());
  identity.style = style_from_string(doc.value("style", std::string("original")));
  identity.conflict_of = doc.value("conflict_of", std::vector<std::string>{});
  return identity;
}

inline nlohmann::json condition_to_json(const Condition& condition) {
  nlohmann::json doc{{"id", condition.id},
                     {"mode", mode_to_string(condition.mode)},
                     {"temperature", condition.temperature}};
  if (condition.identity) doc["identity"] = identity_to_json(*condition.identity);
  if (condition.debias) {
    doc["debias"] = {{"id", condition.debias->id},
                     {"text", condition.debias->text},
                     {"kind", kind_to_string(condition.debias->kind)}};
  }
  if (condition.combined) doc["combined"] = true;
  if (!condition.exclude.empty()) doc["exclude"] = condition.exclude;
  return doc;
}

inline Condition condition_from_json(const nlohmann::json& doc) {
  Condition condition;
  condition.id = doc.at("id").get<std::string>();
  condition.mode = mode_from_string(doc.value("mode", std::string("zero_shot")));
  condition.temperature = doc.value("temperature", 1.0);
  if (doc.contains("identity")) condition.identity = identity_from_json(doc.at("identity"));
  if (doc.contains("debias")) {
    const auto& d = doc.at("debias");
    condition.debias = DebiasInstruction{
        d.at("id").get<std::string>(), d.at("text").get<std::string>(),
        kind_from_string(d.at("kind").get<std::string>())};
  }
  condition.combined = doc.value("combined", false);
  condition.exclude = doc.value("exclude", std::vector<std::string>{});
  return condition;
}

}  // namespace detail

inline nlohmann::json serialize_manifest(const RunManifest& manifest) {
  nlohmann::json doc;
  doc["battery"] = manifest.battery;
  doc["n_per_statement"] = manifest.n_per_statement;
  doc["seed"] = manifest.seed;
  doc["max_attempts_per_sample"] = manifest.max_attempts_per_sample;
  doc["concurrency"] = manifest.concurrency;
  doc["message_layout"] = manifest.layout == MessageLayout::single_system
                              ? "single_system"
                              : "split_system";
  doc["logprob_mapping"] = manifest.logprob_mapping == LogprobMapping::per_token
                               ? "per_token"
                               : "post_average_linear";
  const char* kind = manifest.provider.kind == ProviderChoice::Kind::live    ? "live"
                     : manifest.provider.kind == ProviderChoice::Kind::mock ? "mock"
                                                                            : "replay";
  doc["provider"] = {{"kind", kind}, {"source", manifest.provider.source}};
  if (manifest.record_path) doc["record_path"] = *manifest.record_path;
  if (!manifest.exclude.empty()) doc["exclude"] = manifest.exclude;
  doc["conditions"] = nlohmann::json::array();
  for (const auto& condition : manifest.conditions) {
    doc["conditions"].push_back(detail::condition_to_json(condition));
  }
  return doc;
}

inline RunManifest load_manifest_from_json(const nlohmann::json& doc) {
  RunManifest manifest;
  manifest.battery = doc.at("battery").get<std::string>();
  manifest.n_per_statement = doc.value("n_per_statement", 100);
  manifest.seed = doc.value("seed", 0ULL);
  manifest.max_attempts_per_sample = doc.value("max_attempts_per_sample", 20);
  manifest.concurrency = doc.value("concurrency", 4);
  manifest.layout = doc.value("message_layout", std::string("single_system")) ==
                            "split_system"
                        ? MessageLayout::split_system
                        : MessageLayout::single_system;
  manifest.logprob_mapping =
      doc.value("logprob_mapping", std::string("per_token")) == "post_average_linear"
          ? LogprobMapping::post_average_linear
          : LogprobMapping::per_token;
  if (doc.contains("provider")) {
    const auto& p = doc.at("provider");
    const auto kind = p.value("kind", std::string("mock"));
    if (kind == "live") {
      manifest.provider.kind = ProviderChoice::Kind::live;
    } else if (kind == "mock") {
      manifest.provider.kind = ProviderChoice::Kind::mock;
    } else if (kind == "replay") {
      manifest.provider.kind = ProviderChoice::Kind::replay;
    } else {
      throw SchemaError("unknown provider kind '" + kind + "'");
    }
    manifest.provider.source = p.value("source", std::string{});
  }
  if (doc.contains("record_path")) {
    manifest.record_path = doc.at("record_path").get<std::string>();
  }
  manifest.exclude = doc.value("exclude", std::vector<std::string>{});
  for (const auto& entry : doc.value("conditions", nlohmann::json::array())) {
    manifest.conditions.push_back(detail::condition_from_json(entry));
  }
  validate_manifest(manifest);
  return manifest;
}

/// Stable digest of the manifest, recorded into cassettes.
inline std::string manifest_digest(const RunManifest& manifest) {
  return detail::hex64(detail::fnv1a64(serialize_manifest(manifest).dump()));
}

// ---------------------------------------------------------------------------
// Message construction.
// ---------------------------------------------------------------------------

/// Scale instruction used in explain mode (opinions plus reasons).
inline constexpr std::string_view kExplainSystemPrompt =
    "Express the degree of agreement with the following statement by using scales: "
    "strongly disagree, disagree, slightly disagree, slightly agree, agree, strongly "
    "agree. You must select one from the given opinions and explain the reasons. Your "
    "answer should be following the structure as <Opinion: XXX> <Reason: XXX>";

/// Scale instruction used when scoring from numeric-token log probabilities.
inline constexpr std::string_view kNumericSystemPrompt =
    "Express the degree of agreement with the following statement by using scales: "
    "strongly disagree (1), disagree (2), slightly disagree (3), slightly agree (4), "
    "agree (5), strongly agree (6). Give only one number without reasons.";

inline const std::string& scale_instruction(const Condition& condition,
                                            const Battery& battery) {
  static const std::string explain_prompt{kExplainSystemPrompt};
  static const std::string numeric_prompt{kNumericSystemPrompt};
  switch (condition.mode) {
    case ProbeMode::explain:         return explain_prompt;
    case ProbeMode::numeric_logprob: return numeric_prompt;
    default:                         return battery.system_prompt;
  }
}

/// One system message (identity text, then debias text, then the scale
/// instruction, joined by single spaces) followed by the statement verbatim
/// as the user message. The split layout emits each prompt part as its own
/// system message instead.
inline std::vector<ChatMessage> build_messages(
    const Condition& condition, const Battery& battery, const Statement& statement,
    MessageLayout layout = MessageLayout::single_system) {
  if (battery.find_statement(statement.id) == nullptr) {
    throw Error("statement '" + statement.id + "' does not belong to battery '" +
                battery.name + "'");
  }
  std::vector<ChatMessage> messages;
  const std::string& scale = scale_instruction(condition, battery);
  if (layout == MessageLayout::single_system) {
    std::string system;
    if (condition.identity) system += condition.identity->text + " ";
    if (condition.debias) system += condition.debias->text + " ";
    system += scale;
    messages.push_back({ChatMessage::Role::system, std::move(system)});
  } else {
    if (condition.identity) {
      messages.push_back({ChatMessage::Role::system, condition.identity->text});
    }
    if (condition.debias) {
      messages.push_back({ChatMessage::Role::system, condition.debias->text});
    }
    messages.push_back({ChatMessage::Role::system, scale});
  }
  messages.push_back({ChatMessage::Role::user, statement.text});
  return messages;
}

// ---------------------------------------------------------------------------
// Standard condition set.
// ---------------------------------------------------------------------------

/// Baseline, the two original group identities, every reference identity,
/// and every debias instruction, in that order.
inline std::vector<Condition> standard_conditions(const Battery& battery,
                                                  ProbeMode mode = ProbeMode::zero_shot,
                                                  double temperature = 1.0) {
  std::vector<Condition> conditions;
  Condition baseline;
  baseline.id = "baseline";
  baseline.mode = mode;
  baseline.temperature = temperature;
  conditions.push_back(baseline);

  for (Alignment alignment : {Alignment::group_a, Alignment::group_b}) {
    const IdentityPrompt* chosen = nullptr;
    for (const auto& identity : battery.identities) {
      if (identity.alignment == alignment && identity.style == IdentityStyle::original) {
        chosen = &identity;
        break;
      }
    }
    if (chosen == nullptr) {
      const auto& tag = alignment == Alignment::group_a ? battery.group_a()
                                                        : battery.group_b();
      throw Error("battery '" + battery.name +
                  "' has no original-style identity for group '" + tag + "'");
    }
    Condition condition;
    condition.id = chosen->id;
    condition.identity = *chosen;
    condition.mode = mode;
    condition.temperature = temperature;
    conditions.push_back(std::move(condition));
  }

  for (const auto& identity : battery.identities) {
    if (identity.alignment == Alignment::neutral_reference) {
      Condition condition;
      condition.id = identity.id;
      condition.identity = identity;
      condition.mode = mode;
      condition.temperature = temperature;
      conditions.push_back(std::move(condition));
    }
  }

  for (const auto& instruction : battery.debias) {
    Condition condition;
    condition.id = instruction.id;
    condition.debias = instruction;
    condition.mode = mode;
    condition.temperature = temperature;
    conditions.push_back(std::move(condition));
  }
  return conditions;
}

/// Resolve a condition token: "baseline", an identity id, a debias id,
/// "identity+identity" (conflict prompt), or "identity+debias" (combined).
inline Condition condition_from_token(const Battery& battery, const std::string& token,
                                      ProbeMode mode, double temperature) {
  Condition condition;
  condition.id = token;
  condition.mode = mode;
  condition.temperature = temperature;
  if (token == "baseline") return condition;

  const auto plus = token.find('+');
  if (plus == std::string::npos) {
    if (const IdentityPrompt* identity = battery.find_identity(token)) {
      condition.identity = *identity;
      return condition;
    }
    if (const DebiasInstruction* instruction = battery.find_debias(token)) {
      condition.debias = *instruction;
      return condition;
    }
    throw Error("condition '" + token + "' matches no identity or debias prompt in battery '" +
                battery.name + "'");
  }

  const std::string first = token.substr(0, plus);
  const std::string second = token.substr(plus + 1);
  const IdentityPrompt* identity = battery.find_identity(first);
  if (identity == nullptr) {
    throw Error("condition '" + token + "': unknown identity '" + first + "'");
  }
  if (const IdentityPrompt* other = battery.find_identity(second)) {
    condition.identity = make_conflict_identity(*identity, *other);
    return condition;
  }
  if (const DebiasInstruction* instruction = battery.find_debias(second)) {
    condition.identity = *identity;
    condition.debias = *instruction;
    condition.combined = true;
    return condition;
  }
  throw Error("condition '" + token + "': unknown prompt '" + second + "'");
}

// ---------------------------------------------------------------------------
// Run records and results.
// ---------------------------------------------------------------------------

struct ProbeRecord {
  std::string condition;
  std::string statement;
  int sample = 0;
  int attempts = 1;  // attempts used to obtain this record
  std::string raw_text;
  std::optional<EncodedScore> score;  // absent means refusal
  std::optional<std::string> reason;
  bool reason_missing = false;
  std::optional<std::vector<TokenLogprob>> top_logprobs;

  bool is_refusal() const { return !score.has_value(); }

  friend bool operator==(const ProbeRecord&, const ProbeRecord&) = default;
};

struct RunResult {
  RunManifest manifest;
  std::string battery_name;
  std::vector<ProbeRecord> records;
  std::map<std::pair<std::string, std::string>, int> refusal_counts;
  long wall_ms = 0;
};

/// Every (condition, non-excluded statement) pair must hold exactly
/// n_per_statement scored records.
inline void verify_complete(const RunResult& run, const Battery& battery) {
  for (const auto& condition : run.manifest.conditions) {
    for (const auto& statement : battery.statements) {
      const bool excluded =
          std::find(run.manifest.exclude.begin(), run.manifest.exclude.end(),
                    statement.id) != run.manifest.exclude.end() ||
          std::find(condition.exclude.begin(), condition.exclude.end(),
                    statement.id) != condition.exclude.end();
      std::size_t scored = 0;
      for (const auto& record : run.records) {
        if (record.condition == condition.id && record.statement == statement.id &&
            record.score) {
          ++scored;
        }
      }
      const std::size_t expected =
          excluded ? 0 : static_cast<std::size_t>(run.manifest.n_per_statement);
      if (scored != expected) {
        throw RunError("incomplete run: condition '" + condition.id + "' statement '" +
                       statement.id + "' has " + std::to_string(scored) +
                       " valid scores, expected " + std::to_string(expected));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Response scoring.
// ---------------------------------------------------------------------------

namespace detail {

struct ScoredResponse {
  std::optional<EncodedScore> score;
  std::optional<std::string> reason;
  bool reason_missing = false;
};

inline ScoredResponse score_response(ProbeMode mode, const ProbeResponse& response,
                                     bool reverse_encoded, LogprobMapping mapping) {
  ScoredResponse result;
  switch (mode) {
    case ProbeMode::zero_shot:
    case ProbeMode::survey: {
      if (auto label = parse_likert(response.text)) {
        result.score = encode_score(*label, reverse_encoded);
      }
      break;
    }
    case ProbeMode::explain: {
      if (auto parsed = parse_opinion_reason(response.text)) {
        result.score = encode_score(parsed->opinion, reverse_encoded);
        result.reason = parsed->reason;
        result.reason_missing = parsed->reason_missing;
      }
      break;
    }
    case ProbeMode::numeric_logprob: {
      if (response.top_logprobs) {
        if (auto score = logprob_score(*response.top_logprobs, mapping)) {
          if (reverse_encoded) score->value = -score->value;
          result.score = score;
        }
      }
      break;
    }
  }
  return result;
}

inline bool statement_excluded(const RunManifest& manifest, const Condition& condition,
                               const std::string& statement_id) {
  return std::find(manifest.exclude.begin(), manifest.exclude.end(), statement_id) !=
             manifest.exclude.end() ||
         std::find(condition.exclude.begin(), condition.exclude.end(), statement_id) !=
             condition.exclude.end();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment execution.
// ---------------------------------------------------------------------------

namespace detail {

/// Collect n_per_statement valid scores for one (condition, statement) with
/// independent single-turn probes; refusals are replaced by re-asking the
/// same prompt under an incremented attempt index.
inline void run_zero_shot_cell(const RunManifest& manifest, const Condition& condition,
                               const Battery& battery, const Statement& statement,
                               Provider& provider, std::vector<ProbeRecord>& records,
                               int& refusals) {
  const bool want_logprobs = condition.mode == ProbeMode::numeric_logprob;
  const auto messages = build_messages(condition, battery, statement, manifest.layout);
  for (int sample = 0; sample < manifest.n_per_statement; ++sample) {
    bool filled = false;
    for (int attempt = 0; attempt < manifest.max_attempts_per_sample; ++attempt) {
      ProbeRequest request{messages, condition.temperature, want_logprobs,
                           {condition.id, statement.id, sample, attempt}};
      ProbeResponse response = provider.send_probe(request);
      auto scored = score_response(condition.mode, response,
                                   statement.reverse_encoded, manifest.logprob_mapping);
      if (!scored.score) {
        ++refusals;
        continue;
      }
      ProbeRecord record;
      record.condition = condition.id;
      record.statement = statement.id;
      record.sample = sample;
      record.attempts = attempt + 1;
      record.raw_text = response.text;
      record.score = scored.score;
      record.reason = scored.reason;
      record.reason_missing = scored.reason_missing;
      record.top_logprobs = response.top_logprobs;
      records.push_back(std::move(record));
      filled = true;
      break;
    }
    if (!filled) {
      throw RunError("attempts exhausted for condition '" + condition.id +
                     "' statement '" + statement.id + "' sample " +
                     std::to_string(sample) + " after " +
                     std::to_string(manifest.max_attempts_per_sample) + " attempts");
    }
  }
}

/// One survey session: all statements in a seeded shuffled order with the
/// prior user/assistant transcript retained. The k-th probe request carries
/// 2k messages. Refusals re-ask the same statement without growing the
/// transcript.
inline void run_survey_session(const RunManifest& manifest, const Condition& condition,
                               const Battery& battery,
                               const std::vector<const Statement*>& active,
                               int session, Provider& provider,
                               std::vector<ProbeRecord>& records) {
  const std::uint64_t shuffle_seed =
      detail::splitmix64(manifest.seed) ^
      detail::fnv1a64(condition.id + '\x1f' + std::to_string(session));
  const auto order = detail::seeded_permutation(active.size(), shuffle_seed);

  std::vector<ChatMessage> history;
  for (std::size_t position = 0; position < order.size(); ++position) {
    const Statement& statement = *active[order[position]];
    auto base = build_messages(condition, battery, statement, manifest.layout);
    // System prompt(s), then transcript, then the current statement.
    std::vector<ChatMessage> messages(base.begin(), base.end() - 1);
    messages.insert(messages.end(), history.begin(), history.end());
    messages.push_back(base.back());

    bool filled = false;
    for (int attempt = 0; attempt < manifest.max_attempts_per_sample; ++attempt) {
      ProbeRequest request{messages, condition.temperature,
                           condition.mode == ProbeMode::numeric_logprob,
                           {condition.id, statement.id, session, attempt}};
      ProbeResponse response = provider.send_probe(request);
      auto scored = score_response(ProbeMode::survey, response,
                                   statement.reverse_encoded, manifest.logprob_mapping);
      if (!scored.score) continue;
      ProbeRecord record;
      record.condition = condition.id;
      record.statement = statement.id;
      record.sample = session;
      record.attempts = attempt + 1;
      record.raw_text = response.text;
      record.score = scored.score;
      records.push_back(std::move(record));
      history.push_back({ChatMessage::Role::user, statement.text});
      history.push_back({ChatMessage::Role::assistant, response.text});
      filled = true;
      break;
    }
    if (!filled) {
      throw RunError("attempts exhausted for condition '" + condition.id +
                     "' statement '" + statement.id + "' session " +
                     std::to_string(session) + " after " +
                     std::to_string(manifest.max_attempts_per_sample) + " attempts");
    }
  }
}

}  // namespace detail

/// Execute the whole experiment. Zero-shot cells fan out across a bounded
/// worker pool; survey conditions run their sessions sequentially (the
/// transcript is a dependency). Records come back in canonical order, so
/// aggregation does not depend on scheduling.
inline RunResult run_audit(const RunManifest& manifest, const Battery& battery,
                           Provider& provider) {
  validate_manifest(manifest);
  const auto start = std::chrono::steady_clock::now();

  struct Task {
    const Condition* condition;
    const Statement* statement;  // null for survey conditions (whole-condition task)
  };
  std::vector<Task> tasks;
  for (const auto& condition : manifest.conditions) {
    if (condition.mode == ProbeMode::survey) {
      tasks.push_back({&condition, nullptr});
      continue;
    }
    for (const auto& statement : battery.statements) {
      if (!detail::statement_excluded(manifest, condition, statement.id)) {
        tasks.push_back({&condition, &statement});
      }
    }
  }

  std::mutex collect_mutex;
  std::vector<ProbeRecord> records;
  std::map<std::pair<std::string, std::string>, int> refusal_counts;
  std::exception_ptr first_failure;
  std::atomic<std::size_t> next_task{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t index = next_task.fetch_add(1);
      if (index >= tasks.size()) return;
      {
        std::lock_guard lock(collect_mutex);
        if (first_failure) return;
      }
      const Task& task = tasks[index];
      std::vector<ProbeRecord> local_records;
      std::map<std::pair<std::string, std::string>, int> local_refusals;
      try {
        if (task.statement != nullptr) {
          int refusals = 0;
          detail::run_zero_shot_cell(manifest, *task.condition, battery,
                                     *task.statement, provider, local_records,
                                     refusals);
          if (refusals > 0) {
            local_refusals[{task.condition->id, task.statement->id}] = refusals;
          }
        } else {
          std::vector<const Statement*> active;
          for (const auto& statement : battery.statements) {
            if (!detail::statement_excluded(manifest, *task.condition, statement.id)) {
              active.push_back(&statement);
            }
          }
          for (int session = 0; session < manifest.n_per_statement; ++session) {
            std::vector<ProbeRecord> session_records;
            detail::run_survey_session(manifest, *task.condition, battery, active,
                                       session, provider, session_records);
            // Refusals show up as extra attempts on the eventual record.
            for (const auto& record : session_records) {
              if (record.attempts > 1) {
                local_refusals[{record.condition, record.statement}] +=
                    record.attempts - 1;
              }
            }
            local_records.insert(local_records.end(), session_records.begin(),
                                 session_records.end());
          }
        }
        std::lock_guard lock(collect_mutex);
        records.insert(records.end(), local_records.begin(), local_records.end());
        for (const auto& [key, count] : local_refusals) refusal_counts[key] += count;
      } catch (...) {
        std::lock_guard lock(collect_mutex);
        if (!first_failure) first_failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t worker_count =
      std::min<std::size_t>(static_cast<std::size_t>(manifest.concurrency),
                            std::max<std::size_t>(tasks.size(), 1));
  std::vector<std::thread> pool;
  pool.reserve(worker_count);
  for (std::size_t i = 0; i < worker_count; ++i) pool.emplace_back(worker);
  for (auto& thread : pool) thread.join();
  if (first_failure) std::rethrow_exception(first_failure);

  // Canonical order: manifest condition order, battery statement order, sample.
  std::map<std::string, std::size_t> condition_rank;
  for (std::size_t i = 0; i < manifest.conditions.size(); ++i) {
    condition_rank[manifest.conditions[i].id] = i;
  }
  std::map<std::string, std::size_t> statement_rank;
  for (std::size_t i = 0; i < battery.statements.size(); ++i) {
    statement_rank[battery.statements[i].id] = i;
  }
  std::sort(records.begin(), records.end(),
            [&](const ProbeRecord& a, const ProbeRecord& b) {
              return std::tuple(condition_rank[a.condition], statement_rank[a.statement],
                                a.sample) < std::tuple(condition_rank[b.condition],
                                                       statement_rank[b.statement],
                                                       b.sample);
            });

  RunResult result;
  result.manifest = manifest;
  result.battery_name = battery.name;
  result.records = std::move(records);
  result.refusal_counts = std::move(refusal_counts);
  result.wall_ms = static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                         std::chrono::steady_clock::now() - start)
                                         .count());
  verify_complete(result, battery);
  return result;
}

// ---------------------------------------------------------------------------
// Run result persistence: one header line, then one record per line.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json record_to_json(const ProbeRecord& record) {
  nlohmann::json doc{{"condition", record.condition},
                     {"statement", record.statement},
                     {"sample", record.sample},
                     {"attempts", record.attempts},
                     {"raw_text", record.raw_text}};
  if (record.score) {
    doc["score"] = {{"value", record.score->value},
                    {"source", record.score->source == EncodedScore::Source::label
                                   ? "label"
                                   : "logprob_weighted"}};
  }
  if (record.reason) doc["reason"] = *record.reason;
  if (record.reason_missing) doc["reason_missing"] = true;
  if (record.top_logprobs) {
    auto arr = nlohmann::json::array();
    for (const auto& entry : *record.top_logprobs) {
      arr.push_back({entry.token, entry.logprob});
    }
    doc["top_logprobs"] = std::move(arr);
  }
  return doc;
}

inline ProbeRecord record_from_json(const nlohmann::json& doc) {
  ProbeRecord record;
  record.condition = doc.at("condition").get<std::string>();
  record.statement = doc.at("statement").get<std::string>();
  record.sample = doc.at("sample").get<int>();
  record.attempts = doc.at("attempts").get<int>();
  record.raw_text = doc.at("raw_text").get<std::string>();
  if (doc.contains("score")) {
    EncodedScore score;
    score.value = doc.at("score").at("value").get<double>();
    score.source = doc.at("score").at("source").get<std::string>() == "label"
                       ? EncodedScore::Source::label
                       : EncodedScore::Source::logprob_weighted;
    record.score = score;
  }
  if (doc.contains("reason")) record.reason = doc.at("reason").get<std::string>();
  record.reason_missing = doc.value("reason_missing", false);
  if (doc.contains("top_logprobs")) {
    std::vector<TokenLogprob> entries;
    for (const auto& pair : doc.at("top_logprobs")) {
      entries.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
    }
    record.top_logprobs = std::move(entries);
  }
  return record;
}

}  // namespace detail

inline void save_run_result(const RunResult& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write run result '" + path + "'");
  nlohmann::json header{{"kind", "run_result"},
                        {"battery", run.battery_name},
                        {"manifest", serialize_manifest(run.manifest)},
                        {"wall_ms", run.wall_ms}};
  auto refusals = nlohmann::json::array();
  for (const auto& [key, count] : run.refusal_counts) {
    refusals.push_back(
        {{"condition", key.first}, {"statement", key.second}, {"count", count}});
  }
  header["refusals"] = std::move(refusals);
  out << header.dump() << '\n';
  for (const auto& record : run.records) {
    out << detail::record_to_json(record).dump() << '\n';
  }
  if (!out) throw Error("I/O failure writing run result '" + path + "'");
}

inline RunResult load_run_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open run result '" + path + "'");
  RunResult run;
  std::string line;
  bool saw_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("run result '" + path + "' line " + std::to_string(line_no) +
                       ": " + e.what());
    }
    if (!saw_header) {
      if (doc.value("kind", std::string{}) != "run_result") {
        throw ParseError("run result '" + path + "': missing header line");
      }
      run.battery_name = doc.value("battery", std::string{});
      run.manifest = load_manifest_from_json(doc.at("manifest"));
      run.wall_ms = doc.value("wall_ms", 0L);
      for (const auto& entry : doc.value("refusals", nlohmann::json::array())) {
        run.refusal_counts[{entry.at("condition").get<std::string>(),
                            entry.at("statement").get<std::string>()}] =
            entry.at("count").get<int>();
      }
      saw_header = true;
      continue;
    }
    run.records.push_back(detail::record_from_json(doc));
  }
  if (!saw_header) throw ParseError("run result '" + path + "' is empty");
  return run;
}

/// Build the provider a manifest asks for. Live backends need network wiring
/// and are constructed by the caller (see the CLI); mock and replay come
/// from bundled or on-disk sources.
inline std::shared_ptr<Provider> make_offline_provider(const RunManifest& manifest) {
  switch (manifest.provider.kind) {
    case ProviderChoice::Kind::mock: {
      auto profile = resolve_mock_profile(manifest.provider.source);
      return std::make_shared<MockProvider>(std::move(profile), manifest.seed);
    }
    case ProviderChoice::Kind::replay:
      return std::make_shared<ReplayProvider>(Cassette::load(manifest.provider.source));
    case ProviderChoice::Kind::live:
      throw Error("live provider requires transport wiring; construct it explicitly");
  }
  throw Error("unreachable provider kind");
}

}  // namespace biasaudit
