#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "biasaudit/detail/rng.hpp"
#include "biasaudit/encoding.hpp"
#include "biasaudit/errors.hpp"

namespace biasaudit {

/// Transient transport failure (connection refused, timeout). Retryable.
class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

// ---------------------------------------------------------------------------
// Chat messages and probe envelopes.
// ---------------------------------------------------------------------------

struct ChatMessage {
  enum class Role { system, user, assistant };
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

namespace detail {

inline std::string role_to_string(ChatMessage::Role role) {
  switch (role) {
    case ChatMessage::Role::system:    return "system";
    case ChatMessage::Role::user:      return "user";
    case ChatMessage::Role::assistant: return "assistant";
  }
  return "user";
}

inline ChatMessage::Role role_from_string(const std::string& s) {
  if (s == "system")    return ChatMessage::Role::system;
  if (s == "user")      return ChatMessage::Role::user;
  if (s == "assistant") return ChatMessage::Role::assistant;
  throw ParseError("unknown chat role '" + s + "'");
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

/// Semantic identity of one probe. Cassettes are keyed by this, not by
/// arrival order, so replay does not depend on dispatch interleaving.
struct ProbeTag {
  std::string condition;
  std::string statement;
  int sample = 0;
  int attempt = 0;

  std::string display() const {
    return condition + "/" + statement + "#" + std::to_string(sample) + "." +
           std::to_string(attempt);
  }

  std::uint64_t stable_hash() const {
    std::string key;
    key.reserve(condition.size() + statement.size() + 16);
    key += condition;
    key += '\x1f';
    key += statement;
    key += '\x1f';
    key += std::to_string(sample);
    key += '\x1f';
    key += std::to_string(attempt);
    return detail::fnv1a64(key);
  }

  friend bool operator==(const ProbeTag&, const ProbeTag&) = default;
  friend bool operator<(const ProbeTag& a, const ProbeTag& b) {
    return std::tie(a.condition, a.statement, a.sample, a.attempt) <
           std::tie(b.condition, b.statement, b.sample, b.attempt);
  }
};

struct ProbeRequest {
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  bool want_logprobs = false;
  ProbeTag tag;

  friend bool operator==(const ProbeRequest&, const ProbeRequest&) = default;
};

struct ProbeResponse {
  enum class Backend { live, replay, mock };

  std::string text;
  std::optional<std::vector<TokenLogprob>> top_logprobs;  // <= 20 entries
  long latency_ms = 0;
  Backend backend = Backend::mock;

  friend bool operator==(const ProbeResponse&, const ProbeResponse&) = default;
};

namespace detail {

inline std::string backend_to_string(ProbeResponse::Backend backend) {
  switch (backend) {
    case ProbeResponse::Backend::live:   return "live";
    case ProbeResponse::Backend::replay: return "replay";
    case ProbeResponse::Backend::mock:   return "mock";
  }
  return "mock";
}

inline ProbeResponse::Backend backend_from_string(const std::string& s) {
  if (s == "live")   return ProbeResponse::Backend::live;
  if (s == "replay") return ProbeResponse::Backend::replay;
  if (s == "mock")   return ProbeResponse::Backend::mock;
  throw ParseError("unknown backend '" + s + "'");
}

/// Canonical digest of a request, recorded into cassettes so that a replay
/// against a drifted manifest fails loudly instead of answering stale text.
inline std::string request_digest(const ProbeRequest& request) {
  nlohmann::json doc;
  doc["temperature"] = request.temperature;
  doc["want_logprobs"] = request.want_logprobs;
  doc["messages"] = nlohmann::json::array();
  for (const auto& message : request.messages) {
    doc["messages"].push_back(
        {{"role", role_to_string(message.role)}, {"content", message.content}});
  }
  return hex64(fnv1a64(doc.dump()));
}

}  // namespace detail

/// Uniform chat-completion interface over the live, replay, and mock
/// backends. Implementations must be safe to share across in-flight probes.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProbeResponse send_probe(const ProbeRequest& request) = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Mock backend: seeded categorical distributions over the six scale labels.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMockRefusalText =
    "I cannot take a position on this.";

struct LabelDistribution {
  std::array<double, 6> probs{};  // indexed by LikertLabel order
  double refusal_prob = 0.0;

  static LabelDistribution point_mass(LikertLabel label, double refusal = 0.0) {
    LabelDistribution dist;
    dist.probs[static_cast<std::size_t>(label)] = 1.0;
    dist.refusal_prob = refusal;
    return dist;
  }

  /// Two-point distribution on adjacent scale levels whose encoded mean is
  /// exactly `target` (target in [-3, 3]).
  static LabelDistribution calibrated_to_mean(double target, double refusal = 0.0) {
    if (target < -3.0 || target > 3.0) {
      throw Error("calibrated_to_mean: target " + std::to_string(target) +
                  " outside [-3, 3]");
    }
    LabelDistribution dist;
    dist.refusal_prob = refusal;
    std::size_t hi = 0;
    while (hi < 5 && likert_base_value(kLikertLevels[hi + 1]) < target) ++hi;
    if (likert_base_value(kLikertLevels[hi]) >= target) {
      dist.probs[hi] = 1.0;
      return dist;
    }
    ++hi;
    const double lo_value = likert_base_value(kLikertLevels[hi - 1]);
    const double hi_value = likert_base_value(kLikertLevels[hi]);
    const double w = (target - lo_value) / (hi_value - lo_value);
    dist.probs[hi] = w;
    dist.probs[hi - 1] = 1.0 - w;
    return dist;
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      m += probs[i] * likert_base_value(kLikertLevels[i]);
    }
    return m;
  }

  void validate() const {
    double total = 0.0;
    for (double p : probs) {
      if (p < 0.0) throw SchemaError("mock distribution has a negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw SchemaError("mock distribution probabilities sum to " +
                        std::to_string(total) + ", expected 1");
    }
    if (refusal_prob < 0.0 || refusal_prob > 1.0) {
      throw SchemaError("refusal probability must lie in [0, 1]");
    }
  }

  friend bool operator==(const LabelDistribution&, const LabelDistribution&) = default;
};

struct MockProfile {
  LabelDistribution default_dist = LabelDistribution::point_mass(LikertLabel::agree);
  std::map<std::pair<std::string, std::string>, LabelDistribution> overrides;
  std::optional<std::uint64_t> seed;  // absent: the run manifest's seed applies

  const LabelDistribution& distribution_for(const std::string& condition,
                                            const std::string& statement) const {
    auto it = overrides.find({condition, statement});
    return it == overrides.end() ? default_dist : it->second;
  }

  void validate() const {
    default_dist.validate();
    for (const auto& [key, dist] : overrides) dist.validate();
  }

  friend bool operator==(const MockProfile&, const MockProfile&) = default;
};

namespace detail {

inline nlohmann::json distribution_to_json(const LabelDistribution& dist) {
  nlohmann::json probs;
  for (std::size_t i = 0; i < 6; ++i) {
    if (dist.probs[i] != 0.0) {
      probs[std::string(likert_phrase(kLikertLevels[i]))] = dist.probs[i];
    }
  }
  return {{"probs", probs}, {"refusal_prob", dist.refusal_prob}};
}

inline LabelDistribution distribution_from_json(const nlohmann::json& doc) {
  LabelDistribution dist;
  dist.refusal_prob = doc.value("refusal_prob", 0.0);
  if (!doc.contains("probs") || !doc.at("probs").is_object()) {
    throw SchemaError("mock distribution: missing 'probs' object");
  }
  for (const auto& [key, value] : doc.at("probs").items()) {
    bool known = false;
    for (std::size_t i = 0; i < 6; ++i) {
      if (key == likert_phrase(kLikertLevels[i])) {
        dist.probs[i] = value.get<double>();
        known = true;
        break;
      }
    }
    if (!known) throw SchemaError("mock distribution: unknown label '" + key + "'");
  }
  dist.validate();
  return dist;
}

}  // namespace detail

inline nlohmann::json serialize_mock_profile(const MockProfile& profile) {
  nlohmann::json doc;
  if (profile.seed) doc["seed"] = *profile.seed;
  doc["default"] = detail::distribution_to_json(profile.default_dist);
  doc["overrides"] = nlohmann::json::array();
  for (const auto& [key, dist] : profile.overrides) {
    auto entry = detail::distribution_to_json(dist);
    entry["condition"] = key.first;
    entry["statement"] = key.second;
    doc["overrides"].push_back(std::move(entry));
  }
  return doc;
}

inline MockProfile load_mock_profile_from_json(const nlohmann::json& doc) {
  MockProfile profile;
  if (doc.contains("seed")) profile.seed = doc.at("seed").get<std::uint64_t>();
  if (!doc.contains("default")) {
    throw SchemaError("mock profile: missing 'default' distribution");
  }
  profile.default_dist = detail::distribution_from_json(doc.at("default"));
  if (doc.contains("overrides")) {
    for (const auto& entry : doc.at("overrides")) {
      auto condition = entry.value("condition", std::string{});
      auto statement = entry.value("statement", std::string{});
      if (condition.empty() || statement.empty()) {
        throw SchemaError("mock profile override needs 'condition' and 'statement'");
      }
      profile.overrides[{condition, statement}] =
          detail::distribution_from_json(entry);
    }
  }
  profile.validate();
  return profile;
}

inline MockProfile load_mock_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mock profile '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("mock profile '" + path + "': " + e.what());
  }
  return load_mock_profile_from_json(doc);
}

/// Draw one response. Randomness is a pure function of (seed, tag): the same
/// tag always yields the same response, with no shared generator state.
inline ProbeResponse mock_sample(const MockProfile& profile, const ProbeTag& tag,
                                 bool want_logprobs = false,
                                 std::uint64_t fallback_seed = 0) {
  const auto& dist = profile.distribution_for(tag.condition, tag.statement);
  const std::uint64_t seed = profile.seed.value_or(fallback_seed);
  detail::SplitMix rng(detail::splitmix64(seed) ^ tag.stable_hash());

  ProbeResponse response;
  response.backend = ProbeResponse::Backend::mock;
  if (rng.next_unit() < dist.refusal_prob) {
    response.text = std::string(kMockRefusalText);
    return response;
  }
  const double u = rng.next_unit();
  // Fallback to the highest supported label in case rounding in the
  // cumulative sum leaves u unmatched.
  std::size_t chosen = 0;
  for (std::size_t i = 6; i-- > 0;) {
    if (dist.probs[i] > 0.0) {
      chosen = i;
      break;
    }
  }
  double cumulative = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    cumulative += dist.probs[i];
    if (u < cumulative) {
      chosen = i;
      break;
    }
  }
  const LikertLabel label = kLikertLevels[chosen];
  response.text = std::string(likert_phrase(label));
  if (want_logprobs) {
    std::vector<TokenLogprob> entries;
    for (std::size_t i = 0; i < 6; ++i) {
      if (dist.probs[i] > 0.0) {
        entries.push_back({std::to_string(likert_numeric_index(kLikertLevels[i])),
                           std::log(dist.probs[i])});
      }
    }
    response.top_logprobs = std::move(entries);
  }
  return response;
}

class MockProvider : public Provider {
 public:
  explicit MockProvider(MockProfile profile, std::uint64_t fallback_seed = 0)
      : profile_(std::move(profile)), fallback_seed_(fallback_seed) {
    profile_.validate();
  }

  ProbeResponse send_probe(const ProbeRequest& request) override {
    return mock_sample(profile_, request.tag, request.want_logprobs, fallback_seed_);
  }

  std::string name() const override { return "mock"; }

  const MockProfile& profile() const { return profile_; }

 private:
  MockProfile profile_;
  std::uint64_t fallback_seed_;
};

// ---------------------------------------------------------------------------
// Cassettes: keyed record/replay of probe responses.
// ---------------------------------------------------------------------------

struct CassetteMetadata {
  std::string battery;
  std::string manifest_digest;

  friend bool operator==(const CassetteMetadata&, const CassetteMetadata&) = default;
};

struct CassetteEntry {
  std::string request_digest;
  ProbeResponse response;

  friend bool operator==(const CassetteEntry&, const CassetteEntry&) = default;
};

namespace detail {

inline nlohmann::json response_to_json(const ProbeResponse& response) {
  nlohmann::json doc{{"text", response.text},
                     {"latency_ms", response.latency_ms},
                     {"backend", backend_to_string(response.backend)}};
  if (response.top_logprobs) {
    auto arr = nlohmann::json::array();
    for (const auto& entry : *response.top_logprobs) {
      arr.push_back({entry.token, entry.logprob});
    }
    doc["top_logprobs"] = std::move(arr);
  }
  return doc;
}

inline ProbeResponse response_from_json(const nlohmann::json& doc) {
  ProbeResponse response;
  response.text = doc.at("text").get<std::string>();
  response.latency_ms = doc.value("latency_ms", 0L);
  response.backend = backend_from_string(doc.value("backend", std::string("mock")));
  if (doc.contains("top_logprobs")) {
    std::vector<TokenLogprob> entries;
    for (const auto& pair : doc.at("top_logprobs")) {
      entries.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
    }
    response.top_logprobs = std::move(entries);
  }
  return response;
}

inline nlohmann::json tag_to_json(const ProbeTag& tag) {
  return {{"condition", tag.condition},
          {"statement", tag.statement},
          {"sample", tag.sample},
          {"attempt", tag.attempt}};
}

inline ProbeTag tag_from_json(const nlohmann::json& doc) {
  return {doc.at("condition").get<std::string>(),
          doc.at("statement").get<std::string>(), doc.at("sample").get<int>(),
          doc.at("attempt").get<int>()};
}

}  // namespace detail

/// Keyed map of recorded probes plus run metadata. Stored as one metadata
/// line followed by one JSON record per line.
class Cassette {
 public:
  Cassette() = default;
  explicit Cassette(CassetteMetadata metadata) : metadata_(std::move(metadata)) {}

  const CassetteMetadata& metadata() const { return metadata_; }
  std::size_t size() const { return entries_.size(); }

  void insert(const ProbeTag& tag, CassetteEntry entry) {
    auto [it, inserted] = entries_.emplace(tag, std::move(entry));
    if (!inserted) {
      throw CassetteError("duplicate cassette tag " + tag.display());
    }
  }

  const CassetteEntry* lookup(const ProbeTag& tag) const {
    auto it = entries_.find(tag);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<ProbeTag, CassetteEntry>& entries() const { return entries_; }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw CassetteError("cannot write cassette '" + path + "'");
    out << header_line() << '\n';
    for (const auto& [tag, entry] : entries_) {
      out << entry_line(tag, entry) << '\n';
    }
    if (!out) throw CassetteError("I/O failure writing cassette '" + path + "'");
  }

  static Cassette load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CassetteError("cannot open cassette '" + path + "'");
    Cassette cassette;
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
        throw CassetteError("cassette '" + path + "' line " +
                            std::to_string(line_no) + ": " + e.what());
      }
      if (!saw_header) {
        if (doc.value("kind", std::string{}) != "cassette") {
          throw CassetteError("cassette '" + path + "': missing header line");
        }
        cassette.metadata_.battery = doc.value("battery", std::string{});
        cassette.metadata_.manifest_digest =
            doc.value("manifest_digest", std::string{});
        saw_header = true;
        continue;
      }
      cassette.insert(detail::tag_from_json(doc.at("tag")),
                      {doc.at("request_digest").get<std::string>(),
                       detail::response_from_json(doc.at("response"))});
    }
    if (!saw_header) throw CassetteError("cassette '" + path + "' is empty");
    return cassette;
  }

  std::string header_line() const {
    nlohmann::json doc{{"kind", "cassette"},
                       {"battery", metadata_.battery},
                       {"manifest_digest", metadata_.manifest_digest}};
    return doc.dump();
  }

  static std::string entry_line(const ProbeTag& tag, const CassetteEntry& entry) {
    nlohmann::json doc{{"tag", detail::tag_to_json(tag)},
                       {"request_digest", entry.request_digest},
                       {"response", detail::response_to_json(entry.response)}};
    return doc.dump();
  }

 private:
  CassetteMetadata metadata_;
  std::map<ProbeTag, CassetteEntry> entries_;
};

/// Replays a recorded cassette; a missing tag or a drifted request is an error.
class ReplayProvider : public Provider {
 public:
  explicit ReplayProvider(Cassette cassette) : cassette_(std::move(cassette)) {}

  ProbeResponse send_probe(const ProbeRequest& request) override {
    const CassetteEntry* entry = cassette_.lookup(request.tag);
    if (entry == nullptr) {
      throw ReplayMissError("replay miss: tag " + request.tag.display() +
                            " not in cassette");
    }
    if (entry->request_digest != detail::request_digest(request)) {
      throw CassetteError("request digest mismatch for tag " + request.tag.display() +
                          " (cassette was recorded from a different request)");
    }
    ProbeResponse response = entry->response;
    response.backend = ProbeResponse::Backend::replay;
    return response;
  }

  std::string name() const override { return "replay"; }

  const Cassette& cassette() const { return cassette_; }

 private:
  Cassette cassette_;
};

/// Pass-through wrapper that appends every (tag -> response) to a cassette
/// file as it happens, so interrupted runs still leave usable recordings.
class RecordingProvider : public Provider {
 public:
  RecordingProvider(std::shared_ptr<Provider> inner, std::string path,
                    CassetteMetadata metadata)
      : inner_(std::move(inner)),
        cassette_(std::move(metadata)),
        out_(path, std::ios::trunc) {
    if (!out_) throw CassetteError("cannot write cassette '" + path + "'");
    out_ << cassette_.header_line() << '\n';
    out_.flush();
  }

  ProbeResponse send_probe(const ProbeRequest& request) override {
    ProbeResponse response = inner_->send_probe(request);
    std::lock_guard lock(mutex_);
    CassetteEntry entry{detail::request_digest(request), response};
    cassette_.insert(request.tag, entry);
    out_ << Cassette::entry_line(request.tag, entry) << '\n';
    out_.flush();
    if (!out_) throw CassetteError("I/O failure while recording cassette");
    return response;
  }

  std::string name() const override { return "record(" + inner_->name() + ")"; }

  const Cassette& cassette() const { return cassette_; }

 private:
  std::shared_ptr<Provider> inner_;
  Cassette cassette_;
  std::ofstream out_;
  std::mutex mutex_;
};

inline std::unique_ptr<Provider> record_wrap(std::shared_ptr<Provider> inner,
                                             const std::string& cassette_path,
                                             CassetteMetadata metadata = {}) {
  return std::make_unique<RecordingProvider>(std::move(inner), cassette_path,
                                             std::move(metadata));
}

// ---------------------------------------------------------------------------
// Live backend: OpenAI-compatible chat completions with rate cap and retry.
// ---------------------------------------------------------------------------

/// Injectable time source; tests drive a fake clock.
struct Clock {
  std::function<double()> now_seconds;
  std::function<void(double)> sleep_seconds;

  static Clock real() {
    return {
        [] {
          return std::chrono::duration<double>(
                     std::chrono::steady_clock::now().time_since_epoch())
              .count();
        },
        [](double seconds) {
          std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
        }};
  }
};

/// Sliding-window limiter: no 1-second window ever sees more than
/// ceil(requests_per_second) dispatches.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second, Clock clock = Clock::real())
      : cap_(static_cast<std::size_t>(std::ceil(requests_per_second))),
        clock_(std::move(clock)) {
    if (requests_per_second <= 0.0) {
      throw Error("rate limiter needs a positive requests-per-second cap");
    }
  }

  void acquire() {
    std::unique_lock lock(mutex_);
    for (;;) {
      const double now = clock_.now_seconds();
      while (!dispatches_.empty() && dispatches_.front() <= now - 1.0) {
        dispatches_.pop_front();
      }
      if (dispatches_.size() < cap_) {
        dispatches_.push_back(now);
        return;
      }
      const double wait = dispatches_.front() + 1.0 - now;
      lock.unlock();
      clock_.sleep_seconds(wait > 0.0 ? wait : 1e-4);
      lock.lock();
    }
  }

 private:
  std::size_t cap_;
  Clock clock_;
  std::deque<double> dispatches_;
  std::mutex mutex_;
};

struct RetryPolicy {
  int max_attempts = 5;
  double base_delay_seconds = 0.5;  // doubles per attempt
  double jitter_fraction = 0.2;     // +/- 20%
};

struct HttpResult {
  int status = 0;
  std::string body;
};

/// Transport boundary: posts one JSON body to the chat-completions endpoint.
/// Throws TransportError on connection-level failures.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& body) = 0;
};

struct LiveConfig {
  std::string model = "gpt-4o";
  double requests_per_second = 0.0;  // 0 disables the cap
  RetryPolicy retry;
};

class LiveProvider : public Provider {
 public:
  LiveProvider(std::shared_ptr<HttpTransport> transport, LiveConfig config,
               Clock clock = Clock::real(),
               std::uint64_t jitter_seed = std::random_device{}())
      : transport_(std::move(transport)),
        config_(std::move(config)),
        clock_(clock),
        jitter_rng_(jitter_seed) {
    if (config_.requests_per_second > 0.0) {
      limiter_.emplace(config_.requests_per_second, clock);
    }
  }

  ProbeResponse send_probe(const ProbeRequest& request) override {
    const std::string body = request_body(request).dump();
    const auto start = std::chrono::steady_clock::now();
    HttpResult result;
    for (int attempt = 0;; ++attempt) {
      if (limiter_) limiter_->acquire();
      bool retryable = false;
      std::string failure;
      try {
        result = transport_->post(body);
        if (result.status == 200) break;
        retryable = result.status == 429 || result.status >= 500;
        failure = "HTTP " + std::to_string(result.status);
      } catch (const TransportError& e) {
        retryable = true;
        failure = e.what();
      }
      if (!retryable || attempt + 1 >= config_.retry.max_attempts) {
        throw ProviderError("probe " + request.tag.display() + " failed after " +
                            std::to_string(attempt + 1) + " attempt(s): " + failure);
      }
      clock_.sleep_seconds(backoff_delay(attempt));
    }
    const auto elapsed = std::chrono::steady_clock::now() - start;

    ProbeResponse response = parse_completion(result.body, request);
    response.latency_ms = static_cast<long>(
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count());
    return response;
  }

  std::string name() const override { return "live"; }

  nlohmann::json request_body(const ProbeRequest& request) const {
    nlohmann::json body;
    body["model"] = config_.model;
    body["temperature"] = request.temperature;
    body["messages"] = nlohmann::json::array();
    for (const auto& message : request.messages) {
      body["messages"].push_back({{"role", detail::role_to_string(message.role)},
                                  {"content", message.content}});
    }
    if (request.want_logprobs) {
      body["logprobs"] = true;
      body["top_logprobs"] = 20;
    }
    return body;
  }

  static ProbeResponse parse_completion(const std::string& body,
                                        const ProbeRequest& request) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
      throw ProviderError("malformed provider payload for " + request.tag.display() +
                          ": not JSON");
    }
    try {
      ProbeResponse response;
      response.backend = ProbeResponse::Backend::live;
      const auto& choice = doc.at("choices").at(0);
      response.text = choice.at("message").at("content").get<std::string>();
      if (request.want_logprobs && choice.contains("logprobs") &&
          !choice.at("logprobs").is_null()) {
        std::vector<TokenLogprob> entries;
        const auto& content = choice.at("logprobs").at("content");
        if (!content.empty()) {
          for (const auto& item : content.at(0).at("top_logprobs")) {
            entries.push_back({item.at("token").get<std::string>(),
                               item.at("logprob").get<double>()});
            if (entries.size() == 20) break;
          }
        }
        response.top_logprobs = std::move(entries);
      }
      return response;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError("malformed provider payload for " + request.tag.display() +
                          ": " + e.what());
    }
  }

 private:
  double backoff_delay(int attempt) {
    double jitter;
    {
      std::lock_guard lock(jitter_mutex_);
      jitter = (jitter_rng_.next_unit() * 2.0 - 1.0) * config_.retry.jitter_fraction;
    }
    return config_.retry.base_delay_seconds * std::pow(2.0, attempt) * (1.0 + jitter);
  }

  std::shared_ptr<HttpTransport> transport_;
  LiveConfig config_;
  Clock clock_;
  std::optional<RateLimiter> limiter_;
  detail::SplitMix jitter_rng_;
  std::mutex jitter_mutex_;
};

}  // namespace biasaudit
