#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace biasaudit {

// ---------------------------------------------------------------------------
// Six-point agreement scale. Encoded values are the symmetric integers
// {-3,-2,-1,+1,+2,+3}: the scale has six levels and no neutral midpoint.
// ---------------------------------------------------------------------------

enum class LikertLabel {
  strongly_disagree,
  disagree,
  slightly_disagree,
  slightly_agree,
  agree,
  strongly_agree,
};

inline constexpr std::array<LikertLabel, 6> kLikertLevels = {
    LikertLabel::strongly_disagree, LikertLabel::disagree,
    LikertLabel::slightly_disagree, LikertLabel::slightly_agree,
    LikertLabel::agree,             LikertLabel::strongly_agree,
};

inline constexpr std::string_view likert_phrase(LikertLabel label) {
  switch (label) {
    case LikertLabel::strongly_disagree: return "strongly disagree";
    case LikertLabel::disagree:          return "disagree";
    case LikertLabel::slightly_disagree: return "slightly disagree";
    case LikertLabel::slightly_agree:    return "slightly agree";
    case LikertLabel::agree:             return "agree";
    case LikertLabel::strongly_agree:    return "strongly agree";
  }
  return {};
}

/// Base encoded value, before any reverse encoding.
inline constexpr int likert_base_value(LikertLabel label) {
  switch (label) {
    case LikertLabel::strongly_disagree: return -3;
    case LikertLabel::disagree:          return -2;
    case LikertLabel::slightly_disagree: return -1;
    case LikertLabel::slightly_agree:    return +1;
    case LikertLabel::agree:             return +2;
    case LikertLabel::strongly_agree:    return +3;
  }
  return 0;
}

/// Position on the numeric answer scale: strongly disagree (1) ... strongly agree (6).
inline constexpr int likert_numeric_index(LikertLabel label) {
  switch (label) {
    case LikertLabel::strongly_disagree: return 1;
    case LikertLabel::disagree:          return 2;
    case LikertLabel::slightly_disagree: return 3;
    case LikertLabel::slightly_agree:    return 4;
    case LikertLabel::agree:             return 5;
    case LikertLabel::strongly_agree:    return 6;
  }
  return 0;
}

inline constexpr std::optional<LikertLabel> likert_from_numeric_index(int index) {
  if (index < 1 || index > 6) return std::nullopt;
  return kLikertLevels[static_cast<std::size_t>(index - 1)];
}

struct EncodedScore {
  enum class Source { label, logprob_weighted };

  double value = 0.0;
  Source source = Source::label;

  friend bool operator==(const EncodedScore&, const EncodedScore&) = default;
};

/// Map a label to its encoded value; reverse-encoded statements negate.
inline EncodedScore encode_score(LikertLabel label, bool reverse_encoded) {
  double v = static_cast<double>(likert_base_value(label));
  return {reverse_encoded ? -v : v, EncodedScore::Source::label};
}

// ---------------------------------------------------------------------------
// Label extraction from free text.
// ---------------------------------------------------------------------------

namespace detail {

/// Lowercased alphanumeric words; punctuation acts as a separator.
inline std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

inline bool contains_word_seq(const std::vector<std::string>& words,
                              const std::vector<std::string>& seq) {
  if (seq.empty() || words.size() < seq.size()) return false;
  for (std::size_t i = 0; i + seq.size() <= words.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < seq.size(); ++j) {
      if (words[i + j] != seq[j]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

}  // namespace detail

/// Find a scale phrase in a completion. Phrases are tried longest first
/// ("slightly disagree" before "disagree" before "agree"), whole words only,
/// case-insensitive; the first phrase found wins. No phrase means refusal,
/// reported as nullopt.
inline std::optional<LikertLabel> parse_likert(std::string_view text) {
  const auto words = detail::normalize_words(text);
  // Two-word phrases first, ties broken disagree-side first; this order is
  // what makes embedded fragments like the "agree" inside "slightly
  // disagree" harmless.
  static const std::array<LikertLabel, 6> order = {
      LikertLabel::strongly_disagree, LikertLabel::slightly_disagree,
      LikertLabel::strongly_agree,    LikertLabel::slightly_agree,
      LikertLabel::disagree,          LikertLabel::agree,
  };
  for (LikertLabel label : order) {
    if (detail::contains_word_seq(words, detail::normalize_words(likert_phrase(label)))) {
      return label;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Structured <Opinion: ...> <Reason: ...> responses.
// ---------------------------------------------------------------------------

struct OpinionReason {
  LikertLabel opinion;
  std::string reason;        // verbatim, surrounding whitespace trimmed
  bool reason_missing = false;

  friend bool operator==(const OpinionReason&, const OpinionReason&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

/// Extract the opinion label and the verbatim reason from a structured
/// response. A missing or unparseable opinion field is a refusal (nullopt);
/// a missing reason yields the label with an empty reason and a flag.
inline std::optional<OpinionReason> parse_opinion_reason(const std::string& text) {
  static const std::regex opinion_re(R"(<\s*opinion\s*:([^<>]*)>)",
                                     std::regex::icase);
  static const std::regex reason_re(R"(<\s*reason\s*:([\s\S]*?)(>|$))",
                                    std::regex::icase);
  std::smatch m;
  if (!std::regex_search(text, m, opinion_re)) return std::nullopt;
  auto label = parse_likert(m[1].str());
  if (!label) return std::nullopt;

  OpinionReason result{*label, "", false};
  if (std::smatch rm; std::regex_search(text, rm, reason_re)) {
    result.reason = detail::trim(rm[1].str());
  } else {
    result.reason_missing = true;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Log-probability weighted scoring for the numeric answer scale.
// ---------------------------------------------------------------------------

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

enum class LogprobMapping {
  // Map each digit k to its encoded value e(k) in {-3,-2,-1,+1,+2,+3} and
  // average with the normalized probabilities.
  per_token,
  // Average the raw digits 1..6 first, then rescale linearly onto [-3, 3]
  // via y = (x - 3.5) * 6/5.
  post_average_linear,
};

namespace detail {

/// "1".."6" after trimming surrounding whitespace; anything else (including
/// "1." or "(1)") is not a scale token.
inline std::optional<int> scale_digit(std::string_view token) {
  std::size_t b = 0, e = token.size();
  while (b < e && std::isspace(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(token[e - 1]))) --e;
  if (e - b != 1) return std::nullopt;
  char c = token[b];
  if (c < '1' || c > '6') return std::nullopt;
  return c - '0';
}

}  // namespace detail

/// Score a completion from the top token log-probabilities of its first
/// generated position: keep the digit tokens, renormalize their
/// probabilities to sum to one, and average. No digit token means refusal.
/// Reverse encoding is the caller's job (negate the value).
inline std::optional<EncodedScore> logprob_score(
    std::span<const TokenLogprob> top_logprobs,
    LogprobMapping mapping = LogprobMapping::per_token) {
  if (top_logprobs.size() > 20) {
    throw std::invalid_argument("logprob_score: more than 20 entries");
  }
  std::array<double, 7> prob_by_digit{};  // index 1..6
  double total = 0.0;
  for (const auto& entry : top_logprobs) {
    if (auto digit = detail::scale_digit(entry.token)) {
      double p = std::exp(entry.logprob);
      prob_by_digit[static_cast<std::size_t>(*digit)] += p;
      total += p;
    }
  }
  if (total <= 0.0) return std::nullopt;

  double score = 0.0;
  if (mapping == LogprobMapping::per_token) {
    for (int digit = 1; digit <= 6; ++digit) {
      const double weight = prob_by_digit[static_cast<std::size_t>(digit)] / total;
      score += weight * likert_base_value(*likert_from_numeric_index(digit));
    }
  } else {
    double mean_digit = 0.0;
    for (int digit = 1; digit <= 6; ++digit) {
      mean_digit += prob_by_digit[static_cast<std::size_t>(digit)] / total * digit;
    }
    score = (mean_digit - 3.5) * 6.0 / 5.0;
  }
  return EncodedScore{score, EncodedScore::Source::logprob_weighted};
}

}  // namespace biasaudit
