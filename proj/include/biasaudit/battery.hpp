#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "biasaudit/encoding.hpp"
#include "biasaudit/errors.hpp"

namespace biasaudit {

// ---------------------------------------------------------------------------
// A battery bundles the two opposing value-statement sets, the identity
// prompts that can be assigned, and the debias instructions. Batteries are
// data: the bundled ones ship as JSON documents and go through the same
// loader and validation as user-supplied files.
// ---------------------------------------------------------------------------

struct Group {
  std::string tag;      // battery-local, e.g. "Dem", "woman"
  std::string display;

  friend bool operator==(const Group&, const Group&) = default;
};

enum class StatementVariant { original, group_keyword };

struct Statement {
  std::string id;
  std::string text;
  std::string group;            // one of the battery's two group tags
  bool reverse_encoded = false; // applied at scoring time, text stays verbatim
  StatementVariant variant = StatementVariant::original;

  friend bool operator==(const Statement&, const Statement&) = default;
};

enum class Alignment { group_a, group_b, neutral_reference, conflict };

enum class IdentityStyle { original, keyword, description, dictionary, literature, reference };

struct IdentityPrompt {
  std::string id;
  std::string text;
  Alignment alignment = Alignment::neutral_reference;
  IdentityStyle style = IdentityStyle::original;
  // For conflict prompts: the ordered pair of source identity ids.
  std::vector<std::string> conflict_of;

  friend bool operator==(const IdentityPrompt&, const IdentityPrompt&) = default;
};

enum class DebiasKind { Explicit, Implicit, Unbiased };

struct DebiasInstruction {
  std::string id;
  std::string text;
  DebiasKind kind = DebiasKind::Explicit;

  friend bool operator==(const DebiasInstruction&, const DebiasInstruction&) = default;
};

struct Battery {
  std::string name;
  std::string domain;
  std::vector<Group> groups;  // exactly two
  std::string system_prompt;  // the agreement-scale instruction
  std::vector<Statement> statements;
  std::vector<IdentityPrompt> identities;
  std::vector<DebiasInstruction> debias;

  const std::string& group_a() const { return groups[0].tag; }
  const std::string& group_b() const { return groups[1].tag; }

  /// Group tag an identity aligns with; empty for reference/conflict prompts.
  std::string aligned_group(const IdentityPrompt& identity) const {
    switch (identity.alignment) {
      case Alignment::group_a: return group_a();
      case Alignment::group_b: return group_b();
      default: return {};
    }
  }

  const Statement* find_statement(std::string_view id) const {
    for (const auto& s : statements) {
      if (s.id == id) return &s;
    }
    return nullptr;
  }

  const IdentityPrompt* find_identity(std::string_view id) const {
    for (const auto& i : identities) {
      if (i.id == id) return &i;
    }
    return nullptr;
  }

  const DebiasInstruction* find_debias(std::string_view id) const {
    for (const auto& d : debias) {
      if (d.id == id) return &d;
    }
    return nullptr;
  }

  std::size_t statement_count(std::string_view group) const {
    std::size_t n = 0;
    for (const auto& s : statements) {
      if (s.group == group) ++n;
    }
    return n;
  }

  friend bool operator==(const Battery&, const Battery&) = default;
};

// ---------------------------------------------------------------------------
// Enum <-> string for the file format.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string variant_to_string(StatementVariant v) {
  return v == StatementVariant::original ? "original" : "group_keyword";
}

inline StatementVariant variant_from_string(const std::string& s) {
  if (s == "original") return StatementVariant::original;
  if (s == "group_keyword") return StatementVariant::group_keyword;
  throw SchemaError("unknown statement variant '" + s + "'");
}

inline std::string style_to_string(IdentityStyle s) {
  switch (s) {
    case IdentityStyle::original:    return "original";
    case IdentityStyle::keyword:     return "keyword";
    case IdentityStyle::description: return "description";
    case IdentityStyle::dictionary:  return "dictionary";
    case IdentityStyle::literature:  return "literature";
    case IdentityStyle::reference:   return "reference";
  }
  return "original";
}

inline IdentityStyle style_from_string(const std::string& s) {
  if (s == "original")    return IdentityStyle::original;
  if (s == "keyword")     return IdentityStyle::keyword;
  if (s == "description") return IdentityStyle::description;
  if (s == "dictionary")  return IdentityStyle::dictionary;
  if (s == "literature")  return IdentityStyle::literature;
  if (s == "reference")   return IdentityStyle::reference;
  throw SchemaError("unknown identity style '" + s + "'");
}

inline std::string kind_to_string(DebiasKind k) {
  switch (k) {
    case DebiasKind::Explicit: return "explicit";
    case DebiasKind::Implicit: return "implicit";
    case DebiasKind::Unbiased: return "unbiased";
  }
  return "explicit";
}

inline DebiasKind kind_from_string(const std::string& s) {
  if (s == "explicit") return DebiasKind::Explicit;
  if (s == "implicit") return DebiasKind::Implicit;
  if (s == "unbiased") return DebiasKind::Unbiased;
  throw SchemaError("unknown debias kind '" + s + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Validation.
// ---------------------------------------------------------------------------

/// Check every battery invariant; throws SchemaError naming the offending
/// field.
inline void validate_battery(const Battery& battery) {
  if (battery.name.empty()) throw SchemaError("battery name must be non-empty");
  if (battery.groups.size() != 2) {
    throw SchemaError("exactly two groups required, got " +
                      std::to_string(battery.groups.size()));
  }
  for (const auto& group : battery.groups) {
    if (group.tag.empty()) throw SchemaError("group tag must be non-empty");
  }
  if (battery.groups[0].tag == battery.groups[1].tag) {
    throw SchemaError("group tags must differ, both are '" + battery.groups[0].tag + "'");
  }

  for (LikertLabel label : kLikertLevels) {
    const auto words = detail::normalize_words(battery.system_prompt);
    const std::string phrase(likert_phrase(label));
    const auto phrase_words = detail::normalize_words(phrase);
    bool found = false;
    for (std::size_t i = 0; i + phrase_words.size() <= words.size() && !found; ++i) {
      found = std::equal(phrase_words.begin(), phrase_words.end(), words.begin() + i);
    }
    if (!found) {
      throw SchemaError("system_prompt is missing the scale label '" + phrase + "'");
    }
  }

  if (battery.statements.empty()) throw SchemaError("battery has no statements");
  std::vector<std::string> seen_ids;
  for (const auto& statement : battery.statements) {
    if (statement.id.empty()) throw SchemaError("statement id must be non-empty");
    if (statement.text.empty()) {
      throw SchemaError("statement '" + statement.id + "' has empty text");
    }
    if (std::find(seen_ids.begin(), seen_ids.end(), statement.id) != seen_ids.end()) {
      throw SchemaError("duplicate statement id '" + statement.id + "'");
    }
    seen_ids.push_back(statement.id);
    if (statement.group != battery.group_a() && statement.group != battery.group_b()) {
      throw SchemaError("statement '" + statement.id + "' references undeclared group '" +
                        statement.group + "'");
    }
  }
  for (const auto& group : battery.groups) {
    if (battery.statement_count(group.tag) == 0) {
      throw SchemaError("group '" + group.tag + "' has no statements");
    }
  }

  std::vector<std::string> prompt_ids;
  for (const auto& identity : battery.identities) {
    if (identity.id.empty()) throw SchemaError("identity id must be non-empty");
    if (identity.text.empty()) {
      throw SchemaError("identity '" + identity.id + "' has empty text");
    }
    if (std::find(prompt_ids.begin(), prompt_ids.end(), identity.id) != prompt_ids.end()) {
      throw SchemaError("duplicate identity id '" + identity.id + "'");
    }
    prompt_ids.push_back(identity.id);
    if (identity.alignment == Alignment::conflict && identity.conflict_of.size() != 2) {
      throw SchemaError("conflict identity '" + identity.id +
                        "' must record its ordered source pair");
    }
  }
  for (const auto& instruction : battery.debias) {
    if (instruction.id.empty()) throw SchemaError("debias id must be non-empty");
    if (instruction.text.empty()) {
      throw SchemaError("debias '" + instruction.id + "' has empty text");
    }
    if (std::find(prompt_ids.begin(), prompt_ids.end(), instruction.id) != prompt_ids.end()) {
      throw SchemaError("debias id '" + instruction.id +
                        "' collides with another prompt id");
    }
    prompt_ids.push_back(instruction.id);
  }
}

// ---------------------------------------------------------------------------
// JSON (de)serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json serialize_battery(const Battery& battery) {
  nlohmann::json doc;
  doc["name"] = battery.name;
  doc["domain"] = battery.domain;
  doc["system_prompt"] = battery.system_prompt;
  doc["groups"] = nlohmann::json::array();
  for (const auto& group : battery.groups) {
    doc["groups"].push_back({{"tag", group.tag}, {"display", group.display}});
  }
  doc["statements"] = nlohmann::json::array();
  for (const auto& statement : battery.statements) {
    doc["statements"].push_back({{"id", statement.id},
                                 {"text", statement.text},
                                 {"group", statement.group},
                                 {"reverse_encoded", statement.reverse_encoded},
                                 {"variant", detail::variant_to_string(statement.variant)}});
  }
  doc["identities"] = nlohmann::json::array();
  for (const auto& identity : battery.identities) {
    nlohmann::json entry{{"id", identity.id}, {"text", identity.text},
                         {"style", detail::style_to_string(identity.style)}};
    switch (identity.alignment) {
      case Alignment::group_a: entry["alignment"] = battery.group_a(); break;
      case Alignment::group_b: entry["alignment"] = battery.group_b(); break;
      case Alignment::neutral_reference: entry["alignment"] = "reference"; break;
      case Alignment::conflict:
        entry["alignment"] = "conflict";
        entry["conflict_of"] = identity.conflict_of;
        break;
    }
    doc["identities"].push_back(std::move(entry));
  }
  doc["debias"] = nlohmann::json::array();
  for (const auto& instruction : battery.debias) {
    doc["debias"].push_back({{"id", instruction.id},
                             {"text", instruction.text},
                             {"kind", detail::kind_to_string(instruction.kind)}});
  }
  return doc;
}

namespace detail {

template <typename T>
T required_field(const nlohmann::json& obj, const char* key, const char* context) {
  if (!obj.contains(key)) {
    throw SchemaError(std::string(context) + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string(context) + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Parse and validate a battery document.
inline Battery load_battery_from_json(const nlohmann::json& doc) {
  Battery battery;
  battery.name = detail::required_field<std::string>(doc, "name", "battery");
  battery.domain = doc.value("domain", std::string{});
  battery.system_prompt =
      detail::required_field<std::string>(doc, "system_prompt", "battery");

  const auto groups = detail::required_field<nlohmann::json>(doc, "groups", "battery");
  if (!groups.is_array() || groups.size() != 2) {
    throw SchemaError("exactly two groups required, got " +
                      std::to_string(groups.is_array() ? groups.size() : 0));
  }
  for (const auto& entry : groups) {
    battery.groups.push_back({detail::required_field<std::string>(entry, "tag", "group"),
                              entry.value("display", std::string{})});
  }

  for (const auto& entry :
       detail::required_field<nlohmann::json>(doc, "statements", "battery")) {
    Statement statement;
    statement.id = detail::required_field<std::string>(entry, "id", "statement");
    statement.text = detail::required_field<std::string>(entry, "text", "statement");
    statement.group = detail::required_field<std::string>(entry, "group", "statement");
    statement.reverse_encoded = entry.value("reverse_encoded", false);
    statement.variant =
        detail::variant_from_string(entry.value("variant", std::string("original")));
    battery.statements.push_back(std::move(statement));
  }

  if (doc.contains("identities")) {
    for (const auto& entry : doc.at("identities")) {
      IdentityPrompt identity;
      identity.id = detail::required_field<std::string>(entry, "id", "identity");
      identity.text = detail::required_field<std::string>(entry, "text", "identity");
      identity.style =
          detail::style_from_string(entry.value("style", std::string("original")));
      const auto alignment =
          detail::required_field<std::string>(entry, "alignment", "identity");
      if (alignment == battery.groups[0].tag) {
        identity.alignment = Alignment::group_a;
      } else if (alignment == battery.groups[1].tag) {
        identity.alignment = Alignment::group_b;
      } else if (alignment == "reference") {
        identity.alignment = Alignment::neutral_reference;
      } else if (alignment == "conflict") {
        identity.alignment = Alignment::conflict;
        identity.conflict_of =
            entry.value("conflict_of", std::vector<std::string>{});
      } else {
        throw SchemaError("identity '" + identity.id + "' has unknown alignment '" +
                          alignment + "'");
      }
      battery.identities.push_back(std::move(identity));
    }
  }

  if (doc.contains("debias")) {
    for (const auto& entry : doc.at("debias")) {
      battery.debias.push_back(
          {detail::required_field<std::string>(entry, "id", "debias"),
           detail::required_field<std::string>(entry, "text", "debias"),
           detail::kind_from_string(
               detail::required_field<std::string>(entry, "kind", "debias"))});
    }
  }

  validate_battery(battery);
  return battery;
}

inline Battery load_battery_from_text(std::string_view text,
                                      std::string_view origin = "<inline>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("battery '" + std::string(origin) + "': " + e.what());
  }
  return load_battery_from_json(doc);
}

inline Battery load_battery(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open battery file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_battery_from_text(buffer.str(), path);
}

// ---------------------------------------------------------------------------
// Conflicting identities: concatenation of two identity prompts.
// ---------------------------------------------------------------------------

inline IdentityPrompt make_conflict_identity(const IdentityPrompt& first,
                                             const IdentityPrompt& second) {
  if (first.id == second.id) {
    throw Error("make_conflict_identity: identical ids '" + first.id + "'");
  }
  if (first.alignment == Alignment::conflict || second.alignment == Alignment::conflict) {
    throw Error("make_conflict_identity: inputs must not already be conflicts");
  }
  IdentityPrompt result;
  result.id = first.id + "+" + second.id;
  result.text = first.text + " " + second.text;
  result.alignment = Alignment::conflict;
  result.style = first.style;
  result.conflict_of = {first.id, second.id};
  return result;
}

}  // namespace biasaudit
