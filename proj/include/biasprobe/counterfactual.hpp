#pragma once

// Attribute-swapped control inputs: template instantiation over attribute
// lexicons, the template x category cross product, and attribute-token lookup.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "biasprobe/core.hpp"
#include "biasprobe/model/tokenizer.hpp"

namespace biasprobe::counterfactual {

class LexiconPack {
 public:
  LexiconPack(std::vector<AttributeCategory> categories, std::string source)
      : categories_(std::move(categories)), source_(std::move(source)) {
    std::set<std::string> names;
    for (const auto& c : categories_)
      if (!names.insert(c.name()).second)
        throw Error(ErrorKind::InvalidInput, "duplicate category '" + c.name() + "' in lexicon pack " + source_);
  }

  const std::vector<AttributeCategory>& categories() const noexcept { return categories_; }
  const std::string& source() const noexcept { return source_; }

  const AttributeCategory* find(const std::string& name) const {
    for (const auto& c : categories_)
      if (c.name() == name) return &c;
    return nullptr;
  }

  const AttributeCategory& at(const std::string& name) const {
    if (const auto* c = find(name)) return *c;
    throw Error(ErrorKind::NotFound, "no category '" + name + "' in lexicon pack " + source_);
  }

 private:
  std::vector<AttributeCategory> categories_;
  std::string source_;
};

inline CounterfactualGroup instantiate(const PromptTemplate& tmpl, const AttributeCategory& category) {
  if (category.terms().size() < 2)
    throw Error(ErrorKind::InsufficientAttributes,
                "category '" + category.name() + "' has " + std::to_string(category.terms().size()) + " term(s)");
  const std::string& pattern = tmpl.pattern();
  const auto prefix = model::split_tokens(std::string_view(pattern).substr(0, tmpl.slot_offset()));
  const auto suffix = model::split_tokens(std::string_view(pattern).substr(tmpl.slot_offset() + kSlotMarker.size()));

  std::vector<CounterfactualMember> members;
  members.reserve(category.terms().size());
  for (const auto& t : category.terms()) {
    const auto term_tokens = model::split_tokens(t.term);
    if (term_tokens.empty()) throw Error(ErrorKind::InvalidInput, "term '" + t.term + "' has no tokens");
    Text text = model::tokenize(tmpl.fill(t.term));

    std::vector<std::string> expected = prefix;
    expected.insert(expected.end(), term_tokens.begin(), term_tokens.end());
    expected.insert(expected.end(), suffix.begin(), suffix.end());
    if (expected != text.tokens())
      throw Error(ErrorKind::InvalidTemplate,
                  "slot in template '" + tmpl.id() + "' is not token-delimited for term '" + t.term + "'");

    std::vector<TokenIndex> positions(term_tokens.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = prefix.size() + i;
    members.push_back({t.term, std::move(text), std::move(positions)});
  }
  return CounterfactualGroup(tmpl.id(), category.name(), std::move(members));
}

/// One group per (template, category), template-major order.
inline std::vector<CounterfactualGroup> nested_controls(const std::vector<PromptTemplate>& templates,
                                                        const LexiconPack& pack) {
  std::vector<CounterfactualGroup> groups;
  groups.reserve(templates.size() * pack.categories().size());
  for (const auto& t : templates) {
    for (const auto& c : pack.categories()) {
      try {
        groups.push_back(instantiate(t, c));
      } catch (const Error& e) {
        rethrow_with_context(e, "template '" + t.id() + "', category '" + c.name() + "'");
      }
    }
  }
  return groups;
}

namespace detail {

struct TermMatch {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t term_index = 0;
};

/// Term token sequences ordered longest-first, stable within equal lengths.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> terms_by_length(const AttributeCategory& category) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> out;
  for (std::size_t i = 0; i < category.terms().size(); ++i) {
    auto toks = model::split_tokens(category.terms()[i].term);
    if (!toks.empty()) out.emplace_back(i, std::move(toks));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });
  return out;
}

inline std::vector<TermMatch> match_terms(const std::vector<std::string>& tokens, const AttributeCategory& category) {
  const auto terms = terms_by_length(category);
  std::vector<TermMatch> matches;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    for (const auto& [index, term] : terms) {
      if (i + term.size() > tokens.size()) continue;
      if (std::equal(term.begin(), term.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        matches.push_back({i, term.size(), index});
        i += term.size();
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return matches;
}

}  // namespace detail

/// Token indices covered by lexicon terms, matched case-insensitively with
/// maximal munch (longest term wins at each start index).
inline std::vector<TokenIndex> locate_attribute_positions(const Text& text, const AttributeCategory& category) {
  std::vector<TokenIndex> positions;
  for (const auto& m : detail::match_terms(text.tokens(), category))
    for (std::size_t k = 0; k < m.length; ++k) positions.push_back(m.start + k);
  return positions;
}

/// The first lexicon term found in `text` (categories in pack order) replaced
/// by the next term of its category that belongs to a different group, or
/// the next term when every term shares a group. The result is rebuilt from
/// tokens joined by single spaces. nullopt when no term occurs.
inline std::optional<Text> attribute_swap(const Text& text, const LexiconPack& pack) {
  for (const auto& category : pack.categories()) {
    const auto matches = detail::match_terms(text.tokens(), category);
    if (matches.empty() || category.terms().size() < 2) continue;
    const auto& m = matches.front();
    const auto& terms = category.terms();
    std::size_t pick = (m.term_index + 1) % terms.size();
    for (std::size_t step = 1; step < terms.size(); ++step) {
      const std::size_t k = (m.term_index + step) % terms.size();
      if (terms[k].group != terms[m.term_index].group) {
        pick = k;
        break;
      }
    }
    std::vector<std::string> tokens(text.tokens().begin(), text.tokens().begin() + static_cast<std::ptrdiff_t>(m.start));
    for (auto& t : model::split_tokens(terms[pick].term)) tokens.push_back(std::move(t));
    tokens.insert(tokens.end(), text.tokens().begin() + static_cast<std::ptrdiff_t>(m.start + m.length),
                  text.tokens().end());
    std::string raw;
    for (const auto& t : tokens) {
      if (!raw.empty()) raw += ' ';
      raw += t;
    }
    return Text(std::move(raw), std::move(tokens));
  }
  return std::nullopt;
}

// --- file formats -----------------------------------------------------------

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
}

inline LexiconPack lexicon_pack_from_json(const nlohmann::json& j, const std::string& source) {
  try {
    std::vector<AttributeCategory> cats;
    for (const auto& c : j.at("categories")) {
      std::vector<AttributeTerm> terms;
      for (const auto& t : c.at("terms")) terms.push_back({t.at("term").get<std::string>(), t.at("group").get<std::string>()});
      cats.emplace_back(c.at("name").get<std::string>(), std::move(terms));
    }
    return LexiconPack(std::move(cats), source);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, source + ": malformed lexicon pack: " + e.what());
  }
}

inline nlohmann::json lexicon_pack_to_json(const LexiconPack& pack) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : pack.categories()) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : c.terms()) terms.push_back({{"term", t.term}, {"group", t.group}});
    cats.push_back({{"name", c.name()}, {"terms", std::move(terms)}});
  }
  return {{"categories", std::move(cats)}};
}

inline std::vector<PromptTemplate> templates_from_json(const nlohmann::json& j, const std::string& source) {
  try {
    std::vector<PromptTemplate> out;
    for (const auto& t : j.at("templates")) out.emplace_back(t.at("id").get<std::string>(), t.at("pattern").get<std::string>());
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, source + ": malformed template pack: " + e.what());
  }
}

inline nlohmann::json templates_to_json(const std::vector<PromptTemplate>& templates) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : templates) arr.push_back({{"id", t.id()}, {"pattern", t.pattern()}});
  return {{"templates", std::move(arr)}};
}

inline LexiconPack load_lexicon_pack(const std::filesystem::path& path) {
  return lexicon_pack_from_json(read_json_file(path), path.string());
}

inline std::vector<PromptTemplate> load_templates(const std::filesystem::path& path) {
  return templates_from_json(read_json_file(path), path.string());
}

inline nlohmann::json group_to_json(const CounterfactualGroup& g) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : g.members())
    members.push_back({{"term", m.term}, {"text", m.text.raw()}, {"tokens", m.text.tokens()},
                       {"attribute_positions", m.attribute_positions}});
  return {{"template_id", g.template_id()}, {"category", g.category()}, {"members", std::move(members)}};
}

}  // namespace biasprobe::counterfactual
