#pragma once

// Tensor-bundle files: JSON Lines, one header record followed by one record
// per text. The file backend serves those records read-only.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "biasprobe/model/backend.hpp"

namespace biasprobe::model {

inline constexpr int kBundleVersion = 1;

struct BundleItem {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> embedding;
  /// Log-probability of each token given its prefix. Producers may omit the
  /// first token (no prefix); lookups only ever read the trailing entries.
  std::optional<std::vector<double>> token_logprobs;
  std::optional<AttentionTensor> attention;
};

struct BundleHeader {
  std::size_t dim = 0;
  std::string tokenizer{kTokenizerName};
  std::string model_id;
};

inline nlohmann::json attention_to_json(const AttentionTensor& a) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < a.layers(); ++l) {
    nlohmann::json heads = nlohmann::json::array();
    for (std::size_t h = 0; h < a.heads(); ++h) {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < a.n(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < a.n(); ++j) row.push_back(a.at(l, h, i, j));
        rows.push_back(std::move(row));
      }
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  return layers;
}

inline void write_bundle(std::ostream& out, const BundleHeader& header, const std::vector<BundleItem>& items) {
  nlohmann::json h = {{"kind", "header"},
                      {"version", kBundleVersion},
                      {"dim", header.dim},
                      {"tokenizer", header.tokenizer},
                      {"model_id", header.model_id}};
  out << h.dump() << '\n';
  for (const auto& item : items) {
    if (item.embedding.size() != header.dim)
      throw Error(ErrorKind::ShapeMismatch, "item '" + item.id + "' embedding does not match header dim");
    nlohmann::json j = {{"kind", "item"},
                        {"id", item.id},
                        {"text", item.text},
                        {"tokens", item.tokens},
                        {"embedding", item.embedding}};
    if (item.token_logprobs) j["token_logprobs"] = *item.token_logprobs;
    if (item.attention) j["attention"] = attention_to_json(*item.attention);
    out << j.dump() << '\n';
  }
}

inline void write_bundle(const std::filesystem::path& path, const BundleHeader& header,
                         const std::vector<BundleItem>& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  write_bundle(out, header, items);
  if (!out) throw Error(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

namespace detail {

inline std::vector<double> read_numbers(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::FormatError, what + " is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorKind::FormatError, what + " contains a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

inline AttentionTensor read_attention(const nlohmann::json& j, std::size_t n) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::FormatError, "attention must be a non-empty [layer] array");
  const std::size_t layers = j.size();
  if (!j[0].is_array() || j[0].empty()) throw Error(ErrorKind::FormatError, "attention must be [layer][head]");
  const std::size_t heads = j[0].size();
  std::vector<double> flat;
  flat.reserve(layers * heads * n * n);
  for (const auto& layer : j) {
    if (!layer.is_array() || layer.size() != heads)
      throw Error(ErrorKind::FormatError, "attention head count differs between layers");
    for (const auto& head : layer) {
      if (!head.is_array() || head.size() != n) throw Error(ErrorKind::FormatError, "attention rows != token count");
      for (const auto& row : head) {
        auto values = read_numbers(row, "attention row");
        if (values.size() != n) throw Error(ErrorKind::FormatError, "attention columns != token count");
        flat.insert(flat.end(), values.begin(), values.end());
      }
    }
  }
  try {
    return AttentionTensor(layers, heads, n, std::move(flat));
  } catch (const Error& e) {
    throw Error(ErrorKind::FormatError, "invalid attention tensor: " + e.message());
  }
}

}  // namespace detail

/// Read-only backend over a parsed bundle. Lookups are by item id or by the
/// exact raw text; attention override is never offered.
class BundleBackend final : public Backend {
 public:
  BundleBackend(BundleHeader header, std::vector<BundleItem> items) : header_(std::move(header)), items_(std::move(items)) {
    bool all_attention = !items_.empty();
    bool all_logprobs = !items_.empty();
    for (std::size_t i = 0; i < items_.size(); ++i) {
      const auto& item = items_[i];
      if (item.embedding.size() != header_.dim)
        throw Error(ErrorKind::FormatError, "item '" + item.id + "' has embedding length " +
                                                std::to_string(item.embedding.size()) + ", header dim is " +
                                                std::to_string(header_.dim));
      if (!by_id_.emplace(item.id, i).second) throw Error(ErrorKind::FormatError, "duplicate item id '" + item.id + "'");
      by_text_.emplace(item.text, i);
      all_attention = all_attention && item.attention.has_value();
      all_logprobs = all_logprobs && item.token_logprobs.has_value();
    }
    caps_ = {all_attention, false, all_logprobs};
  }

  BackendCapabilities capabilities() const override { return caps_; }
  std::size_t dim() const override { return header_.dim; }
  std::string model_id() const override { return header_.model_id; }
  const BundleHeader& header() const noexcept { return header_; }
  const std::vector<BundleItem>& items() const noexcept { return items_; }

  const BundleItem& item_by_id(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw Error(ErrorKind::NotFound, "no bundle item with id '" + id + "'");
    return items_[it->second];
  }

  const BundleItem& item_by_text(const std::string& raw) const {
    auto it = by_text_.find(raw);
    if (it == by_text_.end()) throw Error(ErrorKind::NotFound, "no bundle item for text '" + raw + "'");
    return items_[it->second];
  }

  EmbeddingVector embed_id(const std::string& id) const { return EmbeddingVector(item_by_id(id).embedding); }

  EmbeddingVector embed(const Text& text) const override { return EmbeddingVector(item_by_text(text.raw()).embedding); }

  AttentionTensor attentions(const Text& text) const override {
    if (!caps_.has_attention) unsupported("attention");
    return *item_by_text(text.raw()).attention;
  }

  EmbeddingVector embed_with_attention_override(const Text&, const AttentionTensor&) const override {
    unsupported("attention override");
  }

  /// Reads the item whose text is "<prompt> <continuation>" and sums the
  /// trailing continuation-length log-probabilities.
  ContinuationScore continuation_probability(const Text& prompt, const Text& continuation) const override {
    if (!caps_.has_logprobs) unsupported("log-probabilities");
    const auto& item = item_by_text(prompt.raw() + " " + continuation.raw());
    const auto& lps = *item.token_logprobs;
    const std::size_t m = continuation.token_count();
    if (lps.size() < m)
      throw Error(ErrorKind::FormatError, "item '" + item.id + "' has fewer log-probabilities than continuation tokens");
    return ContinuationScore(prompt, continuation, std::vector<double>(lps.end() - static_cast<std::ptrdiff_t>(m), lps.end()));
  }

 private:
  BundleHeader header_;
  std::vector<BundleItem> items_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> by_text_;
  BackendCapabilities caps_;
};

inline BundleBackend parse_bundle(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> Error {
    return Error(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": " + msg);
  };

  BundleHeader header;
  bool have_header = false;
  std::vector<BundleItem> items;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw fail("record is not an object");
    try {
      if (!have_header) {
        if (j.value("kind", "") != "header") throw fail("first record is not a header");
        if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kBundleVersion)
          throw fail("unsupported or missing header version");
        if (!j.contains("dim") || !j["dim"].is_number_integer() || j["dim"].get<long long>() <= 0)
          throw fail("header dim missing or not a positive integer");
        header.dim = j["dim"].get<std::size_t>();
        header.tokenizer = j.value("tokenizer", std::string(kTokenizerName));
        header.model_id = j.value("model_id", std::string{});
        have_header = true;
        continue;
      }
      if (j.value("kind", "") != "item") throw fail("expected an item record");
      BundleItem item;
      item.id = j.at("id").get<std::string>();
      item.text = j.at("text").get<std::string>();
      item.tokens = j.at("tokens").get<std::vector<std::string>>();
      if (item.tokens.empty()) throw fail("item '" + item.id + "' has no tokens");
      item.embedding = detail::read_numbers(j.at("embedding"), "embedding");
      if (item.embedding.size() != header.dim)
        throw fail("item '" + item.id + "' has embedding length " + std::to_string(item.embedding.size()) +
                   ", header dim is " + std::to_string(header.dim));
      if (j.contains("token_logprobs")) item.token_logprobs = detail::read_numbers(j["token_logprobs"], "token_logprobs");
      if (j.contains("attention")) item.attention = detail::read_attention(j["attention"], item.tokens.size());
      items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("malformed record: ") + e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::FormatError) throw;
      throw fail(e.message());
    }
  }
  if (!have_header) throw Error(ErrorKind::FormatError, source + ": missing header record");
  return BundleBackend(std::move(header), std::move(items));
}

inline BundleBackend load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open bundle '" + path.string() + "'");
  return parse_bundle(in, path.string());
}

}  // namespace biasprobe::model
