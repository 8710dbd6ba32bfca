#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "biasprobe/core.hpp"

namespace biasprobe::model {

inline constexpr std::string_view kTokenizerName = "ws-v1";

/// ws-v1: ASCII-lowercase, split on whitespace, every ASCII punctuation
/// character becomes its own token.
inline std::vector<std::string> split_tokens(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

inline Text tokenize(std::string_view raw) {
  auto tokens = split_tokens(raw);
  if (tokens.empty()) throw Error(ErrorKind::InvalidInput, "input is empty after trimming");
  return Text(std::string(raw), std::move(tokens));
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::size_t token_id(std::string_view token, std::size_t vocab_size) noexcept {
  return static_cast<std::size_t>(fnv1a64(token) % vocab_size);
}

inline std::vector<std::size_t> token_ids(const Text& text, std::size_t vocab_size) {
  std::vector<std::size_t> ids;
  ids.reserve(text.token_count());
  for (const auto& t : text.tokens()) ids.push_back(token_id(t, vocab_size));
  return ids;
}

}  // namespace biasprobe::model
