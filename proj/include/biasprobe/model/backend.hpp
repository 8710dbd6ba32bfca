#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "biasprobe/core.hpp"
#include "biasprobe/model/tokenizer.hpp"

namespace biasprobe::model {

struct BackendCapabilities {
  bool has_attention = false;
  bool has_override = false;
  bool has_logprobs = false;
};

/// The contract every model backend fulfils. Implementations are immutable
/// after construction; all methods are safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendCapabilities capabilities() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string model_id() const = 0;

  /// Tokenise with the tokenizer this backend consumes (ws-v1 for both
  /// built-in backends).
  virtual Text tokenize(std::string_view raw) const { return model::tokenize(raw); }

  virtual EmbeddingVector embed(const Text& text) const = 0;
  virtual ContinuationScore continuation_probability(const Text& prompt, const Text& continuation) const = 0;
  virtual AttentionTensor attentions(const Text& text) const = 0;
  virtual EmbeddingVector embed_with_attention_override(const Text& text, const AttentionTensor& override) const = 0;

 protected:
  [[noreturn]] void unsupported(std::string_view what) const {
    throw Error(ErrorKind::Unsupported, "backend '" + model_id() + "' does not support " + std::string(what));
  }
};

}  // namespace biasprobe::model
