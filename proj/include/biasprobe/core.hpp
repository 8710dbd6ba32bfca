#pragma once

// Domain types shared across the library. Every type validates its invariants
// on construction and is immutable afterwards.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasprobe/error.hpp"

namespace biasprobe {

inline constexpr double kRowSumTolerance = 1e-9;
inline constexpr double kDistributionTolerance = 1e-9;
inline constexpr std::string_view kSlotMarker = "{attr}";

using TokenIndex = std::size_t;

/// A raw string together with its ws-v1 tokenization. Build through
/// `tokenize()`; the constructor only checks the structural invariant.
class Text {
 public:
  Text(std::string raw, std::vector<std::string> tokens) : raw_(std::move(raw)), tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw Error(ErrorKind::InvalidInput, "text has no tokens: '" + raw_ + "'");
  }

  const std::string& raw() const noexcept { return raw_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t token_count() const noexcept { return tokens_.size(); }

  friend bool operator==(const Text&, const Text&) = default;

 private:
  std::string raw_;
  std::vector<std::string> tokens_;
};

struct AttributeTerm {
  std::string term;
  std::string group;

  friend bool operator==(const AttributeTerm&, const AttributeTerm&) = default;
};

class AttributeCategory {
 public:
  AttributeCategory(std::string name, std::vector<AttributeTerm> terms) : name_(std::move(name)), terms_(std::move(terms)) {
    if (terms_.empty()) throw Error(ErrorKind::InvalidInput, "attribute category '" + name_ + "' has no terms");
    std::set<std::string> seen;
    for (const auto& t : terms_) {
      if (t.term.empty()) throw Error(ErrorKind::InvalidInput, "empty term in category '" + name_ + "'");
      if (!seen.insert(t.term).second)
        throw Error(ErrorKind::InvalidInput, "duplicate term '" + t.term + "' in category '" + name_ + "'");
    }
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<AttributeTerm>& terms() const noexcept { return terms_; }

  friend bool operator==(const AttributeCategory&, const AttributeCategory&) = default;

 private:
  std::string name_;
  std::vector<AttributeTerm> terms_;
};

class PromptTemplate {
 public:
  PromptTemplate(std::string id, std::string pattern) : id_(std::move(id)), pattern_(std::move(pattern)) {
    const auto first = pattern_.find(kSlotMarker);
    if (first == std::string::npos)
      throw Error(ErrorKind::InvalidTemplate, "template '" + id_ + "' has no {attr} slot");
    if (pattern_.find(kSlotMarker, first + kSlotMarker.size()) != std::string::npos)
      throw Error(ErrorKind::InvalidTemplate, "template '" + id_ + "' has more than one {attr} slot");
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& pattern() const noexcept { return pattern_; }
  std::size_t slot_offset() const noexcept { return pattern_.find(kSlotMarker); }

  std::string fill(std::string_view term) const {
    std::string out = pattern_;
    out.replace(slot_offset(), kSlotMarker.size(), term);
    return out;
  }

 private:
  std::string id_;
  std::string pattern_;
};

struct CounterfactualMember {
  std::string term;
  Text text;
  std::vector<TokenIndex> attribute_positions;
};

class CounterfactualGroup {
 public:
  CounterfactualGroup(std::string template_id, std::string category, std::vector<CounterfactualMember> members)
      : template_id_(std::move(template_id)), category_(std::move(category)), members_(std::move(members)) {
    if (members_.size() < 2)
      throw Error(ErrorKind::InsufficientAttributes, "counterfactual group '" + template_id_ + "' needs >= 2 members");
    for (const auto& m : members_)
      for (auto p : m.attribute_positions)
        if (p >= m.text.token_count())
          throw Error(ErrorKind::IndexError, "attribute position out of range in group '" + template_id_ + "'");
  }

  const std::string& template_id() const noexcept { return template_id_; }
  const std::string& category() const noexcept { return category_; }
  const std::vector<CounterfactualMember>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }

 private:
  std::string template_id_;
  std::string category_;
  std::vector<CounterfactualMember> members_;
};

class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorKind::InvalidInput, "embedding has dimension 0");
    for (double v : values_)
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "embedding has a non-finite entry");
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

class ContinuationScore {
 public:
  ContinuationScore(Text prompt, Text continuation, std::vector<double> token_logprobs)
      : prompt_(std::move(prompt)), continuation_(std::move(continuation)), token_logprobs_(std::move(token_logprobs)) {
    double sum = 0.0;
    for (double lp : token_logprobs_) {
      if (std::isnan(lp) || lp > 0.0) throw Error(ErrorKind::InvalidProbability, "token log-probability must be <= 0");
      sum += lp;
    }
    total_prob_ = std::exp(sum);
  }

  const Text& prompt() const noexcept { return prompt_; }
  const Text& continuation() const noexcept { return continuation_; }
  const std::vector<double>& token_logprobs() const noexcept { return token_logprobs_; }
  double total_prob() const noexcept { return total_prob_; }

 private:
  Text prompt_;
  Text continuation_;
  std::vector<double> token_logprobs_;
  double total_prob_ = 1.0;
};

/// L x H row-stochastic n x n matrices stored contiguously, row-major.
class AttentionTensor {
 public:
  AttentionTensor(std::size_t layers, std::size_t heads, std::size_t n, std::vector<double> weights)
      : layers_(layers), heads_(heads), n_(n), weights_(std::move(weights)) {
    if (layers_ == 0 || heads_ == 0 || n_ == 0)
      throw Error(ErrorKind::InvalidTensor, "attention tensor dimensions must be positive");
    if (weights_.size() != layers_ * heads_ * n_ * n_)
      throw Error(ErrorKind::ShapeMismatch, "attention weight count does not match L*H*n*n");
    for (std::size_t row = 0; row < layers_ * heads_ * n_; ++row) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double w = weights_[row * n_ + j];
        if (!(w >= 0.0 && w <= 1.0 + kRowSumTolerance))
          throw Error(ErrorKind::InvalidTensor, "attention entry outside [0, 1]");
        sum += w;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw Error(ErrorKind::InvalidTensor, "attention row does not sum to 1 (sum = " + std::to_string(sum) + ")");
    }
  }

  std::size_t layers() const noexcept { return layers_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t n() const noexcept { return n_; }

  std::span<const double> matrix(std::size_t layer, std::size_t head) const {
    return std::span<const double>(weights_).subspan((layer * heads_ + head) * n_ * n_, n_ * n_);
  }
  double at(std::size_t layer, std::size_t head, std::size_t i, std::size_t j) const {
    return weights_[((layer * heads_ + head) * n_ + i) * n_ + j];
  }
  std::span<const double> weights() const noexcept { return weights_; }

  bool same_shape(const AttentionTensor& o) const noexcept {
    return layers_ == o.layers_ && heads_ == o.heads_ && n_ == o.n_;
  }

  friend bool operator==(const AttentionTensor&, const AttentionTensor&) = default;

 private:
  std::size_t layers_;
  std::size_t heads_;
  std::size_t n_;
  std::vector<double> weights_;
};

class CategoryDistribution {
 public:
  CategoryDistribution(std::vector<std::string> categories, std::map<std::string, double> probs)
      : categories_(std::move(categories)), probs_(std::move(probs)) {
    if (categories_.empty()) throw Error(ErrorKind::InvalidInput, "category set is empty");
    if (std::set<std::string>(categories_.begin(), categories_.end()).size() != categories_.size())
      throw Error(ErrorKind::InvalidInput, "duplicate category label");
    if (probs_.size() != categories_.size()) throw Error(ErrorKind::CategoryMismatch, "probability keys differ from C");
    double sum = 0.0;
    for (const auto& c : categories_) {
      auto it = probs_.find(c);
      if (it == probs_.end()) throw Error(ErrorKind::CategoryMismatch, "no probability for category '" + c + "'");
      if (!(it->second >= 0.0 && it->second <= 1.0))
        throw Error(ErrorKind::InvalidProbability, "category probability outside [0, 1]");
      sum += it->second;
    }
    if (std::abs(sum - 1.0) > kDistributionTolerance)
      throw Error(ErrorKind::InvalidProbability, "category probabilities do not sum to 1");
  }

  /// Empirical distribution of `labels` over `categories`.
  static CategoryDistribution from_counts(const std::vector<std::string>& categories,
                                          const std::vector<std::string>& labels) {
    if (labels.empty()) throw Error(ErrorKind::EmptyResults, "no labels to build a distribution from");
    std::map<std::string, double> probs;
    for (const auto& c : categories) probs[c] = 0.0;
    for (const auto& l : labels) {
      auto it = probs.find(l);
      if (it == probs.end()) throw Error(ErrorKind::CategoryMismatch, "label '" + l + "' not in category set");
      it->second += 1.0;
    }
    for (auto& [_, p] : probs) p /= static_cast<double>(labels.size());
    return CategoryDistribution(categories, std::move(probs));
  }

  const std::vector<std::string>& categories() const noexcept { return categories_; }
  const std::map<std::string, double>& probs() const noexcept { return probs_; }
  double operator[](const std::string& c) const { return probs_.at(c); }

 private:
  std::vector<std::string> categories_;
  std::map<std::string, double> probs_;
};

class BiasVerdict {
 public:
  BiasVerdict(double score, double threshold) : score_(score), threshold_(threshold) {
    if (!(score >= 0.0)) throw Error(ErrorKind::InvalidInput, "bias score must be >= 0");
    if (!(threshold > 0.0)) throw Error(ErrorKind::InvalidThreshold, "threshold must be > 0");
  }

  double score() const noexcept { return score_; }
  double threshold() const noexcept { return threshold_; }
  bool flagged() const noexcept { return score_ > threshold_; }

 private:
  double score_;
  double threshold_;
};

struct AlignmentBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t pair_count = 0;
  std::size_t conflicts = 0;

  double midpoint() const noexcept { return 0.5 * (lo + hi); }
  /// Absent when the bin is empty.
  std::optional<double> conflict_rate() const {
    if (pair_count == 0) return std::nullopt;
    return static_cast<double>(conflicts) / static_cast<double>(pair_count);
  }
};

struct BiasReport {
  double detection_accuracy_pct = 0.0;
  double semantic_consistency_pct = 0.0;
  double contextual_sensitivity_pct = 0.0;
  std::map<std::string, double> per_dimension;
  std::vector<AlignmentBin> alignment_curve;
};

}  // namespace biasprobe
