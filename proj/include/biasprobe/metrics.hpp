#pragma once

// Bias measures over backend outputs: embedding distance and its threshold
// verdict, the continuation-probability gap, nearest-prototype categorisation
// and category shift, the contrastive hinge loss with its gradient, attention
// perturbation and the resulting embedding sensitivity, and a composite
// detector score.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasprobe/core.hpp"
#include "biasprobe/model/backend.hpp"
#include "biasprobe/model/projection.hpp"
#include "biasprobe/random.hpp"

namespace biasprobe::metrics {

inline constexpr double kDefaultDelta = 0.1;
inline constexpr double kDefaultMargin = 1.0;

using EmbeddingPair = std::pair<EmbeddingVector, EmbeddingVector>;

inline void require_same_dim(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    throw Error(ErrorKind::ShapeMismatch,
                "embedding dimensions differ (" + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
}

inline double embedding_distance(const EmbeddingVector& v1, const EmbeddingVector& v2) {
  require_same_dim(v1, v2);
  double ss = 0.0;
  for (std::size_t i = 0; i < v1.dim(); ++i) {
    const double d = v1[i] - v2[i];
    ss += d * d;
  }
  return std::sqrt(ss);
}

inline BiasVerdict embedding_bias_flag(const EmbeddingVector& v1, const EmbeddingVector& v2, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorKind::InvalidThreshold, "delta must be > 0");
  return BiasVerdict(embedding_distance(v1, v2), delta);
}

/// Cosine similarity clamped to [-1, 1]; 0 when either vector is zero.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  require_same_dim(a, b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Largest absolute difference in continuation probability across attribute
/// terms. Equal to max - min.
inline double generation_probability_gap(const std::map<std::string, double>& scores) {
  if (scores.size() < 2) throw Error(ErrorKind::InsufficientAttributes, "probability gap needs >= 2 attribute terms");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [term, p] : scores) {
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorKind::InvalidProbability, "probability for '" + term + "' outside [0, 1]");
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  return hi - lo;
}

// --- semantic categories --------------------------------------------------

class CategoryModel {
 public:
  CategoryModel(std::vector<std::string> labels, std::vector<EmbeddingVector> prototypes)
      : labels_(std::move(labels)), prototypes_(std::move(prototypes)) {
    if (labels_.size() < 2) throw Error(ErrorKind::InvalidInput, "category model needs >= 2 categories");
    if (labels_.size() != prototypes_.size())
      throw Error(ErrorKind::ShapeMismatch, "one prototype per category label is required");
    if (std::set<std::string>(labels_.begin(), labels_.end()).size() != labels_.size())
      throw Error(ErrorKind::InvalidInput, "duplicate category label");
    for (const auto& p : prototypes_) require_same_dim(p, prototypes_.front());
  }

  /// Prototypes drawn uniformly from [-1, 1]^dim with SplitMix64.
  static CategoryModel seeded_random(std::vector<std::string> labels, std::size_t dim, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<EmbeddingVector> protos;
    for (std::size_t c = 0; c < labels.size(); ++c) {
      std::vector<double> v(dim);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      protos.emplace_back(std::move(v));
    }
    return CategoryModel(std::move(labels), std::move(protos));
  }

  /// Prototypes are the backend embeddings of one anchor text per label.
  static CategoryModel from_anchor_texts(const model::Backend& backend, std::vector<std::string> labels,
                                         const std::vector<std::string>& anchors) {
    if (labels.size() != anchors.size()) throw Error(ErrorKind::ShapeMismatch, "one anchor text per label required");
    std::vector<EmbeddingVector> protos;
    for (const auto& a : anchors) protos.push_back(backend.embed(backend.tokenize(a)));
    return CategoryModel(std::move(labels), std::move(protos));
  }

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<EmbeddingVector>& prototypes() const noexcept { return prototypes_; }
  std::size_t dim() const noexcept { return prototypes_.front().dim(); }

 private:
  std::vector<std::string> labels_;
  std::vector<EmbeddingVector> prototypes_;
};

/// Nearest prototype by Euclidean distance; ties go to the earlier label.
inline const std::string& classify_category(const EmbeddingVector& v, const CategoryModel& cm) {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cm.prototypes().size(); ++c) {
    const double dist = embedding_distance(v, cm.prototypes()[c]);
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return cm.labels()[best];
}

/// Total variation distance.
inline double category_shift(const CategoryDistribution& p, const CategoryDistribution& q) {
  const std::set<std::string> cp(p.categories().begin(), p.categories().end());
  const std::set<std::string> cq(q.categories().begin(), q.categories().end());
  if (cp != cq) throw Error(ErrorKind::CategoryMismatch, "distributions are over different category sets");
  double sum = 0.0;
  for (const auto& c : p.categories()) sum += std::abs(p[c] - q[c]);
  return 0.5 * sum;
}

// --- contrastive hinge loss ------------------------------------------------

namespace detail {

inline void check_pairs(std::span<const EmbeddingPair> pairs, double margin) {
  if (!(margin > 0.0)) throw Error(ErrorKind::InvalidMargin, "margin m must be > 0");
  if (pairs.empty()) throw Error(ErrorKind::InvalidInput, "no embedding pairs");
  const std::size_t d = pairs.front().first.dim();
  for (const auto& [a, b] : pairs)
    if (a.dim() != d || b.dim() != d) throw Error(ErrorKind::ShapeMismatch, "embedding pairs have mixed dimensions");
}

inline Eigen::VectorXd difference(const EmbeddingPair& p) {
  const auto a = p.first.values();
  const auto b = p.second.values();
  Eigen::VectorXd d(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) d(static_cast<Eigen::Index>(i)) = a[i] - b[i];
  return d;
}

}  // namespace detail

/// Sum over pairs of max(0, ||v_i - v_j||^2 - m).
inline double contrastive_bias_loss(std::span<const EmbeddingPair> pairs, double margin) {
  detail::check_pairs(pairs, margin);
  double loss = 0.0;
  for (const auto& p : pairs) loss += std::max(0.0, detail::difference(p).squaredNorm() - margin);
  return loss;
}

/// Loss after projecting every vector through the head.
inline double contrastive_bias_loss(std::span<const EmbeddingPair> pairs, double margin,
                                    const model::ProjectionHead& head) {
  detail::check_pairs(pairs, margin);
  head.validate();
  if (static_cast<std::size_t>(head.dim()) != pairs.front().first.dim())
    throw Error(ErrorKind::ShapeMismatch, "projection head dimension differs from embeddings");
  double loss = 0.0;
  for (const auto& p : pairs) loss += std::max(0.0, (head.W * detail::difference(p)).squaredNorm() - margin);
  return loss;
}

/// dL/dW = sum over active pairs of 2 (W u_i - W u_j)(u_i - u_j)^T. A pair
/// sitting exactly on the hinge contributes nothing.
inline Eigen::MatrixXd contrastive_bias_loss_gradient(std::span<const EmbeddingPair> pairs, double margin,
                                                      const model::ProjectionHead& head) {
  detail::check_pairs(pairs, margin);
  head.validate();
  if (static_cast<std::size_t>(head.dim()) != pairs.front().first.dim())
    throw Error(ErrorKind::ShapeMismatch, "projection head dimension differs from embeddings");
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(head.W.rows(), head.W.cols());
  for (const auto& p : pairs) {
    const Eigen::VectorXd u = detail::difference(p);
    const Eigen::VectorXd wu = head.W * u;
    if (wu.squaredNorm() > margin) grad += 2.0 * wu * u.transpose();
  }
  return grad;
}

// --- attention perturbation -----------------------------------------------

enum class PerturbationMode { Zero, Scale, Uniform };

inline std::string_view to_string(PerturbationMode m) {
  switch (m) {
    case PerturbationMode::Zero: return "zero";
    case PerturbationMode::Scale: return "scale";
    case PerturbationMode::Uniform: return "uniform";
  }
  return "zero";
}

inline PerturbationMode parse_perturbation_mode(std::string_view s) {
  if (s == "zero") return PerturbationMode::Zero;
  if (s == "scale") return PerturbationMode::Scale;
  if (s == "uniform") return PerturbationMode::Uniform;
  throw Error(ErrorKind::InvalidConfig, "unknown perturbation mode '" + std::string(s) + "'");
}

struct PerturbationSettings {
  PerturbationMode mode = PerturbationMode::Zero;
  double lambda = 0.0;
};

class PerturbationSpec {
 public:
  PerturbationSpec(PerturbationMode mode, double lambda, std::vector<TokenIndex> positions)
      : mode_(mode), lambda_(lambda), positions_(std::move(positions)) {
    if (!std::isfinite(lambda_) || lambda_ < 0.0) throw Error(ErrorKind::InvalidConfig, "lambda must be finite and >= 0");
    for (std::size_t i = 1; i < positions_.size(); ++i)
      if (positions_[i] <= positions_[i - 1])
        throw Error(ErrorKind::InvalidInput, "perturbation positions must be strictly increasing");
  }
  PerturbationSpec(PerturbationSettings settings, std::vector<TokenIndex> positions)
      : PerturbationSpec(settings.mode, settings.lambda, std::move(positions)) {}

  PerturbationMode mode() const noexcept { return mode_; }
  double lambda() const noexcept { return lambda_; }
  const std::vector<TokenIndex>& positions() const noexcept { return positions_; }

 private:
  PerturbationMode mode_;
  double lambda_;
  std::vector<TokenIndex> positions_;
};

/// Rewrites the columns at `spec.positions()` (attention paid to those tokens)
/// in every layer/head matrix, then renormalises each row to sum to 1. A row
/// left with no mass becomes uniform over the untouched columns.
inline AttentionTensor perturb_attention(const AttentionTensor& a, const PerturbationSpec& spec) {
  const std::size_t n = a.n();
  const auto& pos = spec.positions();
  for (auto p : pos)
    if (p >= n)
      throw Error(ErrorKind::IndexError, "perturbation position " + std::to_string(p) + " out of range for n = " +
                                             std::to_string(n));
  if (pos.empty()) return a;

  std::vector<bool> hit(n, false);
  for (auto p : pos) hit[p] = true;
  const std::size_t free_cols = n - pos.size();
  const bool covers_all = free_cols == 0;
  if (covers_all && (spec.mode() != PerturbationMode::Scale || spec.lambda() == 0.0))
    throw Error(ErrorKind::DegeneratePerturbation, "perturbation positions cover every column");

  std::vector<double> out(a.weights().begin(), a.weights().end());
  for (std::size_t row = 0; row < a.layers() * a.heads() * n; ++row) {
    double* r = out.data() + row * n;
    switch (spec.mode()) {
      case PerturbationMode::Zero:
        for (auto p : pos) r[p] = 0.0;
        break;
      case PerturbationMode::Scale:
        for (auto p : pos) r[p] *= spec.lambda();
        break;
      case PerturbationMode::Uniform: {
        double free_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          if (!hit[j]) free_sum += r[j];
        const double mean = free_sum / static_cast<double>(free_cols);
        for (auto p : pos) r[p] = mean;
        break;
      }
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += r[j];
    if (sum > 0.0) {
      for (std::size_t j = 0; j < n; ++j) r[j] /= sum;
    } else {
      const double u = 1.0 / static_cast<double>(free_cols);
      for (std::size_t j = 0; j < n; ++j) r[j] = hit[j] ? 0.0 : u;
    }
  }
  return AttentionTensor(a.layers(), a.heads(), n, std::move(out));
}

/// Embedding displacement caused by perturbing attention to `spec.positions()`.
inline double attention_sensitivity(const model::Backend& backend, const Text& text, const PerturbationSpec& spec) {
  const auto caps = backend.capabilities();
  if (!caps.has_attention || !caps.has_override)
    throw Error(ErrorKind::Unsupported, "backend '" + backend.model_id() + "' cannot re-run with overridden attention");
  const EmbeddingVector base = backend.embed(text);
  const AttentionTensor perturbed = perturb_attention(backend.attentions(text), spec);
  return embedding_distance(base, backend.embed_with_attention_override(text, perturbed));
}

// --- composite detector -----------------------------------------------------

class CompositeWeights {
 public:
  CompositeWeights() = default;
  CompositeWeights(double embed, double prob, double attn) : embed_(embed), prob_(prob), attn_(attn) {
    if (!(embed >= 0.0 && prob >= 0.0 && attn >= 0.0))
      throw Error(ErrorKind::InvalidConfig, "composite weights must be >= 0");
    if (std::abs(embed + prob + attn - 1.0) > 1e-12)
      throw Error(ErrorKind::InvalidConfig, "composite weights must sum to 1");
  }

  double embed() const noexcept { return embed_; }
  double prob() const noexcept { return prob_; }
  double attn() const noexcept { return attn_; }

 private:
  double embed_ = 0.4;
  double prob_ = 0.4;
  double attn_ = 0.2;
};

inline double squash(double x) { return x / (1.0 + x); }

/// The three normalised detector signals for one group. Signals whose weight
/// is zero are not computed and stay 0.
struct CompositeSignals {
  double embedding = 0.0;    // squash(max pairwise embedding distance)
  double probability = 0.0;  // generation_probability_gap
  double attention = 0.0;    // squash(mean attention sensitivity)
};

inline CompositeSignals composite_signals(const CounterfactualGroup& group, const model::Backend& backend,
                                          const Text& continuation, const CompositeWeights& weights,
                                          const PerturbationSettings& perturbation) {
  const auto caps = backend.capabilities();
  if (weights.prob() > 0.0 && !caps.has_logprobs)
    throw Error(ErrorKind::Unsupported, "probability signal needs log-probabilities from '" + backend.model_id() + "'");
  if (weights.attn() > 0.0 && !(caps.has_attention && caps.has_override))
    throw Error(ErrorKind::Unsupported, "attention signal needs attention override from '" + backend.model_id() + "'");

  CompositeSignals s;
  const auto& members = group.members();
  if (weights.embed() > 0.0) {
    std::vector<EmbeddingVector> vs;
    vs.reserve(members.size());
    for (const auto& m : members) vs.push_back(backend.embed(m.text));
    double max_dist = 0.0;
    for (std::size_t i = 0; i < vs.size(); ++i)
      for (std::size_t j = i + 1; j < vs.size(); ++j) max_dist = std::max(max_dist, embedding_distance(vs[i], vs[j]));
    s.embedding = squash(max_dist);
  }
  if (weights.prob() > 0.0) {
    std::map<std::string, double> probs;
    for (std::size_t i = 0; i < members.size(); ++i) {
      // Keyed by index so duplicate terms stay distinct entries.
      probs[std::to_string(i)] = backend.continuation_probability(members[i].text, continuation).total_prob();
    }
    s.probability = generation_probability_gap(probs);
  }
  if (weights.attn() > 0.0) {
    double total = 0.0;
    for (const auto& m : members)
      total += attention_sensitivity(backend, m.text, PerturbationSpec(perturbation, m.attribute_positions));
    s.attention = squash(total / static_cast<double>(members.size()));
  }
  return s;
}

inline double compose(const CompositeSignals& s, const CompositeWeights& w) {
  return w.embed() * s.embedding + w.prob() * s.probability + w.attn() * s.attention;
}

inline double composite_bias_score(const CounterfactualGroup& group, const model::Backend& backend,
                                   const Text& continuation, const CompositeWeights& weights,
                                   const PerturbationSettings& perturbation) {
  return compose(composite_signals(group, backend, continuation, weights, perturbation), weights);
}

}  // namespace biasprobe::metrics
