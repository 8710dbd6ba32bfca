#pragma once

// Seeded pre-LayerNorm decoder-only transformer. Small enough to run anywhere,
// complete enough to expose embeddings, next-token log-probabilities and every
// attention matrix, and to re-run a forward pass with substituted attention.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "biasprobe/model/backend.hpp"
#include "biasprobe/random.hpp"

namespace biasprobe::model {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct ReferenceModelConfig {
  std::size_t d_model = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t max_seq = 64;
  std::size_t vocab_size = 1024;
  std::uint64_t seed = 42;

  void validate() const {
    if (d_model == 0 || layers == 0 || heads == 0 || ffn_dim == 0 || vocab_size == 0)
      throw Error(ErrorKind::InvalidConfig, "reference model dimensions must be positive");
    if (d_model % heads != 0)
      throw Error(ErrorKind::InvalidConfig,
                  "d_model (" + std::to_string(d_model) + ") not divisible by heads (" + std::to_string(heads) + ")");
    if (max_seq < 2) throw Error(ErrorKind::InvalidConfig, "max_seq must be >= 2");
  }
};

struct LayerWeights {
  Matrix wq, wk, wv, wo;  // d x d
  Matrix ffn_in;          // d x ffn
  Matrix ffn_out;         // ffn x d
  RowVector ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct ReferenceWeights {
  Matrix token_embedding;  // vocab x d
  Matrix positional;       // max_seq x d, sinusoidal
  std::vector<LayerWeights> layers;
  RowVector final_gain, final_bias;
};

inline constexpr double kInitRange = 0.1;
inline constexpr double kLayerNormEps = 1e-5;

/// Draw order: token embeddings, then per layer Wq, Wk, Wv, Wo, FFN in,
/// FFN out, LN1 gain, LN1 bias, LN2 gain, LN2 bias, then the final LN gain and
/// bias. Matrices are filled row-major. LayerNorm gains are 1 + draw.
inline ReferenceWeights init_reference_weights(const ReferenceModelConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-kInitRange, kInitRange);
    return m;
  };
  auto fill_row = [&](Eigen::Index n, double offset) {
    RowVector v(n);
    for (Eigen::Index j = 0; j < n; ++j) v(j) = offset + rng.uniform(-kInitRange, kInitRange);
    return v;
  };

  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto f = static_cast<Eigen::Index>(cfg.ffn_dim);
  ReferenceWeights w;
  w.token_embedding = fill(static_cast<Eigen::Index>(cfg.vocab_size), d);

  w.positional = Matrix(static_cast<Eigen::Index>(cfg.max_seq), d);
  for (Eigen::Index pos = 0; pos < w.positional.rows(); ++pos) {
    for (Eigen::Index i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      w.positional(pos, i) = std::sin(angle);
      if (i + 1 < d) w.positional(pos, i + 1) = std::cos(angle);
    }
  }

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerWeights lw;
    lw.wq = fill(d, d);
    lw.wk = fill(d, d);
    lw.wv = fill(d, d);
    lw.wo = fill(d, d);
    lw.ffn_in = fill(d, f);
    lw.ffn_out = fill(f, d);
    lw.ln1_gain = fill_row(d, 1.0);
    lw.ln1_bias = fill_row(d, 0.0);
    lw.ln2_gain = fill_row(d, 1.0);
    lw.ln2_bias = fill_row(d, 0.0);
    w.layers.push_back(std::move(lw));
  }
  w.final_gain = fill_row(d, 1.0);
  w.final_bias = fill_row(d, 0.0);
  return w;
}

class ReferenceModel final : public Backend {
 public:
  explicit ReferenceModel(ReferenceModelConfig config) : config_(config), weights_(init_reference_weights(config_)) {}

  const ReferenceModelConfig& config() const noexcept { return config_; }
  const ReferenceWeights& weights() const noexcept { return weights_; }

  BackendCapabilities capabilities() const override { return {true, true, true}; }
  std::size_t dim() const override { return config_.d_model; }
  std::string model_id() const override { return "reference-seed" + std::to_string(config_.seed); }

  EmbeddingVector embed(const Text& text) const override { return pool(forward(ids_for(text)).hidden); }

  AttentionTensor attentions(const Text& text) const override {
    auto pass = forward(ids_for(text));
    return AttentionTensor(config_.layers, config_.heads, text.token_count(), std::move(pass.attention));
  }

  EmbeddingVector embed_with_attention_override(const Text& text, const AttentionTensor& override) const override {
    if (override.layers() != config_.layers || override.heads() != config_.heads || override.n() != text.token_count())
      throw Error(ErrorKind::ShapeMismatch, "override tensor shape does not match (layers, heads, n) of the text");
    return pool(forward(ids_for(text), &override).hidden);
  }

  ContinuationScore continuation_probability(const Text& prompt, const Text& continuation) const override {
    std::vector<std::string> tokens = prompt.tokens();
    tokens.insert(tokens.end(), continuation.tokens().begin(), continuation.tokens().end());
    return ContinuationScore(prompt, continuation,
                             sequence_logprobs(Text(prompt.raw() + " " + continuation.raw(), std::move(tokens)),
                                               prompt.token_count()));
  }

  /// Teacher-forced log-probability of tokens first..n-1, each given its
  /// prefix. `first` must be >= 1.
  std::vector<double> sequence_logprobs(const Text& text, std::size_t first = 1) const {
    const auto ids = ids_for(text);
    if (first == 0 || first > ids.size()) throw Error(ErrorKind::IndexError, "sequence_logprobs: bad first token index");
    const Matrix hidden = forward(ids).hidden;
    const auto rows = static_cast<Eigen::Index>(ids.size() - first);
    const Matrix logits = lm_logits(hidden.middleRows(static_cast<Eigen::Index>(first) - 1, rows));
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) out.push_back(log_softmax_at(logits.row(r), ids[first + static_cast<std::size_t>(r)]));
    return out;
  }

  /// Next-token logits at every position, tied to the token embedding table.
  Matrix lm_logits(const Matrix& hidden) const {
    const Matrix normed = layer_norm(hidden, weights_.final_gain, weights_.final_bias);
    return (normed * weights_.token_embedding.transpose()) * std::sqrt(static_cast<double>(config_.d_model));
  }

  struct ForwardPass {
    Matrix hidden;                 // n x d, final-layer states
    std::vector<double> attention; // L*H*n*n, row-major
  };

  /// One causal forward pass. When `override` is given, each layer/head
  /// attention matrix is replaced by it before aggregating values.
  ForwardPass forward(const std::vector<std::size_t>& ids, const AttentionTensor* override = nullptr) const {
    const auto n = static_cast<Eigen::Index>(ids.size());
    const auto d = static_cast<Eigen::Index>(config_.d_model);
    const auto dh = d / static_cast<Eigen::Index>(config_.heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double emb_scale = std::sqrt(static_cast<double>(d));

    Matrix x(n, d);
    for (Eigen::Index t = 0; t < n; ++t)
      x.row(t) = weights_.token_embedding.row(static_cast<Eigen::Index>(ids[static_cast<std::size_t>(t)])) * emb_scale +
                 weights_.positional.row(t);

    ForwardPass pass;
    pass.attention.reserve(config_.layers * config_.heads * ids.size() * ids.size());
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const LayerWeights& lw = weights_.layers[l];
      const Matrix h = layer_norm(x, lw.ln1_gain, lw.ln1_bias);
      const Matrix q = h * lw.wq;
      const Matrix k = h * lw.wk;
      const Matrix v = h * lw.wv;
      Matrix heads_out(n, d);
      for (std::size_t head = 0; head < config_.heads; ++head) {
        const auto c0 = static_cast<Eigen::Index>(head) * dh;
        Matrix a(n, n);
        if (override != nullptr) {
          const auto src = override->matrix(l, head);
          for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) a(i, j) = src[static_cast<std::size_t>(i * n + j)];
        } else {
          const Matrix scores = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
          a = causal_softmax(scores);
        }
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) pass.attention.push_back(a(i, j));
        heads_out.middleCols(c0, dh) = a * v.middleCols(c0, dh);
      }
      x += heads_out * lw.wo;
      const Matrix h2 = layer_norm(x, lw.ln2_gain, lw.ln2_bias);
      const Matrix act = (h2 * lw.ffn_in).cwiseMax(0.0);
      x += act * lw.ffn_out;
    }
    pass.hidden = std::move(x);
    return pass;
  }

  std::vector<std::size_t> ids_for(const Text& text) const {
    if (text.token_count() > config_.max_seq)
      throw Error(ErrorKind::SequenceTooLong, std::to_string(text.token_count()) + " tokens exceeds max_seq " +
                                                  std::to_string(config_.max_seq));
    return token_ids(text, config_.vocab_size);
  }

  static Matrix layer_norm(const Matrix& x, const RowVector& gain, const RowVector& bias) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().mean();
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      out.row(r) = (((x.row(r).array() - mean) * inv) * gain.array() + bias.array()).matrix();
    }
    return out;
  }

  static Matrix causal_softmax(const Matrix& scores) {
    const auto n = scores.rows();
    Matrix a = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = scores.row(i).head(i + 1).maxCoeff();
      double sum = 0.0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        a(i, j) = std::exp(scores(i, j) - mx);
        sum += a(i, j);
      }
      for (Eigen::Index j = 0; j <= i; ++j) a(i, j) /= sum;
    }
    return a;
  }

  static double log_softmax_at(const Eigen::Ref<const RowVector>& logits, std::size_t index) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return std::min(0.0, logits(static_cast<Eigen::Index>(index)) - lse);
  }

 private:
  static EmbeddingVector pool(const Matrix& hidden) {
    std::vector<double> out(static_cast<std::size_t>(hidden.cols()), 0.0);
    for (Eigen::Index r = 0; r < hidden.rows(); ++r)
      for (Eigen::Index c = 0; c < hidden.cols(); ++c) out[static_cast<std::size_t>(c)] += hidden(r, c);
    for (double& v : out) v /= static_cast<double>(hidden.rows());
    return EmbeddingVector(std::move(out));
  }

  ReferenceModelConfig config_;
  ReferenceWeights weights_;
};

inline ReferenceModel build_reference(const ReferenceModelConfig& config) { return ReferenceModel(config); }

}  // namespace biasprobe::model
