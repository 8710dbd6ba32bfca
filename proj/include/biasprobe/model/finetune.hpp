#pragma once

#include <span>
#include <vector>

#include "biasprobe/metrics.hpp"
#include "biasprobe/model/projection.hpp"

namespace biasprobe::model {

struct FinetuneResult {
  ProjectionHead head;
  /// Loss before the first step followed by the loss after each step.
  std::vector<double> trajectory;
};

/// Full-batch gradient descent on the contrastive hinge loss over a projection
/// head that starts at the identity. Embeddings stay frozen.
inline FinetuneResult finetune_projection(std::span<const metrics::EmbeddingPair> pairs, double margin,
                                          double learning_rate, std::size_t steps) {
  if (pairs.empty()) throw Error(ErrorKind::InvalidInput, "no embedding pairs to fine-tune on");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be > 0");
  if (steps == 0) throw Error(ErrorKind::InvalidConfig, "steps must be positive");

  FinetuneResult result{ProjectionHead::identity(static_cast<Eigen::Index>(pairs.front().first.dim())), {}};
  result.trajectory.reserve(steps + 1);
  result.trajectory.push_back(metrics::contrastive_bias_loss(pairs, margin, result.head));
  for (std::size_t step = 0; step < steps; ++step) {
    result.head.W -= learning_rate * metrics::contrastive_bias_loss_gradient(pairs, margin, result.head);
    result.trajectory.push_back(metrics::contrastive_bias_loss(pairs, margin, result.head));
  }
  return result;
}

}  // namespace biasprobe::model
