#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "biasprobe/error.hpp"

namespace biasprobe::model {

/// Linear map v -> W v applied to frozen embeddings.
struct ProjectionHead {
  Eigen::MatrixXd W;

  static ProjectionHead identity(Eigen::Index d) { return {Eigen::MatrixXd::Identity(d, d)}; }

  Eigen::Index dim() const noexcept { return W.rows(); }

  void validate() const {
    if (W.rows() == 0 || W.rows() != W.cols()) throw Error(ErrorKind::ShapeMismatch, "projection head must be square");
    if (!W.allFinite()) throw Error(ErrorKind::InvalidInput, "projection head has non-finite entries");
  }
};

}  // namespace biasprobe::model
