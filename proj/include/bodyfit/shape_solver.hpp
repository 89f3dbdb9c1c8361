#pragma once

#include "bodyfit/common.hpp"

#include <Eigen/Cholesky>

#include <optional>

namespace bodyfit {

struct ShapeSolveConfig {
  /// Ridge weight on the penalized shape coefficients.
  double ridge_lambda = 0.1;
  /// Leading shape coefficients left unpenalized (overall size and weight).
  int unpenalized_prefix = 2;
  /// One weight per point (three Jacobian rows each); all ones when empty.
  std::optional<Eigen::VectorXd> point_weights;
};

struct ShapeSolution {
  Eigen::VectorXd beta;
  Eigen::Vector3d translation;
};

/// Minimizes sum_i w_i |J_i x - r_i|^2 + lambda * x^T D x through the normal equations
/// and a Cholesky factorization. `penalty` is the diagonal of D. Throws
/// Error(Singular) when the normal matrix is not numerically positive definite.
inline Eigen::VectorXd solve_regularized_least_squares(const Eigen::Ref<const Eigen::MatrixXd>& jacobian,
                                                       const Eigen::Ref<const Eigen::VectorXd>& residual,
                                                       const Eigen::VectorXd* point_weights,
                                                       double lambda,
                                                       const Eigen::Ref<const Eigen::VectorXd>& penalty) {
  require(jacobian.rows() == residual.size(), ErrorKind::Dimension, "jacobian and residual row counts differ");
  require(jacobian.rows() % 3 == 0, ErrorKind::Dimension, "jacobian rows must come in groups of three");
  require(penalty.size() == jacobian.cols(), ErrorKind::Dimension, "penalty size must match jacobian columns");
  require(lambda >= 0.0, ErrorKind::InvalidArgument, "ridge_lambda must be nonnegative");
  require(jacobian.allFinite() && residual.allFinite(), ErrorKind::InvalidArgument,
          "jacobian and residual must be finite");

  Eigen::MatrixXd normal;
  Eigen::VectorXd rhs;
  if (point_weights != nullptr) {
    require(point_weights->size() * 3 == jacobian.rows(), ErrorKind::Dimension,
            "point_weights must have one entry per point");
    require((point_weights->array() >= 0.0).all(), ErrorKind::InvalidArgument, "point weights must be nonnegative");
    const Eigen::VectorXd row_weights = point_weights->replicate(1, 3).transpose().reshaped();
    normal = jacobian.transpose() * row_weights.asDiagonal() * jacobian;
    rhs = jacobian.transpose() * (row_weights.array() * residual.array()).matrix();
  } else {
    normal = jacobian.transpose() * jacobian;
    rhs = jacobian.transpose() * residual;
  }
  normal.diagonal() += lambda * penalty;

  const Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw Error(ErrorKind::Singular, "normal matrix of the shape solve is not positive definite");
  }
  return llt.solve(rhs);
}

/// Solves for shape coefficients and translation. The jacobian's last three columns
/// are the translation; the residual is the stacked target minus the zero-shape fit.
inline ShapeSolution solve_beta_t(const Eigen::Ref<const Eigen::MatrixXd>& jacobian,
                                  const Eigen::Ref<const Eigen::VectorXd>& residual,
                                  const ShapeSolveConfig& cfg = {}) {
  const auto n_beta = jacobian.cols() - 3;
  require(n_beta >= 0, ErrorKind::Dimension, "jacobian needs at least the three translation columns");
  require(cfg.unpenalized_prefix >= 0 && cfg.unpenalized_prefix <= n_beta, ErrorKind::InvalidArgument,
          "unpenalized_prefix must lie in [0, N_beta]");

  Eigen::VectorXd penalty = Eigen::VectorXd::Zero(jacobian.cols());
  penalty.segment(cfg.unpenalized_prefix, n_beta - cfg.unpenalized_prefix).setOnes();
  const Eigen::VectorXd x = solve_regularized_least_squares(
      jacobian, residual, cfg.point_weights ? &*cfg.point_weights : nullptr, cfg.ridge_lambda, penalty);
  return {x.head(n_beta), x.tail<3>()};
}

}  // namespace bodyfit
