#pragma once

#include "bodyfit/common.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace bodyfit {

/// Weighted point correspondences for a Kabsch/Wahba alignment. The fitted rotation
/// maps source points onto target points.
struct CorrespondenceSet {
  Points target_points;
  Points source_points;
  Eigen::VectorXd weights;
};

/// Sum_i w_i (p_i - pbar)(q_i - qbar)^T with weighted means pbar, qbar, where p are
/// target and q source points. Weights are normalized to sum to one.
inline Eigen::Matrix3d weighted_covariance(const Eigen::Ref<const Points>& target,
                                           const Eigen::Ref<const Points>& source,
                                           const Eigen::Ref<const Eigen::VectorXd>& weights) {
  const auto n = target.rows();
  require(source.rows() == n && weights.size() == n, ErrorKind::Dimension,
          "correspondence arrays differ in length");
  require(n >= 2, ErrorKind::InvalidArgument, "weighted covariance needs at least 2 correspondences");
  require(weights.allFinite() && (weights.array() >= 0.0).all(), ErrorKind::InvalidArgument,
          "weights must be finite and nonnegative");
  const double total = weights.sum();
  require(total > 0.0, ErrorKind::Degenerate, "all correspondence weights are zero");

  const Eigen::VectorXd w = weights / total;
  const Eigen::RowVector3d target_mean = w.transpose() * target;
  const Eigen::RowVector3d source_mean = w.transpose() * source;
  return (target.rowwise() - target_mean).transpose() * w.asDiagonal() * (source.rowwise() - source_mean);
}

inline Eigen::Matrix3d weighted_covariance(const CorrespondenceSet& c) {
  return weighted_covariance(c.target_points, c.source_points, c.weights);
}

/// Sum_i p_i q_i^T without centering; both inputs are already relative to their pivots.
inline Eigen::Matrix3d pivot_anchored_covariance(const Eigen::Ref<const Points>& target,
                                                 const Eigen::Ref<const Points>& source) {
  require(target.rows() == source.rows(), ErrorKind::Dimension, "correspondence arrays differ in length");
  return target.transpose() * source;
}

/// Weighted variant used when per-point weights are present.
inline Eigen::Matrix3d pivot_anchored_covariance(const Eigen::Ref<const Points>& target,
                                                 const Eigen::Ref<const Points>& source,
                                                 const Eigen::Ref<const Eigen::VectorXd>& weights) {
  require(target.rows() == source.rows() && weights.size() == target.rows(), ErrorKind::Dimension,
          "correspondence arrays differ in length");
  return target.transpose() * weights.asDiagonal() * source;
}

/// Nearest rotation in the Frobenius sense: U diag(1, 1, det(U V^T)) V^T for M = U S V^T.
/// Maximizes trace(R^T M) over SO(3). Rank-deficient and zero inputs still return a
/// proper rotation; the free directions follow the SVD's ordering.
inline Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  return u * d.asDiagonal() * v.transpose();
}

/// Rotation minimizing sum_i w_i |(p_i - pbar) - R (q_i - qbar)|^2.
inline Eigen::Matrix3d kabsch(const CorrespondenceSet& c) {
  return project_to_so3(weighted_covariance(c));
}

}  // namespace bodyfit
