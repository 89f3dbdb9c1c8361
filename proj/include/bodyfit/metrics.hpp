#pragma once

#include "bodyfit/common.hpp"

#include <cmath>

namespace bodyfit {

/// Mean Euclidean distance between corresponding rows.
inline double mean_point_error(const Eigen::Ref<const Points>& pred, const Eigen::Ref<const Points>& gt) {
  require(pred.rows() == gt.rows(), ErrorKind::Dimension, "point counts differ");
  require(pred.rows() > 0, ErrorKind::InvalidArgument, "empty point set");
  return (pred - gt).rowwise().norm().mean();
}

inline double mpjpe(const Eigen::Ref<const Points>& pred, const Eigen::Ref<const Points>& gt) {
  return mean_point_error(pred, gt);
}

inline double mve(const Eigen::Ref<const Points>& pred, const Eigen::Ref<const Points>& gt) {
  return mean_point_error(pred, gt);
}

/// Similarity transform (rotation, translation, uniform scale) of `pred` that best
/// matches `gt` in least squares. A single point is aligned by translation only.
inline Points procrustes_align(const Eigen::Ref<const Points>& pred, const Eigen::Ref<const Points>& gt) {
  require(pred.rows() == gt.rows(), ErrorKind::Dimension, "point counts differ");
  require(pred.rows() > 0, ErrorKind::InvalidArgument, "empty point set");
  if (pred.rows() == 1) {
    return gt;
  }
  const Eigen::Matrix3Xd src = pred.transpose();
  const Eigen::Matrix3Xd dst = gt.transpose();
  const Eigen::Matrix4d transform = Eigen::umeyama(src, dst, true);
  if (!transform.allFinite()) {
    // All prediction points coincide; only the centroid can be matched.
    return pred.rowwise() + (gt.colwise().mean() - pred.colwise().mean());
  }
  Points out = (pred * transform.topLeftCorner<3, 3>().transpose()).rowwise() +
               transform.topRightCorner<3, 1>().transpose();
  return out;
}

inline double pa_mean_point_error(const Eigen::Ref<const Points>& pred, const Eigen::Ref<const Points>& gt) {
  return mean_point_error(procrustes_align(pred, gt), gt);
}

/// Angle of R1^T R2 in [0, pi]. Uses the quaternion form, which stays accurate near 0 and pi.
inline double geodesic_angle(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2) {
  const Eigen::Quaterniond q(Eigen::Matrix3d(r1.transpose() * r2));
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

/// Mean geodesic angle over paired rotation lists.
inline double mean_angle_error(const Rotations& pred, const Rotations& gt) {
  require(pred.size() == gt.size() && !pred.empty(), ErrorKind::Dimension, "rotation lists differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += geodesic_angle(pred[i], gt[i]);
  }
  return total / static_cast<double>(pred.size());
}

}  // namespace bodyfit
