#pragma once

#include "bodyfit/bodyfit.hpp"

#include <gtest/gtest.h>

#include <random>

namespace testutil {

/// The 602-vertex, 16-joint, 10-beta toy model used throughout the suite.
inline const bodyfit::BodyModel& toy() {
  static const bodyfit::BodyModel model = bodyfit::make_toy_model(0, 602, 16, 10);
  return model;
}

inline double max_abs(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.cwiseAbs().maxCoeff(); }

inline bodyfit::Rotations random_rotations(const bodyfit::BodyModel& model, std::mt19937_64& rng,
                                           double max_angle = 1.0) {
  bodyfit::Rotations r(model.num_parts());
  for (auto& x : r) x = bodyfit::random_rotation(rng, max_angle);
  return r;
}

inline Eigen::VectorXd stacked(const bodyfit::Posed& p) {
  Eigen::VectorXd out(3 * (p.vertices.rows() + p.joints.rows()));
  out << p.vertices.reshaped<Eigen::RowMajor>(), p.joints.reshaped<Eigen::RowMajor>();
  return out;
}

inline bool is_rotation(const Eigen::Matrix3d& r, double tol) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(r.determinant() - 1.0) < tol;
}

template <typename F>
bodyfit::ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const bodyfit::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected bodyfit::Error";
  return bodyfit::ErrorKind::Io;
}

}  // namespace testutil
