#pragma once

#include "bodyfit/fitter.hpp"

#include <numbers>
#include <random>

namespace bodyfit {

/// Random draws used to build synthetic fitting problems. All of them consume a
/// caller-owned std::mt19937_64 so a single seed reproduces a whole suite.
struct PoseSampling {
  double max_beta_norm = 2.0;
  double max_angle = std::numbers::pi / 3.0;
  double translation_range = 1.0;
};

inline Eigen::Vector3d random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Vector3d v;
  do {
    v = {normal(rng), normal(rng), normal(rng)};
  } while (v.norm() < 1e-12);
  return v.normalized();
}

/// Rotation about a uniformly random axis by an angle uniform in [0, max_angle].
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng, double max_angle) {
  const Eigen::Vector3d axis = random_unit_vector(rng);
  std::uniform_real_distribution<double> angle(0.0, max_angle);
  return Eigen::AngleAxisd(angle(rng), axis).toRotationMatrix();
}

/// Haar-uniform rotation via a normalized Gaussian quaternion.
inline Eigen::Matrix3d uniform_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Quaterniond q;
  do {
    q.coeffs() << normal(rng), normal(rng), normal(rng), normal(rng);
  } while (q.norm() < 1e-12);
  return q.normalized().toRotationMatrix();
}

/// beta along a random direction with norm uniform in [0, max_norm].
inline Eigen::VectorXd random_beta(std::mt19937_64& rng, int n_betas, double max_norm) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd beta(n_betas);
  for (int i = 0; i < n_betas; ++i) {
    beta(i) = normal(rng);
  }
  if (beta.norm() == 0.0) {
    return beta;
  }
  std::uniform_real_distribution<double> radius(0.0, max_norm);
  return beta.normalized() * radius(rng);
}

inline PoseParams random_pose(const BodyModel& model, std::mt19937_64& rng, const PoseSampling& s = {}) {
  PoseParams pose;
  pose.beta = random_beta(rng, model.num_betas(), s.max_beta_norm);
  pose.rotations.resize(model.num_parts());
  for (auto& r : pose.rotations) {
    r = random_rotation(rng, s.max_angle);
  }
  std::uniform_real_distribution<double> shift(-s.translation_range, s.translation_range);
  pose.translation = {shift(rng), shift(rng), shift(rng)};
  return pose;
}

/// Posed model with isotropic Gaussian noise of standard deviation `noise` (meters) per coordinate.
inline FitTarget make_target(const BodyModel& model, const PoseParams& pose, double noise, std::mt19937_64& rng) {
  const Posed posed = forward(model, pose);
  FitTarget t{posed.vertices, std::nullopt, posed.joints, std::nullopt};
  if (noise > 0.0) {
    std::normal_distribution<double> normal(0.0, noise);
    for (Eigen::Index i = 0; i < t.vertices.size(); ++i) t.vertices.data()[i] += normal(rng);
    for (Eigen::Index i = 0; i < t.joints.size(); ++i) t.joints.data()[i] += normal(rng);
  }
  return t;
}

/// Heteroscedastic variant: each point draws sigma_i log-uniformly from [sigma_min, sigma_max]
/// and receives Gaussian noise with that standard deviation per coordinate. The sigmas are
/// stored on the target.
inline FitTarget make_heteroscedastic_target(const BodyModel& model, const PoseParams& pose, double sigma_min,
                                             double sigma_max, std::mt19937_64& rng) {
  const Posed posed = forward(model, pose);
  FitTarget t{posed.vertices, std::nullopt, posed.joints, std::nullopt};
  const Eigen::Index nv = t.vertices.rows();
  Eigen::VectorXd sigmas(nv + t.joints.rows());
  std::uniform_real_distribution<double> log_sigma(std::log(sigma_min), std::log(sigma_max));
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < sigmas.size(); ++i) {
    sigmas(i) = std::exp(log_sigma(rng));
    auto row = i < nv ? t.vertices.row(i) : t.joints.row(i - nv);
    for (int c = 0; c < 3; ++c) {
      row(c) += sigmas(i) * normal(rng);
    }
  }
  t.sigmas = sigmas;
  return t;
}

}  // namespace bodyfit
