#pragma once

#include "bodyfit/common.hpp"

#include <cmath>

namespace bodyfit {

struct EuclideanLoss {
  double value = 0.0;
  Eigen::Vector3d grad_pred = Eigen::Vector3d::Zero();
};

struct UncertainLoss {
  double value = 0.0;
  Eigen::Vector3d grad_pred = Eigen::Vector3d::Zero();
  double grad_sigma = 0.0;
};

/// |pred - gt|, unsquared. At pred == gt the subgradient 0 is returned.
inline EuclideanLoss euclidean_loss(const Eigen::Vector3d& pred, const Eigen::Vector3d& gt) {
  const Eigen::Vector3d e = pred - gt;
  const double norm = e.norm();
  return {norm, norm > 0.0 ? Eigen::Vector3d(e / norm) : Eigen::Vector3d::Zero()};
}

/// beta-NLL: (|e| / sigma + log sigma) * sg(sigma)^beta. The sigma^beta factor is
/// treated as a constant when differentiating, so
///   d/dpred  = sigma^(beta-1) e / |e|
///   d/dsigma = sigma^(beta-1) (1 - |e| / sigma).
/// beta = 0 is the plain NLL. At pred == gt the prediction subgradient 0 is returned.
inline UncertainLoss beta_nll_loss(const Eigen::Vector3d& pred, double sigma, const Eigen::Vector3d& gt,
                                   double beta) {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::InvalidArgument, "sigma must be positive");
  const Eigen::Vector3d e = pred - gt;
  const double norm = e.norm();
  const double scale = std::pow(sigma, beta);
  const double scale_over_sigma = std::pow(sigma, beta - 1.0);
  UncertainLoss out;
  out.value = (norm / sigma + std::log(sigma)) * scale;
  out.grad_pred = norm > 0.0 ? Eigen::Vector3d(scale_over_sigma * e / norm) : Eigen::Vector3d::Zero();
  out.grad_sigma = scale_over_sigma * (1.0 - norm / sigma);
  return out;
}

inline UncertainLoss nll_loss(const Eigen::Vector3d& pred, double sigma, const Eigen::Vector3d& gt) {
  return beta_nll_loss(pred, sigma, gt, 0.0);
}

}  // namespace bodyfit
