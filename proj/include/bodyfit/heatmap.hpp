#pragma once

#include "bodyfit/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace bodyfit {

/// Dense h x w x d logit volume, row-major with depth fastest.
struct Volume {
  int height = 0;
  int width = 0;
  int depth = 0;
  std::vector<double> data;

  Volume() = default;
  Volume(int h, int w, int d) : height(h), width(w), depth(d), data(static_cast<std::size_t>(h) * w * d, 0.0) {}

  double& at(int y, int x, int z) { return data[(static_cast<std::size_t>(y) * width + x) * depth + z]; }
  double at(int y, int x, int z) const { return data[(static_cast<std::size_t>(y) * width + x) * depth + z]; }
};

/// Per-point decoder head output: volumetric heatmap, 2D heatmap and raw uncertainty map.
/// 2D maps are h x w with row index y.
struct HeatmapStack {
  Volume h3d;
  Eigen::MatrixXd h2d;
  Eigen::MatrixXd u;
};

/// Affine map from cell indices to coordinates: x = x0 + dx * col, y = y0 + dy * row.
/// The default puts pixel centers at integer coordinates.
struct Grid {
  double x0 = 0.0;
  double dx = 1.0;
  double y0 = 0.0;
  double dy = 1.0;

  /// Cell centers of an n-cell axis spanning `extent` symmetrically about zero.
  static Grid centered(int width, int height, double extent_x, double extent_y) {
    return {-0.5 * extent_x + 0.5 * extent_x / width, extent_x / width,
            -0.5 * extent_y + 0.5 * extent_y / height, extent_y / height};
  }
};

inline constexpr double kDefaultDepthExtent = 2.2;
inline constexpr double kDefaultSigmaEpsilon = 1e-4;

/// Center of depth bin `z` for `depth` bins spanning `extent` symmetrically about 0.
inline double depth_coordinate(int z, int depth, double extent) {
  return -0.5 * extent + (z + 0.5) * extent / depth;
}

/// Softmax over every cell of `logits`, stabilized by subtracting the maximum.
inline Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  require(logits.size() > 0, ErrorKind::InvalidArgument, "empty heatmap");
  require(logits.allFinite(), ErrorKind::InvalidArgument, "heatmap logits must be finite");
  Eigen::MatrixXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

inline Eigen::Vector2d soft_argmax_2d(const Eigen::MatrixXd& h2d, const Grid& grid = {}) {
  const Eigen::MatrixXd p = softmax(h2d);
  double x = 0.0;
  double y = 0.0;
  for (Eigen::Index row = 0; row < p.rows(); ++row) {
    for (Eigen::Index col = 0; col < p.cols(); ++col) {
      x += p(row, col) * (grid.x0 + grid.dx * static_cast<double>(col));
      y += p(row, col) * (grid.y0 + grid.dy * static_cast<double>(row));
    }
  }
  return {x, y};
}

/// Expectation over the volume; x, y come from `grid`, depth spans `depth_extent` meters.
inline Eigen::Vector3d soft_argmax_3d(const Volume& h3d, const Grid& grid, double depth_extent = kDefaultDepthExtent) {
  require(h3d.height >= 1 && h3d.width >= 1 && h3d.depth >= 1, ErrorKind::InvalidArgument, "empty heatmap volume");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double v : h3d.data) {
    require(std::isfinite(v), ErrorKind::InvalidArgument, "heatmap logits must be finite");
    max_logit = std::max(max_logit, v);
  }
  double total = 0.0;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int y = 0; y < h3d.height; ++y) {
    for (int x = 0; x < h3d.width; ++x) {
      for (int z = 0; z < h3d.depth; ++z) {
        const double e = std::exp(h3d.at(y, x, z) - max_logit);
        total += e;
        acc += e * Eigen::Vector3d(grid.x0 + grid.dx * x, grid.y0 + grid.dy * y,
                                   depth_coordinate(z, h3d.depth, depth_extent));
      }
    }
  }
  return acc / total;
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// softplus(sum_xy U_xy softmax(H2D)_xy) + epsilon.
inline double aggregate_uncertainty(const Eigen::MatrixXd& u, const Eigen::MatrixXd& h2d,
                                    double epsilon = kDefaultSigmaEpsilon) {
  require(u.rows() == h2d.rows() && u.cols() == h2d.cols(), ErrorKind::Dimension,
          "uncertainty map and 2D heatmap differ in size");
  require(u.allFinite(), ErrorKind::InvalidArgument, "uncertainty map must be finite");
  const double mean = (softmax(h2d).array() * u.array()).sum();
  return softplus(mean) + epsilon;
}

struct DecodedPoint {
  Eigen::Vector2d xy;
  Eigen::Vector3d xyz_rootrel;
  double sigma = 0.0;
};

inline DecodedPoint decode(const HeatmapStack& stack, const Grid& grid2d, const Grid& grid3d,
                           double depth_extent = kDefaultDepthExtent, double epsilon = kDefaultSigmaEpsilon) {
  return {soft_argmax_2d(stack.h2d, grid2d), soft_argmax_3d(stack.h3d, grid3d, depth_extent),
          aggregate_uncertainty(stack.u, stack.h2d, epsilon)};
}

/// Translation T minimizing sum_i |(p_i + T) - ((p_i + T) . z) r_i|^2 for rays
/// r_i = K^-1 [x_i, y_i, 1]: each root-relative point, shifted by T, should lie on its
/// pixel's viewing ray. Throws Error(Degenerate) when the rays do not pin down T.
inline Eigen::Vector3d camera_translation(const Eigen::Ref<const Eigen::MatrixX2d>& p2d, const Eigen::Ref<const Points>& p3d,
                                          const Eigen::Matrix3d& intrinsics) {
  require(p2d.rows() == p3d.rows(), ErrorKind::Dimension, "2D and 3D point counts differ");
  require(p2d.rows() >= 2, ErrorKind::InvalidArgument, "camera fusion needs at least 2 points");
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(intrinsics);
  require(lu.isInvertible(), ErrorKind::InvalidArgument, "intrinsics matrix is not invertible");
  const Eigen::Matrix3d k_inv = lu.inverse();

  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < p2d.rows(); ++i) {
    Eigen::Vector3d ray = k_inv * Eigen::Vector3d(p2d(i, 0), p2d(i, 1), 1.0);
    ray /= ray.z();
    // residual = (I - r z^T)(p + T)
    const Eigen::Matrix3d a = Eigen::Matrix3d::Identity() - ray * Eigen::Vector3d::UnitZ().transpose();
    const Eigen::Matrix3d ata = a.transpose() * a;
    normal += ata;
    rhs -= ata * p3d.row(i).transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(normal);
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > 1e-12 * ev(2))) {
    throw Error(ErrorKind::Degenerate, "viewing rays are (nearly) identical; camera translation is not determined");
  }
  return eig.eigenvectors() * (eig.eigenvectors().transpose() * rhs).cwiseQuotient(ev);
}

/// Absolute camera-space points p3d + T.
inline Points fuse_to_camera(const Eigen::Ref<const Eigen::MatrixX2d>& p2d, const Eigen::Ref<const Points>& p3d_rootrel,
                             const Eigen::Matrix3d& intrinsics) {
  const Eigen::Vector3d t = camera_translation(p2d, p3d_rootrel, intrinsics);
  return p3d_rootrel.rowwise() + t.transpose();
}

}  // namespace bodyfit
