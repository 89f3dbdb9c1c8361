#pragma once

#include "bodyfit/common.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

namespace bodyfit {

using TetIndices = Eigen::Matrix<int, Eigen::Dynamic, 4, Eigen::RowMajor>;

struct TetMesh {
  Points nodes;
  TetIndices tets;

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  int num_tets() const { return static_cast<int>(tets.rows()); }
};

inline Eigen::Matrix3d tet_edges(const TetMesh& mesh, int t) {
  const Eigen::Vector3d a = mesh.nodes.row(mesh.tets(t, 0)).transpose();
  Eigen::Matrix3d d;
  for (int c = 0; c < 3; ++c) {
    d.col(c) = mesh.nodes.row(mesh.tets(t, c + 1)).transpose() - a;
  }
  return d;
}

inline double signed_volume(const TetMesh& mesh, int t) {
  return tet_edges(mesh, t).determinant() / 6.0;
}

/// Indices in range and every tet positively oriented with volume above `min_volume`.
inline void validate_mesh(const TetMesh& mesh, double min_volume = 1e-12) {
  require(mesh.num_nodes() >= 4 && mesh.num_tets() >= 1, ErrorKind::InvalidArgument, "mesh needs nodes and tets");
  require(mesh.nodes.allFinite(), ErrorKind::InvalidArgument, "mesh nodes must be finite");
  for (int t = 0; t < mesh.num_tets(); ++t) {
    for (int c = 0; c < 4; ++c) {
      const int n = mesh.tets(t, c);
      if (n < 0 || n >= mesh.num_nodes()) {
        throw Error(ErrorKind::OutOfRange, "tet " + std::to_string(t) + " references node " + std::to_string(n));
      }
    }
    const double volume = signed_volume(mesh, t);
    if (!(volume > min_volume)) {
      throw Error(ErrorKind::Degenerate, "tet " + std::to_string(t) + " has signed volume " + std::to_string(volume));
    }
  }
}

/// Unit cube [0,1]^3 split into divisions^3 cells of six Kuhn tetrahedra each.
inline TetMesh unit_cube_mesh(int divisions) {
  require(divisions >= 1, ErrorKind::InvalidArgument, "cube mesh needs at least one division");
  const int n = divisions + 1;
  TetMesh mesh;
  mesh.nodes.resize(n * n * n, 3);
  auto id = [n](int i, int j, int k) { return (k * n + j) * n + i; };
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        mesh.nodes.row(id(i, j, k)) << static_cast<double>(i) / divisions, static_cast<double>(j) / divisions,
            static_cast<double>(k) / divisions;
      }
    }
  }
  static constexpr std::array<std::array<int, 3>, 6> kAxisOrders{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  mesh.tets.resize(6 * divisions * divisions * divisions, 4);
  int t = 0;
  for (int k = 0; k < divisions; ++k) {
    for (int j = 0; j < divisions; ++j) {
      for (int i = 0; i < divisions; ++i) {
        for (const auto& order : kAxisOrders) {
          std::array<int, 3> corner{i, j, k};
          std::array<int, 4> tet{};
          tet[0] = id(corner[0], corner[1], corner[2]);
          for (int s = 0; s < 3; ++s) {
            ++corner[order[s]];
            tet[s + 1] = id(corner[0], corner[1], corner[2]);
          }
          mesh.tets.row(t) << tet[0], tet[1], tet[2], tet[3];
          if (signed_volume(mesh, t) < 0.0) {
            std::swap(mesh.tets(t, 2), mesh.tets(t, 3));
          }
          ++t;
        }
      }
    }
  }
  return mesh;
}

/// Closest point to p on triangle abc.
inline Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                                 const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct TetLocation {
  int tet = -1;
  Eigen::Vector4d barycentric = Eigen::Vector4d::Zero();
};

/// Point location over a uniform bucket grid of tet bounding boxes. Holds its own copy of the mesh.
class TetLocator {
 public:
  static constexpr double kInsideTolerance = 1e-10;

  explicit TetLocator(TetMesh mesh_in) : mesh_(std::move(mesh_in)) {
    const TetMesh& mesh = mesh_;
    const int nt = mesh.num_tets();
    inverse_edges_.resize(nt);
    lo_ = mesh.nodes.colwise().minCoeff().transpose();
    hi_ = mesh.nodes.colwise().maxCoeff().transpose();
    const int per_axis = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(nt) / 4.0)));
    cells_ = Eigen::Vector3i::Constant(per_axis);
    cell_size_ = ((hi_ - lo_).array() / per_axis).max(1e-12).matrix();
    buckets_.assign(static_cast<std::size_t>(per_axis) * per_axis * per_axis, {});
    for (int t = 0; t < nt; ++t) {
      inverse_edges_[t] = tet_edges(mesh, t).inverse();
      Eigen::Vector3d tlo = mesh.nodes.row(mesh.tets(t, 0)).transpose();
      Eigen::Vector3d thi = tlo;
      for (int c = 1; c < 4; ++c) {
        tlo = tlo.cwiseMin(mesh.nodes.row(mesh.tets(t, c)).transpose());
        thi = thi.cwiseMax(mesh.nodes.row(mesh.tets(t, c)).transpose());
      }
      const Eigen::Vector3i a = cell_of(tlo);
      const Eigen::Vector3i b = cell_of(thi);
      for (int k = a.z(); k <= b.z(); ++k) {
        for (int j = a.y(); j <= b.y(); ++j) {
          for (int i = a.x(); i <= b.x(); ++i) {
            buckets_[bucket(i, j, k)].push_back(t);
          }
        }
      }
    }
  }

  const TetMesh& mesh() const { return mesh_; }

  Eigen::Vector4d barycentric(int t, const Eigen::Vector3d& p) const {
    const Eigen::Vector3d l = inverse_edges_[t] * (p - mesh_.nodes.row(mesh_.tets(t, 0)).transpose());
    return {1.0 - l.sum(), l.x(), l.y(), l.z()};
  }

  std::optional<TetLocation> locate(const Eigen::Vector3d& p) const {
    if ((p.array() < lo_.array() - kInsideTolerance).any() || (p.array() > hi_.array() + kInsideTolerance).any()) {
      return std::nullopt;
    }
    const Eigen::Vector3i c = cell_of(p);
    for (int t : buckets_[bucket(c.x(), c.y(), c.z())]) {
      const Eigen::Vector4d b = barycentric(t, p);
      if (b.minCoeff() >= -kInsideTolerance) {
        return TetLocation{t, b};
      }
    }
    return std::nullopt;
  }

  /// Euclidean distance from p to the closest tet (zero when inside).
  double distance_to_mesh(const Eigen::Vector3d& p) const {
    static constexpr std::array<std::array<int, 3>, 4> kFaces{{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};
    if (locate(p)) {
      return 0.0;
    }
    double best = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh_.num_tets(); ++t) {
      for (const auto& f : kFaces) {
        const Eigen::Vector3d q = closest_point_on_triangle(p, mesh_.nodes.row(mesh_.tets(t, f[0])).transpose(),
                                                            mesh_.nodes.row(mesh_.tets(t, f[1])).transpose(),
                                                            mesh_.nodes.row(mesh_.tets(t, f[2])).transpose());
        best = std::min(best, (p - q).norm());
      }
    }
    return best;
  }

 private:
  Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const {
    Eigen::Vector3i c;
    for (int a = 0; a < 3; ++a) {
      c(a) = std::clamp(static_cast<int>(std::floor((p(a) - lo_(a)) / cell_size_(a))), 0, cells_(a) - 1);
    }
    return c;
  }

  std::size_t bucket(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * cells_.y() + j) * cells_.x() + i;
  }

  TetMesh mesh_;
  std::vector<Eigen::Matrix3d> inverse_edges_;
  Eigen::Vector3d lo_;
  Eigen::Vector3d hi_;
  Eigen::Vector3i cells_;
  Eigen::Vector3d cell_size_;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace bodyfit
