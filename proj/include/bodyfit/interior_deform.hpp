#pragma once

#include "bodyfit/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bodyfit {

/// Sparse convex weights tying interior points to mesh vertices, stored CSR-style.
struct InteriorWeightSet {
  std::vector<int> indptr{0};
  std::vector<int> indices;
  std::vector<double> weights;
  Points canonical_points;

  int point_count() const { return static_cast<int>(indptr.size()) - 1; }
};

/// Structural checks plus nonnegative weights summing to one per point.
inline void validate_weights(const InteriorWeightSet& w, int num_vertices = -1) {
  require(!w.indptr.empty() && w.indptr.front() == 0, ErrorKind::Parse, "indptr must start at 0");
  require(w.indices.size() == w.weights.size(), ErrorKind::Dimension, "indices and weights differ in length");
  require(static_cast<std::size_t>(w.indptr.back()) == w.indices.size(), ErrorKind::Dimension,
          "indptr does not cover the index array");
  require(w.canonical_points.rows() == w.point_count(), ErrorKind::Dimension,
          "canonical_points rows do not match indptr");
  for (int p = 0; p < w.point_count(); ++p) {
    require(w.indptr[p] <= w.indptr[p + 1], ErrorKind::Parse, "indptr must be nondecreasing");
    double total = 0.0;
    for (int i = w.indptr[p]; i < w.indptr[p + 1]; ++i) {
      if (w.indices[i] < 0 || (num_vertices >= 0 && w.indices[i] >= num_vertices)) {
        throw Error(ErrorKind::OutOfRange,
                    "point " + std::to_string(p) + " references vertex " + std::to_string(w.indices[i]));
      }
      require(w.weights[i] >= 0.0, ErrorKind::Invariant, "point " + std::to_string(p) + " has a negative weight");
      total += w.weights[i];
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorKind::Invariant, "weights of point " + std::to_string(p) + " sum to " + std::to_string(total));
    }
  }
}

/// out_p = sum_j w_pj v_j.
inline Points deform_points(const InteriorWeightSet& w, const Eigen::Ref<const Points>& posed_vertices) {
  const int nv = static_cast<int>(posed_vertices.rows());
  Points out(w.point_count(), 3);
  for (int p = 0; p < w.point_count(); ++p) {
    Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
    for (int i = w.indptr[p]; i < w.indptr[p + 1]; ++i) {
      const int v = w.indices[i];
      if (v < 0 || v >= nv) {
        throw Error(ErrorKind::OutOfRange, "point " + std::to_string(p) + " references vertex " + std::to_string(v) +
                                              " of " + std::to_string(nv));
      }
      acc += w.weights[i] * posed_vertices.row(v);
    }
    out.row(p) = acc;
  }
  return out;
}

/// Inverse-distance weights d^-power over the k nearest canonical vertices (brute-force
/// search, ties by lower index). A query that coincides with a vertex gets a one-hot weight.
/// These weights do not in general reproduce linear fields.
inline InteriorWeightSet knn_idw_weights(const Eigen::Ref<const Points>& canonical_vertices,
                                         const Eigen::Ref<const Points>& query_points, int k = 8, double power = 2.0) {
  require(k >= 1, ErrorKind::InvalidArgument, "k must be at least 1");
  require(power > 0.0, ErrorKind::InvalidArgument, "power must be positive");
  const int nv = static_cast<int>(canonical_vertices.rows());
  require(nv >= 1, ErrorKind::InvalidArgument, "no canonical vertices");
  const int kk = std::min(k, nv);

  InteriorWeightSet out;
  out.canonical_points = query_points;
  out.indptr.reserve(query_points.rows() + 1);
  std::vector<int> order(nv);
  std::vector<double> dist2(nv);
  for (Eigen::Index q = 0; q < query_points.rows(); ++q) {
    for (int v = 0; v < nv; ++v) {
      dist2[v] = (canonical_vertices.row(v) - query_points.row(q)).squaredNorm();
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + kk, order.end(),
                      [&](int a, int b) { return dist2[a] < dist2[b] || (dist2[a] == dist2[b] && a < b); });
    if (dist2[order[0]] == 0.0) {
      out.indices.push_back(order[0]);
      out.weights.push_back(1.0);
    } else {
      double total = 0.0;
      const std::size_t first = out.weights.size();
      for (int i = 0; i < kk; ++i) {
        const double w = std::pow(dist2[order[i]], -0.5 * power);
        out.indices.push_back(order[i]);
        out.weights.push_back(w);
        total += w;
      }
      for (std::size_t i = first; i < out.weights.size(); ++i) {
        out.weights[i] /= total;
      }
    }
    out.indptr.push_back(static_cast<int>(out.indices.size()));
  }
  return out;
}

}  // namespace bodyfit
