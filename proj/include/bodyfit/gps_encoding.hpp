#pragma once

#include "bodyfit/tet_mesh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>

#include <lapacke.h>

#include <cmath>
#include <sstream>

namespace bodyfit {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct FemOperators {
  SparseMatrix stiffness;
  SparseMatrix mass;
};

/// Linear tetrahedral finite elements: stiffness from gradients of the barycentric hat
/// functions and the consistent mass matrix. No boundary rows are constrained, so the
/// discrete operator carries natural (Neumann) boundary conditions.
inline FemOperators fem_laplacian(const TetMesh& mesh) {
  validate_mesh(mesh);
  const int n = mesh.num_nodes();
  std::vector<Eigen::Triplet<double>> k_entries;
  std::vector<Eigen::Triplet<double>> m_entries;
  k_entries.reserve(static_cast<std::size_t>(mesh.num_tets()) * 16);
  m_entries.reserve(static_cast<std::size_t>(mesh.num_tets()) * 16);
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const Eigen::Matrix3d edges = tet_edges(mesh, t);
    const double volume = edges.determinant() / 6.0;
    // Rows of edges^-1 are the gradients of barycentric coordinates 1..3.
    const Eigen::Matrix3d inv = edges.inverse();
    Eigen::Matrix<double, 4, 3> grads;
    grads.bottomRows<3>() = inv;
    grads.row(0) = -inv.colwise().sum();
    const Eigen::Matrix4d local = volume * grads * grads.transpose();
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        k_entries.emplace_back(mesh.tets(t, a), mesh.tets(t, b), local(a, b));
        m_entries.emplace_back(mesh.tets(t, a), mesh.tets(t, b), volume / 20.0 * (a == b ? 2.0 : 1.0));
      }
    }
  }
  FemOperators ops;
  ops.stiffness.resize(n, n);
  ops.mass.resize(n, n);
  ops.stiffness.setFromTriplets(k_entries.begin(), k_entries.end());
  ops.mass.setFromTriplets(m_entries.begin(), m_entries.end());
  return ops;
}

/// Nonconstant Laplacian eigenpairs on a tet mesh, M-orthonormal, ascending.
struct TetEigenbasis {
  TetMesh mesh;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;  // num_nodes x count
};

/// Smallest `count` nonzero solutions of K phi = lambda M phi. The constant mode is solved
/// for and discarded. Each eigenvector's largest-magnitude entry is made positive.
/// Dense generalized solve (LAPACK dsygvx), meant for meshes of a few thousand nodes.
inline TetEigenbasis eigenbasis(const TetMesh& mesh, const FemOperators& ops, int count) {
  const int n = mesh.num_nodes();
  require(ops.stiffness.rows() == n && ops.mass.rows() == n, ErrorKind::Dimension, "operators do not match the mesh");
  require(count >= 1 && count + 1 <= n, ErrorKind::InvalidArgument, "eigenpair count must lie in [1, num_nodes - 1]");

  Eigen::MatrixXd a = Eigen::MatrixXd(ops.stiffness);
  Eigen::MatrixXd b = Eigen::MatrixXd(ops.mass);
  Eigen::VectorXd values(n);
  Eigen::MatrixXd vectors(n, count + 1);
  std::vector<lapack_int> failures(n);
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsygvx(LAPACK_COL_MAJOR, 1, 'V', 'I', 'U', n, a.data(), n, b.data(), n, 0.0, 0.0, 1,
                                         count + 1, 0.0, &found, values.data(), vectors.data(), n, failures.data());
  if (info != 0 || found != count + 1) {
    std::ostringstream os;
    os << "generalized eigensolver returned info=" << info << " with " << found << " of " << count + 1 << " pairs";
    throw Error(ErrorKind::Convergence, os.str());
  }

  TetEigenbasis basis;
  basis.mesh = mesh;
  basis.eigenvalues = values.segment(1, count);
  basis.eigenvectors = vectors.rightCols(count);
  for (int i = 0; i < count; ++i) {
    Eigen::Index at = 0;
    basis.eigenvectors.col(i).cwiseAbs().maxCoeff(&at);
    if (basis.eigenvectors(at, i) < 0.0) {
      basis.eigenvectors.col(i) *= -1.0;
    }
  }
  return basis;
}

inline TetEigenbasis eigenbasis(const TetMesh& mesh, int count) {
  return eigenbasis(mesh, fem_laplacian(mesh), count);
}

/// Global point signature phi_i / sqrt(lambda_i) at every mesh node, num_nodes x M.
inline Eigen::MatrixXd node_signatures(const TetEigenbasis& basis) {
  return basis.eigenvectors * basis.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal();
}

/// Evaluates the global point signature anywhere inside the mesh by barycentric
/// interpolation of the node values.
class SignatureField {
 public:
  explicit SignatureField(TetEigenbasis basis)
      : locator_(basis.mesh), node_values_(node_signatures(basis)), basis_(std::move(basis)) {}

  const TetEigenbasis& basis() const { return basis_; }
  int dimension() const { return static_cast<int>(node_values_.cols()); }

  Eigen::VectorXd operator()(const Eigen::Vector3d& p) const {
    const auto location = locator_.locate(p);
    if (!location) {
      std::ostringstream os;
      os << "point (" << p.x() << ", " << p.y() << ", " << p.z() << ") lies outside the mesh; nearest tet is "
         << locator_.distance_to_mesh(p) << " m away";
      throw Error(ErrorKind::OutOfRange, os.str());
    }
    const auto& tet = basis_.mesh.tets.row(location->tet);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(node_values_.cols());
    for (int c = 0; c < 4; ++c) {
      out += location->barycentric(c) * node_values_.row(tet(c)).transpose();
    }
    return out;
  }

 private:
  TetLocator locator_;
  Eigen::MatrixXd node_values_;
  TetEigenbasis basis_;
};

inline Eigen::VectorXd gps(const SignatureField& field, const Eigen::Vector3d& p) { return field(p); }

/// [sin(B p + b); cos(B p + b)] for an F x 3 frequency matrix B.
inline Eigen::VectorXd fourier_features(const Eigen::MatrixX3d& frequencies, const Eigen::VectorXd& bias,
                                        const Eigen::Vector3d& p) {
  require(bias.size() == frequencies.rows(), ErrorKind::Dimension, "bias must have one entry per frequency row");
  const Eigen::ArrayXd phase = (frequencies * p + bias).array();
  Eigen::VectorXd out(2 * frequencies.rows());
  out << phase.sin().matrix(), phase.cos().matrix();
  return out;
}

/// One feature row per point.
inline Eigen::MatrixXd fourier_feature_matrix(const Eigen::MatrixX3d& frequencies, const Eigen::VectorXd& bias,
                                              const Eigen::Ref<const Points>& points) {
  Eigen::MatrixXd out(points.rows(), 2 * frequencies.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out.row(i) = fourier_features(frequencies, bias, Eigen::Vector3d(points.row(i).transpose())).transpose();
  }
  return out;
}

/// Linear readout W minimizing mean_i |features_i W - targets_i|^2 + ridge |W|_F^2.
/// Using the mean keeps the solution unchanged when the sample set is duplicated.
inline Eigen::MatrixXd fit_readout(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double ridge) {
  require(features.rows() == targets.rows(), ErrorKind::Dimension, "features and targets differ in sample count");
  require(features.rows() >= features.cols(), ErrorKind::InvalidArgument, "readout needs at least 2F samples");
  require(ridge >= 0.0, ErrorKind::InvalidArgument, "ridge must be nonnegative");
  const double n = static_cast<double>(features.rows());
  Eigen::MatrixXd normal = features.transpose() * features / n;
  normal.diagonal().array() += ridge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  require(ldlt.info() == Eigen::Success, ErrorKind::Singular, "readout normal matrix is singular");
  return ldlt.solve(features.transpose() * targets / n);
}

}  // namespace bodyfit
