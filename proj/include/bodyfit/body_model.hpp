#pragma once

#include "bodyfit/common.hpp"

#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <utility>

namespace bodyfit {

/// Linear-blend-skinned body model with linear shape blendshapes and one body
/// part per joint. Immutable once constructed; the constructor validates every
/// invariant and throws Error(Invariant) naming the offending row or index.
class BodyModel {
 public:
  static constexpr int kRootParent = -1;
  static constexpr double kRowSumTolerance = 1e-9;

  /// shape_blendshapes is (3 N_v) x N_beta: row 3v+c holds coordinate c of vertex v.
  BodyModel(Points template_vertices,
            RowMatrix shape_blendshapes,
            RowMatrix joint_regressor,
            RowMatrix skinning_weights,
            std::vector<int> parent,
            std::vector<std::vector<int>> part_joints)
      : template_vertices_(std::move(template_vertices)),
        shape_blendshapes_(std::move(shape_blendshapes)),
        joint_regressor_(std::move(joint_regressor)),
        skinning_weights_(std::move(skinning_weights)),
        parent_(std::move(parent)),
        part_joints_(std::move(part_joints)) {
    validate();
    build_caches();
  }

  int num_vertices() const { return static_cast<int>(template_vertices_.rows()); }
  int num_joints() const { return static_cast<int>(parent_.size()); }
  int num_parts() const { return num_joints(); }
  int num_betas() const { return static_cast<int>(shape_blendshapes_.cols()); }

  const Points& template_vertices() const { return template_vertices_; }
  const RowMatrix& shape_blendshapes() const { return shape_blendshapes_; }
  const RowMatrix& joint_regressor() const { return joint_regressor_; }
  const RowMatrix& skinning_weights() const { return skinning_weights_; }
  const std::vector<int>& parent() const { return parent_; }
  const std::vector<std::vector<int>>& part_joints() const { return part_joints_; }

  /// argmax_k skinning_weights(v, k), ties to the lowest k.
  const std::vector<int>& part_vertex_index() const { return part_vertex_index_; }
  const std::vector<std::vector<int>>& part_vertices() const { return part_vertices_; }
  const std::vector<std::vector<int>>& children() const { return children_; }

  /// Joint regressor applied to the template (N_j x 3).
  const Points& template_joints() const { return template_joints_; }
  /// Joint regressor applied to the shape blendshapes, (3 N_j) x N_beta.
  const RowMatrix& joint_shape_dirs() const { return joint_shape_dirs_; }

  /// Nonzero skinning entries of vertex v as [begin, end) into skin_joint/skin_weight.
  std::pair<int, int> skin_range(int v) const { return {skin_offsets_[v], skin_offsets_[v + 1]}; }
  int skin_joint(int i) const { return skin_joints_[i]; }
  double skin_weight(int i) const { return skin_values_[i]; }

 private:
  void validate() const {
    const auto nv = template_vertices_.rows();
    const auto nj = static_cast<Eigen::Index>(parent_.size());
    require(nv > 0, ErrorKind::Invariant, "template_vertices is empty");
    require(nj >= 1, ErrorKind::Invariant, "parent array is empty");
    require(template_vertices_.allFinite(), ErrorKind::Invariant, "template_vertices contains non-finite values");
    require(shape_blendshapes_.rows() == 3 * nv, ErrorKind::Invariant,
            "shape_blendshapes must have 3*N_v rows");
    require(shape_blendshapes_.allFinite(), ErrorKind::Invariant, "shape_blendshapes contains non-finite values");
    require(joint_regressor_.rows() == nj && joint_regressor_.cols() == nv, ErrorKind::Invariant,
            "joint_regressor must be N_j x N_v");
    require(skinning_weights_.rows() == nv && skinning_weights_.cols() == nj, ErrorKind::Invariant,
            "skinning_weights must be N_v x N_j");
    require(static_cast<Eigen::Index>(part_joints_.size()) == nj, ErrorKind::Invariant,
            "part_joints must have one list per joint");

    for (Eigen::Index v = 0; v < nv; ++v) {
      const auto row = skinning_weights_.row(v);
      if (!row.allFinite() || (row.array() < 0.0).any()) {
        throw Error(ErrorKind::Invariant, "skinning_weights row " + std::to_string(v) + " has negative or non-finite entries");
      }
      const double sum = row.sum();
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        std::ostringstream os;
        os << "skinning_weights row " << v << " sums to " << sum << ", expected 1";
        throw Error(ErrorKind::Invariant, os.str());
      }
    }
    for (Eigen::Index j = 0; j < nj; ++j) {
      const auto row = joint_regressor_.row(j);
      require(row.allFinite(), ErrorKind::Invariant, "joint_regressor row " + std::to_string(j) + " is not finite");
      const double sum = row.sum();
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        std::ostringstream os;
        os << "joint_regressor row " << j << " sums to " << sum << ", expected 1";
        throw Error(ErrorKind::Invariant, os.str());
      }
    }

    require(parent_[0] == kRootParent, ErrorKind::Invariant, "parent[0] must be the root sentinel -1");
    for (Eigen::Index k = 1; k < nj; ++k) {
      if (parent_[k] < 0 || parent_[k] >= k) {
        throw Error(ErrorKind::Invariant,
                    "parent[" + std::to_string(k) + "] = " + std::to_string(parent_[k]) + " violates topological order");
      }
    }

    std::vector<int> memberships(nj, 0);
    std::vector<bool> has_children(nj, false);
    for (Eigen::Index k = 1; k < nj; ++k) {
      has_children[parent_[k]] = true;
    }
    for (Eigen::Index k = 0; k < nj; ++k) {
      std::vector<bool> seen(nj, false);
      for (int j : part_joints_[k]) {
        if (j < 0 || j >= nj) {
          throw Error(ErrorKind::Invariant,
                      "part_joints[" + std::to_string(k) + "] references joint " + std::to_string(j));
        }
        if (seen[j]) {
          throw Error(ErrorKind::Invariant,
                      "part_joints[" + std::to_string(k) + "] lists joint " + std::to_string(j) + " twice");
        }
        seen[j] = true;
        ++memberships[j];
      }
    }
    for (Eigen::Index j = 1; j < nj; ++j) {
      if (has_children[j] && memberships[j] != 2) {
        throw Error(ErrorKind::Invariant, "interior joint " + std::to_string(j) + " belongs to " +
                                              std::to_string(memberships[j]) + " parts, expected 2");
      }
    }
  }

  void build_caches() {
    const int nv = num_vertices();
    const int nj = num_joints();
    const int nb = num_betas();

    part_vertex_index_.resize(nv);
    part_vertices_.assign(nj, {});
    for (int v = 0; v < nv; ++v) {
      Eigen::Index best = 0;
      skinning_weights_.row(v).maxCoeff(&best);  // first maximum wins
      part_vertex_index_[v] = static_cast<int>(best);
      part_vertices_[best].push_back(v);
    }

    children_.assign(nj, {});
    for (int k = 1; k < nj; ++k) {
      children_[parent_[k]].push_back(k);
    }

    template_joints_ = joint_regressor_ * template_vertices_;
    joint_shape_dirs_ = RowMatrix::Zero(3 * nj, nb);
    for (int j = 0; j < nj; ++j) {
      for (int v = 0; v < nv; ++v) {
        const double w = joint_regressor_(j, v);
        if (w != 0.0) {
          joint_shape_dirs_.middleRows(3 * j, 3) += w * shape_blendshapes_.middleRows(3 * v, 3);
        }
      }
    }

    skin_offsets_.assign(1, 0);
    for (int v = 0; v < nv; ++v) {
      for (int k = 0; k < nj; ++k) {
        const double w = skinning_weights_(v, k);
        if (w != 0.0) {
          skin_joints_.push_back(k);
          skin_values_.push_back(w);
        }
      }
      skin_offsets_.push_back(static_cast<int>(skin_joints_.size()));
    }
  }

  Points template_vertices_;
  RowMatrix shape_blendshapes_;
  RowMatrix joint_regressor_;
  RowMatrix skinning_weights_;
  std::vector<int> parent_;
  std::vector<std::vector<int>> part_joints_;

  std::vector<int> part_vertex_index_;
  std::vector<std::vector<int>> part_vertices_;
  std::vector<std::vector<int>> children_;
  Points template_joints_;
  RowMatrix joint_shape_dirs_;
  std::vector<int> skin_offsets_;
  std::vector<int> skin_joints_;
  std::vector<double> skin_values_;
};

/// Global per-part rotations, shape coefficients and root translation.
struct PoseParams {
  Rotations rotations;
  Eigen::VectorXd beta;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Mean-shaped T-pose at the origin.
  static PoseParams identity(const BodyModel& model) {
    PoseParams pose;
    pose.rotations.assign(model.num_parts(), Eigen::Matrix3d::Identity());
    pose.beta = Eigen::VectorXd::Zero(model.num_betas());
    return pose;
  }
};

struct Posed {
  Points vertices;
  Points joints;
};

inline void check_pose_dimensions(const BodyModel& model, const Rotations& rotations, Eigen::Index beta_size) {
  if (static_cast<int>(rotations.size()) != model.num_parts()) {
    throw Error(ErrorKind::Dimension, "expected " + std::to_string(model.num_parts()) + " rotations, got " +
                                          std::to_string(rotations.size()));
  }
  if (beta_size != model.num_betas()) {
    throw Error(ErrorKind::Dimension,
                "expected " + std::to_string(model.num_betas()) + " betas, got " + std::to_string(beta_size));
  }
}

/// Rest-pose joints j(beta) = joint_regressor * (template + S beta).
inline Points rest_joints(const BodyModel& model, const Eigen::VectorXd& beta) {
  Points joints = model.template_joints();
  const Eigen::VectorXd offsets = model.joint_shape_dirs() * beta;
  for (int j = 0; j < model.num_joints(); ++j) {
    joints.row(j) += offsets.segment<3>(3 * j).transpose();
  }
  return joints;
}

/// Chains rest joints through global rotations: j'_root = j_root,
/// j'_k = j'_parent + R_parent (j_k - j_parent).
inline Points posed_joints(const BodyModel& model, const Rotations& rotations, const Points& rest) {
  Points posed(model.num_joints(), 3);
  posed.row(0) = rest.row(0);
  for (int k = 1; k < model.num_joints(); ++k) {
    const int p = model.parent()[k];
    posed.row(k) = posed.row(p) + (rotations[p] * (rest.row(k) - rest.row(p)).transpose()).transpose();
  }
  return posed;
}

/// Forward kinematics with global rotations. `vertex_rows` selects which vertices to pose;
/// an empty span poses all of them. Vertices come back in the order of `vertex_rows`.
inline Posed forward(const BodyModel& model, const PoseParams& pose, std::span<const int> vertex_rows = {}) {
  check_pose_dimensions(model, pose.rotations, pose.beta.size());
  const int nj = model.num_joints();
  const Points rest = rest_joints(model, pose.beta);

  Posed out;
  out.joints = posed_joints(model, pose.rotations, rest);

  // v' = sum_k w_k R_k T_v + sum_k w_k (j'_k - R_k j_k) + t
  std::vector<Eigen::Vector3d> offsets(nj);
  for (int k = 0; k < nj; ++k) {
    offsets[k] = out.joints.row(k).transpose() - pose.rotations[k] * rest.row(k).transpose();
  }

  const bool all_rows = vertex_rows.empty();
  const int n = all_rows ? model.num_vertices() : static_cast<int>(vertex_rows.size());
  out.vertices.resize(n, 3);
  const auto& shape = model.shape_blendshapes();
  for (int i = 0; i < n; ++i) {
    const int v = all_rows ? i : vertex_rows[i];
    const Eigen::Vector3d shaped =
        model.template_vertices().row(v).transpose() + shape.middleRows(3 * v, 3) * pose.beta;
    Eigen::Matrix3d blend = Eigen::Matrix3d::Zero();
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    const auto [begin, end] = model.skin_range(v);
    for (int s = begin; s < end; ++s) {
      const int k = model.skin_joint(s);
      const double w = model.skin_weight(s);
      blend += w * pose.rotations[k];
      offset += w * offsets[k];
    }
    out.vertices.row(i) = (blend * shaped + offset + pose.translation).transpose();
  }
  out.joints.rowwise() += pose.translation.transpose();
  return out;
}

/// Exact Jacobian of the stacked [vertices; joints] output of forward() with respect to
/// [beta; t] at fixed rotations. Rows are 3 per point (vertices in `vertex_rows` order,
/// then all joints); columns are N_beta shape coefficients followed by t_x, t_y, t_z.
/// forward() is affine in (beta, t), so forward(beta, t) = forward(0, 0) + J [beta; t].
inline Eigen::MatrixXd shape_jacobian(const BodyModel& model, const Rotations& rotations,
                                      std::span<const int> vertex_rows = {}) {
  check_pose_dimensions(model, rotations, model.num_betas());
  const int nj = model.num_joints();
  const int nb = model.num_betas();
  const auto& joint_dirs = model.joint_shape_dirs();

  // d j'_k / d beta along the kinematic tree.
  std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> joint_jac(nj);
  joint_jac[0] = joint_dirs.middleRows(0, 3);
  for (int k = 1; k < nj; ++k) {
    const int p = model.parent()[k];
    joint_jac[k] = joint_jac[p] + rotations[p] * (joint_dirs.middleRows(3 * k, 3) - joint_dirs.middleRows(3 * p, 3));
  }
  std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> offset_jac(nj);
  for (int k = 0; k < nj; ++k) {
    offset_jac[k] = joint_jac[k] - rotations[k] * joint_dirs.middleRows(3 * k, 3);
  }

  const bool all_rows = vertex_rows.empty();
  const int n = all_rows ? model.num_vertices() : static_cast<int>(vertex_rows.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * (n + nj), nb + 3);
  const auto& shape = model.shape_blendshapes();
  Eigen::Matrix<double, 3, Eigen::Dynamic> offset(3, nb);
  for (int i = 0; i < n; ++i) {
    const int v = all_rows ? i : vertex_rows[i];
    Eigen::Matrix3d blend = Eigen::Matrix3d::Zero();
    offset.setZero();
    const auto [begin, end] = model.skin_range(v);
    for (int s = begin; s < end; ++s) {
      const int k = model.skin_joint(s);
      const double w = model.skin_weight(s);
      blend += w * rotations[k];
      offset += w * offset_jac[k];
    }
    jac.block(3 * i, 0, 3, nb) = blend * shape.middleRows(3 * v, 3) + offset;
    jac.block<3, 3>(3 * i, nb).setIdentity();
  }
  for (int k = 0; k < nj; ++k) {
    jac.block(3 * (n + k), 0, 3, nb) = joint_jac[k];
    jac.block<3, 3>(3 * (n + k), nb).setIdentity();
  }
  return jac;
}

/// R_rel_k = R_parent^T R_k; the root keeps its global rotation.
inline Rotations to_parent_relative(const BodyModel& model, const Rotations& global) {
  check_pose_dimensions(model, global, model.num_betas());
  Rotations relative(global.size());
  relative[0] = global[0];
  for (int k = 1; k < model.num_joints(); ++k) {
    relative[k] = global[model.parent()[k]].transpose() * global[k];
  }
  return relative;
}

inline Rotations to_global(const BodyModel& model, const Rotations& relative) {
  check_pose_dimensions(model, relative, model.num_betas());
  Rotations global(relative.size());
  global[0] = relative[0];
  for (int k = 1; k < model.num_joints(); ++k) {
    global[k] = global[model.parent()[k]] * relative[k];
  }
  return global;
}

}  // namespace bodyfit
