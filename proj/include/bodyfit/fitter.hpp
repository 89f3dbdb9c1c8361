#pragma once

#include "bodyfit/body_model.hpp"
#include "bodyfit/rotation.hpp"
#include "bodyfit/shape_solver.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <numeric>
#include <random>

namespace bodyfit {

/// Target point cloud for fitting. `vertices` holds either all N_v model vertices or,
/// when `vertex_indices` is set, only those vertices in that order. `sigmas` holds one
/// uncertainty per vertex row followed by one per joint.
struct FitTarget {
  Points vertices;
  std::optional<std::vector<int>> vertex_indices;
  Points joints;
  std::optional<Eigen::VectorXd> sigmas;
};

struct FitConfig {
  int n_iters = 3;
  /// Vertex weight in the independent rotation step; joints get 1 - alpha.
  double vertex_weight_alpha = 1e-6;
  ShapeSolveConfig shape_cfg;
  /// Restricts fitting to these model vertices when the target holds all of them.
  std::optional<std::vector<int>> vertex_subset;
  bool use_uncertainty_weights = false;
  double uncertainty_exponent = 1.5;
  /// Whether uncertainty weights also enter the kinematic-chain refinement.
  bool uncertainty_in_refinement = true;
};

struct FitResult {
  PoseParams pose;
  /// Vertex RMSE over the fitted rows after each (rotation, shape) iteration.
  std::vector<double> per_iteration_vertex_rmse;
  /// Vertex RMSE after refinement, over all vertices when the target has all of them.
  double final_vertex_rmse = 0.0;
  double final_joint_rmse = 0.0;
  double joint_rmse_before_refinement = 0.0;
};

struct SharedFitResult {
  std::vector<FitResult> results;
  Eigen::VectorXd beta;
};

namespace detail {

struct FitProblem {
  std::vector<int> rows;                 // model vertex indices being fitted
  Points target_vertices;                // target rows matching `rows`
  std::optional<Points> full_target;     // all N_v target vertices, when available
  Points target_joints;
  Eigen::VectorXd point_weights;         // rows then joints, mean 1
  bool weighted = false;
  std::vector<std::vector<int>> part_rows;  // per part, positions into `rows`
};

struct FitState {
  PoseParams pose;
  Posed fit;  // vertices over `rows`
};

inline void check_part_rank(const BodyModel& model, const FitProblem& problem) {
  for (int k = 0; k < model.num_parts(); ++k) {
    Points pts(static_cast<Eigen::Index>(problem.part_rows[k].size() + model.part_joints()[k].size()), 3);
    Eigen::Index n = 0;
    for (int i : problem.part_rows[k]) {
      pts.row(n++) = model.template_vertices().row(problem.rows[i]);
    }
    for (int j : model.part_joints()[k]) {
      pts.row(n++) = model.template_joints().row(j);
    }
    bool ok = n >= 3;
    if (ok) {
      const Points centered = pts.rowwise() - pts.colwise().mean();
      const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
      const auto s = svd.singularValues();
      ok = s(0) > 0.0 && s(1) > 1e-9 * s(0);
    }
    if (!ok) {
      throw Error(ErrorKind::Degenerate, "body part " + std::to_string(k) +
                                             " has fewer than 3 non-collinear points to fit a rotation");
    }
  }
}

inline FitProblem make_problem(const BodyModel& model, const FitTarget& target, const FitConfig& cfg) {
  const int nv = model.num_vertices();
  const int nj = model.num_joints();
  FitProblem problem;

  require(target.joints.rows() == nj, ErrorKind::Dimension,
          "target has " + std::to_string(target.joints.rows()) + " joints, model has " + std::to_string(nj));
  require(target.vertices.allFinite() && target.joints.allFinite(), ErrorKind::InvalidArgument,
          "target contains NaN or infinite coordinates");

  if (target.vertex_indices) {
    problem.rows = *target.vertex_indices;
    require(static_cast<Eigen::Index>(problem.rows.size()) == target.vertices.rows(), ErrorKind::Dimension,
            "vertex_indices and target vertices differ in length");
    problem.target_vertices = target.vertices;
  } else {
    require(target.vertices.rows() == nv, ErrorKind::Dimension,
            "target has " + std::to_string(target.vertices.rows()) + " vertices, model has " + std::to_string(nv));
    problem.full_target = target.vertices;
    if (cfg.vertex_subset) {
      problem.rows = *cfg.vertex_subset;
      problem.target_vertices.resize(static_cast<Eigen::Index>(problem.rows.size()), 3);
    } else {
      problem.rows.resize(nv);
      std::iota(problem.rows.begin(), problem.rows.end(), 0);
      problem.target_vertices = target.vertices;
    }
  }

  std::vector<bool> seen(nv, false);
  for (std::size_t i = 0; i < problem.rows.size(); ++i) {
    const int v = problem.rows[i];
    if (v < 0 || v >= nv) {
      throw Error(ErrorKind::OutOfRange, "vertex index " + std::to_string(v) + " out of range");
    }
    if (seen[v]) {
      throw Error(ErrorKind::InvalidArgument, "vertex index " + std::to_string(v) + " listed twice");
    }
    seen[v] = true;
  }
  if (problem.full_target && cfg.vertex_subset) {
    for (std::size_t i = 0; i < problem.rows.size(); ++i) {
      problem.target_vertices.row(static_cast<Eigen::Index>(i)) = problem.full_target->row(problem.rows[i]);
    }
  }
  problem.target_joints = target.joints;

  const auto n_points = static_cast<Eigen::Index>(problem.rows.size()) + nj;
  problem.point_weights = Eigen::VectorXd::Ones(n_points);
  if (cfg.use_uncertainty_weights) {
    require(target.sigmas.has_value(), ErrorKind::InvalidArgument, "uncertainty weighting requested but target has no sigmas");
    const Eigen::VectorXd& sigmas = *target.sigmas;
    require(sigmas.size() == n_points, ErrorKind::Dimension,
            "sigmas must have one entry per fitted vertex and joint");
    require(sigmas.allFinite() && (sigmas.array() > 0.0).all(), ErrorKind::InvalidArgument,
            "sigmas must be finite and strictly positive");
    problem.point_weights = sigmas.array().pow(-cfg.uncertainty_exponent).matrix();
    problem.point_weights /= problem.point_weights.mean();
    problem.weighted = true;
  } else if (target.sigmas) {
    require(target.sigmas->size() == n_points, ErrorKind::Dimension,
            "sigmas must have one entry per fitted vertex and joint");
  }

  problem.part_rows.assign(model.num_parts(), {});
  for (std::size_t i = 0; i < problem.rows.size(); ++i) {
    problem.part_rows[model.part_vertex_index()[problem.rows[i]]].push_back(static_cast<int>(i));
  }
  check_part_rank(model, problem);
  return problem;
}

/// Step 1: independent weighted Kabsch per part, composed onto the current rotations.
inline void rotation_step(const BodyModel& model, const FitProblem& problem, FitState& state, double alpha) {
  const auto n_rows = static_cast<int>(problem.rows.size());
  Rotations updated = state.pose.rotations;
  for (int k = 0; k < model.num_parts(); ++k) {
    const auto& verts = problem.part_rows[k];
    const auto& joints = model.part_joints()[k];
    const auto n = static_cast<Eigen::Index>(verts.size() + joints.size());
    Points target(n, 3);
    Points source(n, 3);
    Eigen::VectorXd weights(n);
    Eigen::Index i = 0;
    for (int r : verts) {
      target.row(i) = problem.target_vertices.row(r);
      source.row(i) = state.fit.vertices.row(r);
      weights(i++) = alpha * problem.point_weights(r);
    }
    for (int j : joints) {
      target.row(i) = problem.target_joints.row(j);
      source.row(i) = state.fit.joints.row(j);
      weights(i++) = (1.0 - alpha) * problem.point_weights(n_rows + j);
    }
    const Eigen::Matrix3d increment = project_to_so3(weighted_covariance(target, source, weights));
    updated[k] = project_to_so3(increment * state.pose.rotations[k]);
  }
  state.pose.rotations = std::move(updated);
  state.fit = forward(model, state.pose, problem.rows);
}

inline Eigen::VectorXd stack_points(const Points& vertices, const Points& joints) {
  Eigen::VectorXd out(3 * (vertices.rows() + joints.rows()));
  out.head(3 * vertices.rows()) = vertices.reshaped<Eigen::RowMajor>();
  out.tail(3 * joints.rows()) = joints.reshaped<Eigen::RowMajor>();
  return out;
}

/// Step 2: one regularized least-squares solve for a shared beta and per-problem translations.
inline void shape_step(const BodyModel& model, const std::vector<FitProblem>& problems, std::vector<FitState>& states,
                       const ShapeSolveConfig& cfg) {
  const int nb = model.num_betas();
  const int nj = model.num_joints();
  const auto n_targets = static_cast<Eigen::Index>(problems.size());
  require(cfg.unpenalized_prefix >= 0 && cfg.unpenalized_prefix <= nb, ErrorKind::InvalidArgument,
          "unpenalized_prefix must lie in [0, N_beta]");

  Eigen::Index total_rows = 0;
  bool weighted = false;
  for (const auto& p : problems) {
    total_rows += 3 * (static_cast<Eigen::Index>(p.rows.size()) + nj);
    weighted = weighted || p.weighted;
  }

  Eigen::MatrixXd jacobian = Eigen::MatrixXd::Zero(total_rows, nb + 3 * n_targets);
  Eigen::VectorXd residual(total_rows);
  Eigen::VectorXd weights(total_rows / 3);
  Eigen::Index offset = 0;
  for (Eigen::Index t = 0; t < n_targets; ++t) {
    const auto& problem = problems[t];
    const auto& rotations = states[t].pose.rotations;
    const Eigen::MatrixXd jac = shape_jacobian(model, rotations, problem.rows);
    PoseParams base{rotations, Eigen::VectorXd::Zero(nb), Eigen::Vector3d::Zero()};
    const Posed zero_shape = forward(model, base, problem.rows);
    const auto rows = jac.rows();
    jacobian.block(offset, 0, rows, nb) = jac.leftCols(nb);
    jacobian.block(offset, nb + 3 * t, rows, 3) = jac.rightCols(3);
    residual.segment(offset, rows) = stack_points(problem.target_vertices, problem.target_joints) -
                                     stack_points(zero_shape.vertices, zero_shape.joints);
    weights.segment(offset / 3, rows / 3) = problem.point_weights;
    offset += rows;
  }

  Eigen::VectorXd penalty = Eigen::VectorXd::Zero(jacobian.cols());
  penalty.segment(cfg.unpenalized_prefix, nb - cfg.unpenalized_prefix).setOnes();
  const Eigen::VectorXd x =
      solve_regularized_least_squares(jacobian, residual, weighted ? &weights : nullptr, cfg.ridge_lambda, penalty);

  for (Eigen::Index t = 0; t < n_targets; ++t) {
    states[t].pose.beta = x.head(nb);
    states[t].pose.translation = x.segment<3>(nb + 3 * t);
    states[t].fit = forward(model, states[t].pose, problems[t].rows);
  }
}

/// Step 3: one pass along the kinematic tree, anchoring each part at the pivot implied
/// by its already-refined parent and the current shape.
inline void refinement_step(const BodyModel& model, const FitProblem& problem, FitState& state,
                            bool use_weights) {
  const int nj = model.num_joints();
  const auto n_rows = static_cast<int>(problem.rows.size());
  const Points rest = rest_joints(model, state.pose.beta);
  const Points& old_joints = state.fit.joints;

  Points new_pivots(nj, 3);
  new_pivots.row(0) = old_joints.row(0);
  for (int k = 0; k < nj; ++k) {
    if (k > 0) {
      const int p = model.parent()[k];
      new_pivots.row(k) =
          new_pivots.row(p) + (state.pose.rotations[p] * (rest.row(k) - rest.row(p)).transpose()).transpose();
    }
    const auto& verts = problem.part_rows[k];
    const auto& joints = model.part_joints()[k];
    const auto n = static_cast<Eigen::Index>(verts.size() + joints.size());
    Points target(n, 3);
    Points source(n, 3);
    Eigen::VectorXd weights(n);
    Eigen::Index i = 0;
    for (int r : verts) {
      target.row(i) = problem.target_vertices.row(r) - new_pivots.row(k);
      source.row(i) = state.fit.vertices.row(r) - old_joints.row(k);
      weights(i++) = use_weights ? problem.point_weights(r) : 1.0;
    }
    for (int j : joints) {
      target.row(i) = problem.target_joints.row(j) - new_pivots.row(k);
      source.row(i) = old_joints.row(j) - old_joints.row(k);
      weights(i++) = use_weights ? problem.point_weights(n_rows + j) : 1.0;
    }
    const Eigen::Matrix3d increment = project_to_so3(pivot_anchored_covariance(target, source, weights));
    state.pose.rotations[k] = project_to_so3(increment * state.pose.rotations[k]);
  }
  state.fit = forward(model, state.pose, problem.rows);
}

}  // namespace detail

/// Fits several observations of one subject with a single shape vector: rotation and
/// refinement steps run per observation, the shape step solves one least squares with a
/// shared beta and one translation per observation.
inline SharedFitResult fit_shared_beta(const BodyModel& model, const std::vector<FitTarget>& targets,
                                       const FitConfig& cfg) {
  require(!targets.empty(), ErrorKind::InvalidArgument, "need at least one target");
  require(cfg.n_iters >= 1, ErrorKind::InvalidArgument, "n_iters must be at least 1");
  require(cfg.vertex_weight_alpha > 0.0 && cfg.vertex_weight_alpha < 1.0, ErrorKind::InvalidArgument,
          "vertex_weight_alpha must lie in (0, 1)");

  std::vector<detail::FitProblem> problems;
  problems.reserve(targets.size());
  for (const auto& target : targets) {
    problems.push_back(detail::make_problem(model, target, cfg));
  }

  std::vector<detail::FitState> states(targets.size());
  SharedFitResult out;
  out.results.resize(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    states[t].pose = PoseParams::identity(model);
    states[t].fit = forward(model, states[t].pose, problems[t].rows);
  }

  for (int iter = 0; iter < cfg.n_iters; ++iter) {
    for (std::size_t t = 0; t < targets.size(); ++t) {
      detail::rotation_step(model, problems[t], states[t], cfg.vertex_weight_alpha);
    }
    detail::shape_step(model, problems, states, cfg.shape_cfg);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      out.results[t].per_iteration_vertex_rmse.push_back(rmse(states[t].fit.vertices, problems[t].target_vertices));
    }
  }

  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto& result = out.results[t];
    result.joint_rmse_before_refinement = rmse(states[t].fit.joints, problems[t].target_joints);
    detail::refinement_step(model, problems[t], states[t],
                            problems[t].weighted && cfg.uncertainty_in_refinement);
    result.pose = states[t].pose;
    result.final_joint_rmse = rmse(states[t].fit.joints, problems[t].target_joints);
    if (problems[t].full_target) {
      const Posed full = forward(model, result.pose);
      result.final_vertex_rmse = rmse(full.vertices, *problems[t].full_target);
    } else {
      result.final_vertex_rmse = rmse(states[t].fit.vertices, problems[t].target_vertices);
    }
  }
  out.beta = states.front().pose.beta;
  return out;
}

/// Fits rotations, shape and translation of `model` to one target.
inline FitResult fit(const BodyModel& model, const FitTarget& target, const FitConfig& cfg = {}) {
  return std::move(fit_shared_beta(model, {target}, cfg).results.front());
}

/// Fits to the vertices listed in cfg.vertex_subset (all joints are still used) and
/// reports the final vertex RMSE over the full model.
inline FitResult fit_subset(const BodyModel& model, const FitTarget& full_target, const FitConfig& cfg) {
  require(cfg.vertex_subset.has_value(), ErrorKind::InvalidArgument, "fit_subset needs cfg.vertex_subset");
  require(!full_target.vertex_indices.has_value(), ErrorKind::InvalidArgument,
          "fit_subset expects a target holding all model vertices");
  return fit(model, full_target, cfg);
}

/// Uniform stratified vertex subset: each part contributes in proportion to its vertex
/// count (at least three vertices while it has them). Sorted, deterministic in `seed`.
inline std::vector<int> stratified_subset(const BodyModel& model, int count, std::uint64_t seed) {
  const int nv = model.num_vertices();
  require(count >= 0 && count <= nv, ErrorKind::InvalidArgument, "subset size must lie in [0, N_v]");
  std::mt19937_64 rng(seed);
  const auto& parts = model.part_vertices();
  const int np = model.num_parts();

  std::vector<int> take(np, 0);
  int assigned = 0;
  std::vector<std::pair<double, int>> remainders;
  for (int k = 0; k < np; ++k) {
    const double share = static_cast<double>(count) * static_cast<double>(parts[k].size()) / nv;
    take[k] = std::min<int>(static_cast<int>(std::floor(share)), static_cast<int>(parts[k].size()));
    assigned += take[k];
    remainders.emplace_back(share - std::floor(share), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < count && i < remainders.size(); ++i) {
    const int k = remainders[i].second;
    if (take[k] < static_cast<int>(parts[k].size())) {
      ++take[k];
      ++assigned;
    }
  }
  // Top up small parts to three vertices by taking from the largest ones.
  for (int k = 0; k < np && count >= 3 * np; ++k) {
    while (take[k] < std::min<int>(3, static_cast<int>(parts[k].size()))) {
      const auto donor = std::max_element(take.begin(), take.end()) - take.begin();
      --take[donor];
      ++take[k];
    }
  }

  std::vector<int> subset;
  subset.reserve(count);
  for (int k = 0; k < np; ++k) {
    std::vector<int> pool = parts[k];
    // Stratify along the part's index order, one random pick per stratum.
    const auto n = static_cast<double>(pool.size());
    for (int i = 0; i < take[k]; ++i) {
      const auto lo = static_cast<std::size_t>(std::floor(i * n / take[k]));
      const auto hi = std::max(lo + 1, static_cast<std::size_t>(std::floor((i + 1) * n / take[k])));
      std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
      subset.push_back(pool[pick(rng)]);
    }
  }
  std::sort(subset.begin(), subset.end());
  return subset;
}

}  // namespace bodyfit
