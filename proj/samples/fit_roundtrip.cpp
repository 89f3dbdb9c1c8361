// Pose a toy model, fit it back and print the per-iteration error curve.

#include "bodyfit/bodyfit.hpp"

#include <iostream>

int main() {
  const bodyfit::BodyModel model = bodyfit::make_toy_model(0, 602, 16, 10);
  std::mt19937_64 rng(7);
  const bodyfit::PoseParams truth = bodyfit::random_pose(model, rng);
  const bodyfit::FitTarget target = bodyfit::make_target(model, truth, 0.0, rng);

  bodyfit::FitConfig cfg;
  cfg.shape_cfg.ridge_lambda = 0.0;
  const bodyfit::FitResult result = bodyfit::fit(model, target, cfg);

  for (std::size_t i = 0; i < result.per_iteration_vertex_rmse.size(); ++i) {
    std::cout << "iteration " << i + 1 << ": vertex RMSE " << result.per_iteration_vertex_rmse[i] * 1e3 << " mm\n";
  }
  std::cout << "after refinement: vertex RMSE " << result.final_vertex_rmse * 1e3 << " mm, joint RMSE "
            << result.final_joint_rmse * 1e3 << " mm\n";
  std::cout << "beta error " << (result.pose.beta - truth.beta).norm() << ", mean joint angle error "
            << bodyfit::mean_angle_error(result.pose.rotations, truth.rotations) << " rad\n";
}
