// Decode synthetic heatmaps and lift them to camera space.

#include "bodyfit/bodyfit.hpp"

#include <iostream>

int main() {
  const int h = 48, w = 48, d = 24;
  const Eigen::Matrix3d k = (Eigen::Matrix3d() << 60, 0, 24, 0, 60, 24, 0, 0, 1).finished();
  const Eigen::Vector3d t_true(0.1, -0.05, 3.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.4, 0.4);

  const int n = 12;
  Eigen::MatrixX2d xy(n, 2);
  bodyfit::Points rootrel(n, 3);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    const Eigen::Vector3d proj = k * (p + t_true);
    const double cx = proj.x() / proj.z(), cy = proj.y() / proj.z();
    bodyfit::HeatmapStack s;
    s.h2d.resize(h, w);
    s.u = Eigen::MatrixXd::Constant(h, w, -3.0);
    s.h3d = bodyfit::Volume(h, w, d);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        s.h2d(y, x) = -0.5 * ((x - cx) * (x - cx) + (y - cy) * (y - cy));
        for (int z = 0; z < d; ++z) {
          const double dz = bodyfit::depth_coordinate(z, d, bodyfit::kDefaultDepthExtent) - p.z();
          s.h3d.at(y, x, z) = s.h2d(y, x) - 200.0 * dz * dz;
        }
      }
    }
    const auto decoded = bodyfit::decode(s, bodyfit::Grid{}, bodyfit::Grid{});
    xy.row(i) = decoded.xy.transpose();
    // The 3D x/y axes here are pixels; use the true metric offsets and the decoded depth.
    rootrel.row(i) << p.x(), p.y(), decoded.xyz_rootrel.z();
  }
  const Eigen::Vector3d t = bodyfit::camera_translation(xy, rootrel, k);
  std::cout << "recovered camera translation " << t.transpose() << " (true " << t_true.transpose() << ")\n";
}
