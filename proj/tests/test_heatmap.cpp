#include "test_util.hpp"

using namespace bodyfit;
using testutil::max_abs;

namespace {

Eigen::MatrixXd random_logits(std::mt19937_64& rng, int h, int w, double scale = 3.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Volume random_volume(std::mt19937_64& rng, int h, int w, int d, double scale = 3.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Volume v(h, w, d);
  for (double& x : v.data) x = normal(rng);
  return v;
}

// Independent oracle: explicit exp/sum without max subtraction (logits kept small).
Eigen::Vector2d direct_2d(const Eigen::MatrixXd& h, const Grid& g) {
  double total = 0.0;
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
      const double e = std::exp(h(r, c));
      total += e;
      acc += e * Eigen::Vector2d(g.x0 + g.dx * c, g.y0 + g.dy * r);
    }
  }
  return acc / total;
}

Eigen::Vector3d direct_3d(const Volume& v, const Grid& g, double extent) {
  double total = 0.0;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      for (int z = 0; z < v.depth; ++z) {
        const double e = std::exp(v.at(y, x, z));
        total += e;
        const double zc = extent * ((z + 0.5) / v.depth - 0.5);
        acc += e * Eigen::Vector3d(g.x0 + g.dx * x, g.y0 + g.dy * y, zc);
      }
    }
  }
  return acc / total;
}

Eigen::Matrix3d intrinsics() {
  Eigen::Matrix3d k;
  k << 1000, 0, 320, 0, 1000, 240, 0, 0, 1;
  return k;
}

Eigen::MatrixX2d project(const Points& camera_points, const Eigen::Matrix3d& k) {
  Eigen::MatrixX2d out(camera_points.rows(), 2);
  for (Eigen::Index i = 0; i < camera_points.rows(); ++i) {
    const Eigen::Vector3d h = k * camera_points.row(i).transpose();
    out.row(i) << h.x() / h.z(), h.y() / h.z();
  }
  return out;
}

Points random_body(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  Points p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

}  // namespace

TEST(SoftArgmax2d, NearOneHot) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(8, 6);
  h(5, 3) = 50.0;
  EXPECT_LT(max_abs(soft_argmax_2d(h) - Eigen::Vector2d(3.0, 5.0)), 1e-9);
}

TEST(SoftArgmax2d, UniformGivesGridCentroid) {
  const Eigen::MatrixXd h = Eigen::MatrixXd::Constant(7, 10, 0.3);
  EXPECT_LT(max_abs(soft_argmax_2d(h) - Eigen::Vector2d(4.5, 3.0)), 1e-12);
  const Grid g{-1.0, 0.25, 2.0, 0.5};
  EXPECT_LT(max_abs(soft_argmax_2d(h, g) - Eigen::Vector2d(-1.0 + 0.25 * 4.5, 2.0 + 0.5 * 3.0)), 1e-12);
}

TEST(SoftArgmax2d, GaussianBumpMatchesDirectSum) {
  Eigen::MatrixXd h(16, 16);
  const Eigen::Vector2d center(7.5, 8.5);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) h(r, c) = -((c - center.x()) * (c - center.x()) + (r - center.y()) * (r - center.y())) / 8.0;
  }
  const Grid g;
  EXPECT_LT(max_abs(soft_argmax_2d(h, g) - direct_2d(h, g)), 1e-12);
}

TEST(SoftArgmax2d, LargeLogitsStayFinite) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Constant(4, 4, 800.0);
  h(1, 2) = 1000.0;
  const Eigen::Vector2d p = soft_argmax_2d(h);
  EXPECT_TRUE(p.allFinite());
  EXPECT_LT(max_abs(p - Eigen::Vector2d(2.0, 1.0)), 1e-9);
}

TEST(SoftArgmax2d, RejectsNonFinite) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, 3);
  h(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_EQ(testutil::error_kind([&] { soft_argmax_2d(h); }), ErrorKind::InvalidArgument);
}

TEST(SoftArgmax3d, NearOneHot) {
  Volume v(6, 5, 8);
  v.at(4, 1, 6) = 50.0;
  const double extent = 2.2;
  const Eigen::Vector3d p = soft_argmax_3d(v, Grid{}, extent);
  EXPECT_LT(max_abs(p - Eigen::Vector3d(1.0, 4.0, -1.1 + 6.5 * 2.2 / 8.0)), 1e-9);
}

TEST(SoftArgmax3d, UniformGivesCentroidWithZeroDepth) {
  Volume v(4, 6, 10);
  std::fill(v.data.begin(), v.data.end(), -2.0);
  const Eigen::Vector3d p = soft_argmax_3d(v, Grid{}, 3.0);
  EXPECT_LT(max_abs(p - Eigen::Vector3d(2.5, 1.5, 0.0)), 1e-12);
}

TEST(SoftArgmax3d, GaussianBumpMatchesDirectSum) {
  Volume v(10, 12, 14);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int z = 0; z < 14; ++z) {
        v.at(y, x, z) = -((x - 5.5) * (x - 5.5) + (y - 4.5) * (y - 4.5) + (z - 8.5) * (z - 8.5)) / 6.0;
      }
    }
  }
  const Grid g = Grid::centered(12, 10, 2.2, 2.2);
  EXPECT_LT(max_abs(soft_argmax_3d(v, g, 2.2) - direct_3d(v, g, 2.2)), 1e-12);
}

TEST(SoftArgmax3d, DepthMirror) {
  // Reversing the depth axis negates the depth coordinate.
  std::mt19937_64 rng(1);
  const Volume v = random_volume(rng, 5, 5, 9);
  Volume flipped(5, 5, 9);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      for (int z = 0; z < 9; ++z) flipped.at(y, x, z) = v.at(y, x, 8 - z);
    }
  }
  const Eigen::Vector3d a = soft_argmax_3d(v, Grid{});
  const Eigen::Vector3d b = soft_argmax_3d(flipped, Grid{});
  EXPECT_NEAR(a.z(), -b.z(), 1e-12);
  EXPECT_LT(max_abs(a.head<2>() - b.head<2>()), 1e-12);
}

TEST(SoftArgmaxProperty, RandomMatchesDirectSum) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 1 + trial % 9;
    const int w = 1 + (trial * 7) % 11;
    const Grid g{0.1 * trial, 0.5 + 0.01 * trial, -0.2 * trial, 1.5};
    const Eigen::MatrixXd logits = random_logits(rng, h, w);
    ASSERT_LT(max_abs(soft_argmax_2d(logits, g) - direct_2d(logits, g)), 1e-10);
    const Volume v = random_volume(rng, h, w, 1 + trial % 6);
    ASSERT_LT(max_abs(soft_argmax_3d(v, g, 1.7) - direct_3d(v, g, 1.7)), 1e-10);
  }
}

TEST(SoftArgmaxProperty, ShiftEquivariance) {
  // Moving the pattern by (dr, dc) cells with a matching grid shift leaves coordinates unchanged.
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd pattern = random_logits(rng, 5, 5);
    const int dr = trial % 4;
    const int dc = (trial / 4) % 4;
    Eigen::MatrixXd big = Eigen::MatrixXd::Constant(10, 10, -1e4);
    big.block(dr, dc, 5, 5) = pattern;
    const Grid shifted{-static_cast<double>(dc), 1.0, -static_cast<double>(dr), 1.0};
    Eigen::MatrixXd base = Eigen::MatrixXd::Constant(10, 10, -1e4);
    base.block(0, 0, 5, 5) = pattern;
    ASSERT_LT(max_abs(soft_argmax_2d(big, shifted) - soft_argmax_2d(base)), 1e-9);
    // Equivalently, without the grid shift the coordinates move by exactly (dc, dr).
    ASSERT_LT(max_abs(soft_argmax_2d(big) - soft_argmax_2d(base) - Eigen::Vector2d(dc, dr)), 1e-9);
  }
}

TEST(SoftArgmaxProperty, ConstantOffsetInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> offset(-500.0, 500.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd h = random_logits(rng, 6, 9);
    const double c = offset(rng);
    ASSERT_LT(max_abs(soft_argmax_2d(h) - soft_argmax_2d((h.array() + c).matrix())), 1e-9);
    Volume v = random_volume(rng, 4, 4, 4);
    Volume vc = v;
    for (double& x : vc.data) x += c;
    ASSERT_LT(max_abs(soft_argmax_3d(v, Grid{}) - soft_argmax_3d(vc, Grid{})), 1e-9);
    const Eigen::MatrixXd u = random_logits(rng, 6, 9);
    ASSERT_NEAR(aggregate_uncertainty(u, h), aggregate_uncertainty(u, (h.array() + c).matrix()), 1e-12);
  }
}

TEST(AggregateUncertainty, ConstantMap) {
  std::mt19937_64 rng(5);
  for (double c : {-30.0, -1.0, 0.0, 0.7, 40.0}) {
    const Eigen::MatrixXd h = random_logits(rng, 5, 7);
    const double expected = (c > 0 ? c + std::log1p(std::exp(-c)) : std::log1p(std::exp(c))) + 1e-4;
    EXPECT_NEAR(aggregate_uncertainty(Eigen::MatrixXd::Constant(5, 7, c), h), expected, 1e-12) << c;
  }
}

TEST(AggregateUncertainty, ZeroMapIsLnTwo) {
  std::mt19937_64 rng(6);
  EXPECT_NEAR(aggregate_uncertainty(Eigen::MatrixXd::Zero(4, 4), random_logits(rng, 4, 4), 1e-4), std::log(2.0) + 1e-4,
              1e-15);
}

TEST(AggregateUncertainty, MatchesDirectDoubleSum) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd h = random_logits(rng, 6, 8);
    const Eigen::MatrixXd u = random_logits(rng, 6, 8, 1.0);
    double total = 0.0;
    double weighted = 0.0;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 8; ++c) {
        total += std::exp(h(r, c));
        weighted += std::exp(h(r, c)) * u(r, c);
      }
    }
    const double mean = weighted / total;
    ASSERT_NEAR(aggregate_uncertainty(u, h, 1e-3), std::log(1.0 + std::exp(mean)) + 1e-3, 1e-12);
  }
}

TEST(AggregateUncertainty, SoftplusHasNoOverflow) {
  EXPECT_NEAR(softplus(1000.0), 1000.0, 1e-12);
  EXPECT_NEAR(softplus(-1000.0), 0.0, 1e-300);
  EXPECT_GT(aggregate_uncertainty(Eigen::MatrixXd::Constant(2, 2, -800.0), Eigen::MatrixXd::Zero(2, 2)), 0.0);
  EXPECT_EQ(testutil::error_kind([] { aggregate_uncertainty(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 2)); }),
            ErrorKind::Dimension);
}

TEST(Decode, CombinesAllHeads) {
  std::mt19937_64 rng(8);
  HeatmapStack s{random_volume(rng, 4, 5, 6), random_logits(rng, 4, 5), random_logits(rng, 4, 5, 1.0)};
  const Grid g2{0, 2, 0, 2};
  const Grid g3 = Grid::centered(5, 4, 2.2, 2.2);
  const DecodedPoint d = decode(s, g2, g3);
  EXPECT_EQ(d.xy, soft_argmax_2d(s.h2d, g2));
  EXPECT_EQ(d.xyz_rootrel, soft_argmax_3d(s.h3d, g3));
  EXPECT_EQ(d.sigma, aggregate_uncertainty(s.u, s.h2d));
}

TEST(FuseToCamera, ExactProjectionRecovered) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lateral(-0.5, 0.5);
  std::uniform_real_distribution<double> depth(2.0, 6.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Points body = random_body(rng, 24);
    const Eigen::Vector3d t(lateral(rng), lateral(rng), depth(rng));
    const Points camera = body.rowwise() + t.transpose();
    const Eigen::MatrixX2d p2d = project(camera, intrinsics());
    ASSERT_LT(max_abs(camera_translation(p2d, body, intrinsics()) - t), 1e-9);
    ASSERT_LT(max_abs(fuse_to_camera(p2d, body, intrinsics()) - camera), 1e-9);
  }
}

TEST(FuseToCamera, TwoPointsSuffice) {
  Points body(2, 3);
  body << 0.1, 0.2, -0.1, -0.3, 0.0, 0.2;
  const Eigen::Vector3d t(0.2, -0.1, 3.0);
  const Eigen::MatrixX2d p2d = project(body.rowwise() + t.transpose(), intrinsics());
  EXPECT_LT(max_abs(camera_translation(p2d, body, intrinsics()) - t), 1e-9);
}

TEST(FuseToCamera, Errors) {
  const Points one = Points::Zero(1, 3);
  EXPECT_EQ(testutil::error_kind([&] { fuse_to_camera(Eigen::MatrixX2d::Zero(1, 2), one, intrinsics()); }),
            ErrorKind::InvalidArgument);
  // The same 3D point seen at the same pixel five times: every ray is identical.
  const Points repeated = Points::Constant(5, 3, 0.1);
  const Eigen::MatrixX2d pix = Eigen::MatrixX2d::Constant(5, 2, 100.0);
  EXPECT_EQ(testutil::error_kind([&] { fuse_to_camera(pix, repeated, intrinsics()); }), ErrorKind::Degenerate);
  EXPECT_EQ(testutil::error_kind([&] { fuse_to_camera(pix, Points::Zero(4, 3), intrinsics()); }), ErrorKind::Dimension);
  EXPECT_EQ(testutil::error_kind([&] { fuse_to_camera(pix, repeated, Eigen::Matrix3d::Zero()); }),
            ErrorKind::InvalidArgument);
}

TEST(FuseToCamera, HalfPixelNoiseStaysWithinFiveCentimeters) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> pixel_noise(-0.5, 0.5);
  std::uniform_real_distribution<double> lateral(-0.3, 0.3);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const Points body = random_body(rng, 24);
    const Eigen::Vector3d t(lateral(rng), lateral(rng), 2.0);
    Eigen::MatrixX2d p2d = project(body.rowwise() + t.transpose(), intrinsics());
    for (Eigen::Index i = 0; i < p2d.size(); ++i) p2d.data()[i] += pixel_noise(rng);
    worst = std::max(worst, (camera_translation(p2d, body, intrinsics()) - t).norm());
  }
  RecordProperty("worst_translation_error_m", std::to_string(worst));
  EXPECT_LT(worst, 0.05);
}
