#include "test_util.hpp"

using namespace bodyfit;
using testutil::max_abs;

namespace {

Points random_cloud(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Points p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
  return p;
}

Eigen::VectorXd random_weights(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = u(rng);
  return w;
}

Eigen::Matrix3d random_matrix(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace

TEST(WeightedCovariance, IdenticalSetsGivePsdSymmetric) {
  std::mt19937_64 rng(1);
  const Points p = random_cloud(rng, 30);
  const Eigen::Matrix3d s = weighted_covariance(p, p, Eigen::VectorXd::Ones(30));
  EXPECT_LT(max_abs(s - s.transpose()), 1e-14);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(s);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-14);
}

TEST(WeightedCovariance, MatchesDirectSum) {
  std::mt19937_64 rng(2);
  const Points a = random_cloud(rng, 12);
  const Points b = random_cloud(rng, 12);
  const Eigen::VectorXd w = random_weights(rng, 12);
  Eigen::Vector3d ma = Eigen::Vector3d::Zero(), mb = Eigen::Vector3d::Zero();
  for (int i = 0; i < 12; ++i) {
    ma += w(i) * a.row(i).transpose();
    mb += w(i) * b.row(i).transpose();
  }
  ma /= w.sum();
  mb /= w.sum();
  Eigen::Matrix3d expected = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 12; ++i) {
    expected += w(i) / w.sum() * (a.row(i).transpose() - ma) * (b.row(i).transpose() - mb).transpose();
  }
  EXPECT_LT(max_abs(weighted_covariance(a, b, w) - expected), 1e-14);
}

TEST(WeightedCovariance, WeightScaleDoesNotChangeRotation) {
  std::mt19937_64 rng(3);
  const Points a = random_cloud(rng, 20);
  const Points b = random_cloud(rng, 20);
  const Eigen::VectorXd w = random_weights(rng, 20);
  const Eigen::Matrix3d r1 = project_to_so3(weighted_covariance(a, b, w));
  const Eigen::Matrix3d r10 = project_to_so3(weighted_covariance(a, b, 10.0 * w));
  EXPECT_LT(max_abs(r1 - r10), 1e-12);
}

TEST(WeightedCovariance, RecoversKnownRotation) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Matrix3d q = uniform_rotation(rng);
    const Points source = random_cloud(rng, 25);
    const Eigen::RowVector3d shift = random_cloud(rng, 1).row(0);
    const Points target = (source * q.transpose()).rowwise() + shift;
    const CorrespondenceSet c{target, source, random_weights(rng, 25)};
    EXPECT_LT(max_abs(kabsch(c) - q), 1e-9);
    EXPECT_LT(geodesic_angle(kabsch(c), q), 1e-7);
  }
}

TEST(WeightedCovariance, Errors) {
  const Points one = Points::Zero(1, 3);
  EXPECT_EQ(testutil::error_kind([&] { weighted_covariance(one, one, Eigen::VectorXd::Ones(1)); }),
            ErrorKind::InvalidArgument);
  const Points two = Points::Random(2, 3);
  EXPECT_EQ(testutil::error_kind([&] { weighted_covariance(two, two, Eigen::VectorXd::Zero(2)); }),
            ErrorKind::Degenerate);
  EXPECT_EQ(testutil::error_kind([&] { weighted_covariance(two, two, Eigen::Vector2d(1.0, -1.0)); }),
            ErrorKind::InvalidArgument);
  EXPECT_EQ(testutil::error_kind([&] { weighted_covariance(two, Points::Random(3, 3), Eigen::VectorXd::Ones(2)); }),
            ErrorKind::Dimension);
}

TEST(PivotAnchoredCovariance, OriginPointsGiveZero) {
  const Points z = Points::Zero(4, 3);
  EXPECT_TRUE(pivot_anchored_covariance(z, z).isZero(0.0));
}

TEST(PivotAnchoredCovariance, IsUncenteredSum) {
  std::mt19937_64 rng(5);
  const Points a = random_cloud(rng, 7);
  const Points b = random_cloud(rng, 7);
  Eigen::Matrix3d expected = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 7; ++i) expected += a.row(i).transpose() * b.row(i);
  EXPECT_LT(max_abs(pivot_anchored_covariance(a, b) - expected), 1e-14);
}

TEST(PivotAnchoredCovariance, RecoversRotationAboutPivot) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Matrix3d q = uniform_rotation(rng);
    const Points source = random_cloud(rng, 10);
    const Points target = source * q.transpose();
    EXPECT_LT(max_abs(project_to_so3(pivot_anchored_covariance(target, source)) - q), 1e-9);
  }
}

TEST(PivotAnchoredCovariance, AxisPairPlusOffAxisPair) {
  // One pair along z and one off-axis pair pin down the rotation completely.
  std::mt19937_64 rng(7);
  const Eigen::Matrix3d q = uniform_rotation(rng);
  Points source(2, 3);
  source << 0, 0, 1, 0.4, -0.2, 0.1;
  const Points target = source * q.transpose();
  const Eigen::Matrix3d r = project_to_so3(pivot_anchored_covariance(target, source));
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT((r * source.row(i).transpose() - target.row(i).transpose()).norm(), 1e-9);
  }
}

TEST(ProjectToSO3, IdentityAndScaledRotation) {
  EXPECT_LT(max_abs(project_to_so3(Eigen::Matrix3d::Identity()) - Eigen::Matrix3d::Identity()), 1e-15);
  std::mt19937_64 rng(8);
  const Eigen::Matrix3d r = uniform_rotation(rng);
  EXPECT_LT(max_abs(project_to_so3(3.7 * r) - r), 1e-12);
}

TEST(ProjectToSO3, ReflectionCaseBeatsRandomRotations) {
  std::mt19937_64 rng(9);
  Eigen::Matrix3d m;
  do {
    m = random_matrix(rng);
  } while (m.determinant() > 0.0);
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ASSERT_LT((svd.matrixU() * svd.matrixV().transpose()).determinant(), 0.0);
  const Eigen::Matrix3d r = project_to_so3(m);
  EXPECT_TRUE(testutil::is_rotation(r, 1e-12));
  const double best = (r.transpose() * m).trace();
  for (int i = 0; i < 100000; ++i) {
    ASSERT_LE((uniform_rotation(rng).transpose() * m).trace(), best + 1e-12);
  }
}

TEST(ProjectToSO3Property, AlwaysValidRotation) {
  std::mt19937_64 rng(10);
  std::vector<Eigen::Matrix3d> inputs{Eigen::Matrix3d::Zero(), Eigen::Vector3d(1, 2, 3) * Eigen::RowVector3d(0, 1, 1),
                                      Eigen::Vector3d(1, 0, 0).asDiagonal().toDenseMatrix(),
                                      -Eigen::Matrix3d::Identity()};
  for (int i = 0; i < 200; ++i) {
    Eigen::Matrix3d m = random_matrix(rng);
    if (i % 4 == 0) {
      // rank 1 or 2
      const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Eigen::Vector3d s = svd.singularValues();
      s(2) = 0.0;
      if (i % 8 == 0) s(1) = 0.0;
      m = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    }
    inputs.push_back(m);
  }
  for (const auto& m : inputs) {
    const Eigen::Matrix3d r = project_to_so3(m);
    ASSERT_TRUE(testutil::is_rotation(r, 1e-9)) << m;
  }
}

TEST(KabschProperty, NoiseFreeRecoveryBelowTenthMicroradian) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Matrix3d q = uniform_rotation(rng);
    const int n = 3 + trial % 40;
    const Points source = random_cloud(rng, n, 0.3);
    const Points target = (source * q.transpose()).rowwise() + Eigen::RowVector3d(1.0, -2.0, 0.5);
    ASSERT_LT(geodesic_angle(kabsch({target, source, random_weights(rng, n)}), q), 1e-7);
  }
}

TEST(KabschProperty, NoisyErrorShrinksWithPointCount) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> mean_error;
  for (int n : {10, 100, 1000}) {
    double total = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      const Eigen::Matrix3d q = uniform_rotation(rng);
      const Points source = random_cloud(rng, n);
      Points target = source * q.transpose();
      for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] += noise(rng);
      total += geodesic_angle(kabsch({target, source, Eigen::VectorXd::Ones(n)}), q);
    }
    mean_error.push_back(total / trials);
  }
  EXPECT_GT(mean_error[0], mean_error[1]);
  EXPECT_GT(mean_error[1], mean_error[2]);
}
