#include <urf/systems.hpp>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace urf {
namespace {

TEST(TrueStep, SpiralWithZeroCosineTermIsLinear) {
  const auto base = ReferenceSystem::source_spiral(1);
  const auto sys = ReferenceSystem::spiral_with(base.spiral.a, Matrix::Zero(2, 2),
                                                Vector::Constant(2, std::numbers::pi / 2.0));
  Vector x(2);
  x << 0.7, -0.2;
  const Vector next = true_step(sys, default_integrator(sys.kind), x);
  EXPECT_LE((next - base.spiral.a * x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TrueStep, SpiralIsExpanding) {
  const auto sys = ReferenceSystem::source_spiral(1);
  Eigen::EigenSolver<Matrix> eig(sys.spiral.a);
  for (Eigen::Index i = 0; i < 2; ++i) EXPECT_NEAR(std::abs(eig.eigenvalues()[i]), 1.05, 1e-12);
  EXPECT_GT(std::abs(eig.eigenvalues()[0].imag()), 0.0);
}

TEST(TrueStep, PendulumEquilibrium) {
  const auto sys = ReferenceSystem::damped_pendulum();
  EXPECT_EQ(true_step(sys, default_integrator(sys.kind), Vector::Zero(2)), Vector::Zero(2));
}

TEST(TrueStep, VanDerPolRk4AgainstFineEuler) {
  const auto sys = ReferenceSystem::van_der_pol();
  Vector x(2);
  x << 1.0, 0.0;
  const IntegratorSpec integ{IntegratorMethod::rk4, 0.01};
  const Vector rk = true_step(sys, integ, x);
  Vector ref = x;
  for (int i = 0; i < 1000; ++i) ref += 1e-5 * van_der_pol_field(ref);
  EXPECT_LE((rk - ref).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(TrueStep, IncompatibleIntegrator) {
  const auto vdp = ReferenceSystem::van_der_pol();
  EXPECT_THROW(true_step(vdp, {IntegratorMethod::discrete_map, 0.1}, Vector::Zero(2)), ValidationError);
  EXPECT_THROW(true_step(vdp, {IntegratorMethod::semi_implicit_euler, 0.1}, Vector::Zero(2)), ValidationError);
  EXPECT_THROW(true_step(vdp, {IntegratorMethod::rk4, 0.0}, Vector::Zero(2)), ValidationError);
  const auto spiral = ReferenceSystem::source_spiral(0);
  EXPECT_THROW(true_step(spiral, {IntegratorMethod::rk4, 0.1}, Vector::Zero(2)), ValidationError);
}

TEST(PendulumEmbed, KnownPoints) {
  Vector x(2);
  x << 0.0, 0.0;
  EXPECT_EQ(pendulum_embed(x), (Vector(3) << 1.0, 0.0, 0.0).finished());
  x << std::numbers::pi, 2.0;
  const Vector e = pendulum_embed(x);
  EXPECT_NEAR(e[0], -1.0, 1e-15);
  EXPECT_NEAR(e[1], 0.0, 1e-15);
  EXPECT_EQ(e[2], 2.0);
}

TEST(PendulumEmbed, UnitCircle) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    Vector x(2);
    x << rng.uniform(-10.0, 10.0), rng.normal();
    const Vector e = pendulum_embed(x);
    EXPECT_NEAR(e[0] * e[0] + e[1] * e[1], 1.0, 1e-12);
  }
}

TEST(StageCost, QuadraticAndUpright) {
  const auto quad = stage_cost(CostKind::quadratic, 2);
  EXPECT_EQ(quad.value(Vector::Zero(2)), 0.0);
  EXPECT_EQ(quad.gradient(Vector::Zero(2)), Vector::Zero(2));
  const auto up = stage_cost(CostKind::pendulum_upright, 3);
  EXPECT_EQ(up.value((Vector(3) << 1.0, 0.0, 0.0).finished()), -1.0);
  EXPECT_EQ(up.value((Vector(3) << -1.0, 0.0, 0.0).finished()), 1.0);
  EXPECT_THROW(stage_cost(CostKind::pendulum_upright, 2), ValidationError);
}

TEST(StageCost, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  for (const auto& cost : {quadratic_cost(3), pendulum_upright_cost()}) {
    for (int i = 0; i < 10; ++i) {
      const Vector x = testing::random_vector(rng, 3);
      const Matrix fd = testing::finite_difference_jacobian(
          [&](const Vector& v) { return Vector::Constant(1, cost.value(v)); }, x);
      EXPECT_LE(testing::relative_error(cost.gradient(x), fd.transpose()), 1e-6) << cost.kind;
    }
  }
}

TEST(Invariants, PendulumEnergyDissipates) {
  const auto sys = ReferenceSystem::damped_pendulum();
  const IntegratorSpec integ{IntegratorMethod::semi_implicit_euler, 0.01};
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(2);
    do {
      x << rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(-2.0, 2.0);
    } while (x.norm() > std::numbers::pi);
    double energy = pendulum_energy(sys.pendulum, x);
    for (int n = 0; n < 200; ++n) {
      x = true_step(sys, integ, x);
      const double next = pendulum_energy(sys.pendulum, x);
      EXPECT_LE(next, energy + 1e-6) << "trial " << trial << " step " << n;
      energy = next;
    }
  }
}

TEST(Invariants, VanDerPolStaysOnBoundedRegion) {
  const auto sys = ReferenceSystem::van_der_pol();
  const IntegratorSpec integ{IntegratorMethod::rk4, 0.01};
  Vector x(2);
  x << 1.0, 0.0;
  for (int n = 0; n < 5000; ++n) {
    x = true_step(sys, integ, x);
    ASSERT_LE(x.norm(), 5.0) << "step " << n;
  }
}

TEST(GenerateDataset, NoiselessReproducesSimulator) {
  const auto sys = ReferenceSystem::van_der_pol();
  const auto integ = default_integrator(sys.kind);
  const auto data = generate_dataset(sys, integ, RolloutConfig{1, 2, 0.0, 9});
  ASSERT_EQ(data.inputs.rows(), 2);
  for (Eigen::Index t = 0; t < 2; ++t) {
    EXPECT_EQ(data.successors.row(t).transpose(), true_step(sys, integ, data.inputs.row(t).transpose()));
  }
  EXPECT_EQ(data.inputs.row(1), data.successors.row(0));
}

TEST(GenerateDataset, PairCount) {
  const auto sys = ReferenceSystem::source_spiral(2);
  const auto data = generate_dataset(sys, default_integrator(sys.kind), RolloutConfig{5, 50, 0.01, 1});
  EXPECT_EQ(data.inputs.rows(), 250);
  EXPECT_EQ(data.rollouts.size(), 5u);
  EXPECT_EQ(data.rollouts[0].states.rows(), 51);
}

TEST(GenerateDataset, NoiseLevel) {
  const auto sys = ReferenceSystem::van_der_pol();
  const auto integ = default_integrator(sys.kind);
  const double sigma = 0.05;
  const auto data = generate_dataset(sys, integ, RolloutConfig{100, 50, sigma, 5});
  double sum2 = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index t = 0; t < data.inputs.rows(); ++t) {
    const Vector clean = true_step(sys, integ, data.inputs.row(t).transpose());
    sum2 += (data.successors.row(t).transpose() - clean).squaredNorm();
    count += 2;
  }
  ASSERT_GE(count, 10000);
  const double std_hat = std::sqrt(sum2 / static_cast<double>(count));
  EXPECT_GE(std_hat, 0.97 * sigma);
  EXPECT_LE(std_hat, 1.03 * sigma);
}

TEST(GenerateDataset, PendulumIsEmbedded) {
  const auto sys = ReferenceSystem::damped_pendulum();
  const auto data = generate_dataset(sys, default_integrator(sys.kind), RolloutConfig{3, 10, 0.0, 2});
  EXPECT_EQ(data.inputs.cols(), 3);
  for (Eigen::Index t = 0; t < data.inputs.rows(); ++t) {
    EXPECT_NEAR(data.inputs.row(t).head(2).squaredNorm(), 1.0, 1e-12);
  }
  const auto nominal = NominalModel::identity(3);
  const auto ds = data.residuals(nominal, 0.01);
  EXPECT_EQ(ds.targets, data.successors - data.inputs);
}

TEST(GenerateDataset, Deterministic) {
  const auto sys = ReferenceSystem::damped_pendulum();
  const RolloutConfig cfg{4, 20, 0.01, 77};
  const auto a = generate_dataset(sys, default_integrator(sys.kind), cfg);
  const auto b = generate_dataset(sys, default_integrator(sys.kind), cfg);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.successors, b.successors);
}

TEST(GenerateDataset, InitialStateLaws) {
  Rng rng(6);
  const auto pend = ReferenceSystem::damped_pendulum();
  const auto vdp = ReferenceSystem::van_der_pol();
  for (int i = 0; i < 1000; ++i) {
    const Vector p = sample_initial_state(pend, rng);
    EXPECT_LE(std::abs(p[0]), std::numbers::pi);
    EXPECT_LE(std::abs(p[1]), 1.0);
    const Vector v = sample_initial_state(vdp, rng);
    EXPECT_LE(v.lpNorm<Eigen::Infinity>(), 1.0);
  }
}

TEST(RolloutConfig, Validation) {
  const auto sys = ReferenceSystem::van_der_pol();
  EXPECT_THROW(generate_dataset(sys, default_integrator(sys.kind), RolloutConfig{0, 10, 0.01, 0}), ValidationError);
  EXPECT_THROW(generate_dataset(sys, default_integrator(sys.kind), RolloutConfig{1, 0, 0.01, 0}), ValidationError);
  EXPECT_THROW(generate_dataset(sys, default_integrator(sys.kind), RolloutConfig{1, 1, -0.1, 0}), ValidationError);
}

}  // namespace
}  // namespace urf
