#include <gtest/gtest.h>

#include "sepctl/lti.hpp"
#include "test_support.hpp"

using namespace sepctl;
using sepctl::testing::s;
using sepctl::testing::v1;

namespace {

Dims scalar_dims(int T) { return Dims{1, 1, 1, 1, 1, T}; }

QuadraticCostSpec example_cost() {
  QuadraticCostSpec c;
  c.Qx = {s(0), s(0)};
  c.Ru = {s(0), s(0.5)};
  c.QT = s(0.5);
  c.beta = 1.0;
  return c;
}

EpisodeRecord two_step_record(double x2, double u1) {
  EpisodeRecord ep;
  ep.x = {v1(0), v1(0), v1(x2)};
  ep.xhat = {v1(0), v1(0), v1(x2)};
  ep.u = {v1(0), v1(u1)};
  return ep;
}

}  // namespace

TEST(ValidateSystem, ScalarExampleIsValid) {
  const Dims d = scalar_dims(2);
  const auto sys = TimeVaryingLinearSystem::constant(d, s(3), s(2), s(2), s(1), s(0));
  EXPECT_NO_THROW(validate_system(sys, d));
}

TEST(ValidateSystem, ShortSequenceIsHorizonMismatch) {
  const Dims d = scalar_dims(2);
  auto sys = TimeVaryingLinearSystem::constant(d, s(3), s(2), s(2), s(1), s(0));
  sys.A.pop_back();
  try {
    validate_system(sys, d);
    FAIL() << "expected HorizonMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kHorizonMismatch);
  }
}

TEST(ValidateSystem, WrongBlockShapeIsDimensionMismatch) {
  const Dims d = scalar_dims(2);
  auto sys = TimeVaryingLinearSystem::constant(d, s(3), s(2), s(2), s(1), s(0));
  sys.B[1] = MatrixXd::Ones(1, 2);
  try {
    validate_system(sys, d);
    FAIL() << "expected DimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimensionMismatch);
  }
}

TEST(ValidateSystem, TwoInputsPassWithoutCost) {
  const Dims d{1, 2, 1, 1, 1, 2};
  const auto sys = TimeVaryingLinearSystem::constant(d, s(3), MatrixXd::Ones(1, 2), s(2),
                                                     s(1), s(0));
  EXPECT_NO_THROW(validate_system(sys, d));
}

TEST(StepModel, WorkedValues) {
  const Dims d = scalar_dims(2);
  const auto sys = TimeVaryingLinearSystem::constant(d, s(3), s(2), s(2), s(1), s(0));
  EXPECT_DOUBLE_EQ(step_model(sys, 0, v1(1), v1(0), v1(0))(0), 3.0);
  EXPECT_DOUBLE_EQ(step_model(sys, 0, v1(0), v1(0), v1(0))(0), 0.0);
  EXPECT_DOUBLE_EQ(step_model(sys, 0, v1(1), v1(-0.5), v1(0.25))(0), 2.5);
}

TEST(StepModel, OutOfHorizon) {
  const Dims d = scalar_dims(2);
  const auto sys = TimeVaryingLinearSystem::constant(d, s(3), s(2), s(2), s(1), s(0));
  EXPECT_THROW(step_model(sys, 2, v1(1), v1(0), v1(0)), Error);
}

TEST(StepPlant, WorkedValues) {
  const Dims d = scalar_dims(2);
  TimeVaryingLinearSystem plant;
  plant.A = {s(1), s(1)};
  plant.B = {s(1), s(1)};
  plant.D = {s(1), s(0)};
  plant.C = {s(1), s(1), s(1)};
  plant.E = {s(0), s(0), s(0)};
  EXPECT_DOUBLE_EQ(step_plant(plant, 0, v1(1), v1(-0.5), v1(0.25))(0), 0.75);
  EXPECT_DOUBLE_EQ(step_plant(plant, 0, v1(0), v1(0), v1(0))(0), 0.0);
  EXPECT_DOUBLE_EQ(step_plant(plant, 1, v1(0.75), v1(-0.375), v1(5.0))(0), 0.375);
}

TEST(Observe, WorkedValues) {
  const Dims d = scalar_dims(1);
  const auto sys = TimeVaryingLinearSystem::constant(d, s(1), s(1), s(1), s(1), s(0));
  EXPECT_DOUBLE_EQ(observe(sys, 0, v1(2.5), v1(0.1))(0), 2.5);

  const Dims d2{2, 1, 1, 1, 1, 1};
  MatrixXd C(1, 2);
  C << 1, 0;
  const auto sys2 = TimeVaryingLinearSystem::constant(d2, MatrixXd::Identity(2, 2),
                                                      MatrixXd::Ones(2, 1),
                                                      MatrixXd::Ones(2, 1), C, s(0.5));
  VectorXd x(2);
  x << 2, 7;
  EXPECT_DOUBLE_EQ(observe(sys2, 1, x, v1(2))(0), 3.0);

  const Dims d3{2, 1, 2, 1, 2, 1};
  const auto sys3 = TimeVaryingLinearSystem::constant(
      d3, MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1),
      MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
  EXPECT_EQ(observe(sys3, 0, VectorXd::Zero(2), VectorXd::Zero(2)), VectorXd::Zero(2));
}

TEST(ProblemOneCost, WorkedValues) {
  const QuadraticCostSpec c = example_cost();
  EXPECT_DOUBLE_EQ(problem1_cost(two_step_record(0, 0), c), 0.0);
  EXPECT_DOUBLE_EQ(problem1_cost(two_step_record(1, 1), c), 1.0);
  EXPECT_DOUBLE_EQ(problem1_cost(two_step_record(0.5, -0.5), c), 0.25);
}

TEST(ProblemTwoCost, IdenticalTrajectoriesHaveNoPenalty) {
  EpisodeRecord ep = two_step_record(0.7, -0.3);
  ep.x[1] = ep.xhat[1] = v1(1.3);
  const QuadraticCostSpec c = example_cost();
  EXPECT_DOUBLE_EQ(problem2_cost(ep, c), model_cost(ep, c));
  EXPECT_DOUBLE_EQ(discrepancy_penalty(ep, c), 0.0);
}

TEST(ProblemTwoCost, PenaltyOnDiscrepancy) {
  QuadraticCostSpec c;
  c.Qx = {s(0), s(0)};
  c.Ru = {s(0), s(0)};
  c.QT = s(0);
  c.beta = 1.0;
  EpisodeRecord ep = two_step_record(0, 0);
  ep.x[1] = v1(2.5);
  ep.xhat[1] = v1(0.5);
  EXPECT_DOUBLE_EQ(problem2_cost(ep, c), 4.0);
}

TEST(ProblemTwoCost, ZeroBetaIsModelCost) {
  QuadraticCostSpec c = example_cost();
  c.beta = 0.0;
  EpisodeRecord ep = two_step_record(0.3, 0.9);
  ep.x = {v1(1), v1(-2), v1(4)};
  EXPECT_DOUBLE_EQ(problem2_cost(ep, c), model_cost(ep, c));
}

TEST(NoiseSpec, BlockAccessorsFollowLayout) {
  const Dims d{2, 1, 1, 1, 1, 2};
  const NoiseLayout layout(d);
  ASSERT_EQ(layout.size(), 2 + 2 + 3);
  NoiseSpec noise;
  noise.mean = VectorXd::LinSpaced(layout.size(), 0, layout.size() - 1);
  noise.cov = MatrixXd::Identity(layout.size(), layout.size());
  noise.cov(0, 2) = noise.cov(2, 0) = 0.5;
  EXPECT_EQ(noise.x0_mean(d), (VectorXd(2) << 0, 1).finished());
  EXPECT_DOUBLE_EQ(noise.w_mean(d, 1)(0), 3.0);
  EXPECT_DOUBLE_EQ(noise.z_mean(d, 2)(0), 6.0);
  EXPECT_NO_THROW(validate_noise(noise, d));
  EXPECT_EQ(layout.select_w(0) * noise.mean, noise.w_mean(d, 0));
}

TEST(NoiseSpec, IndefiniteCovarianceRejected) {
  const Dims d = scalar_dims(1);
  NoiseSpec noise;
  noise.mean = VectorXd::Zero(4);
  noise.cov = MatrixXd::Identity(4, 4);
  noise.cov(0, 1) = noise.cov(1, 0) = 2.0;
  EXPECT_THROW(validate_noise(noise, d), Error);
}

TEST(QuadraticCost, ScaledMultipliesEveryWeight) {
  const QuadraticCostSpec c = example_cost().scaled(3.0);
  EXPECT_DOUBLE_EQ(c.Ru[1](0, 0), 1.5);
  EXPECT_DOUBLE_EQ(c.QT(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(c.beta, 3.0);
}
