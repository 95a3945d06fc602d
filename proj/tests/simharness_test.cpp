#include <cstring>
#include <sstream>

#include <gtest/gtest.h>

#include "sepctl/oracle.hpp"
#include "sepctl/simharness.hpp"
#include "test_support.hpp"

using namespace sepctl;
using sepctl::testing::s;
using sepctl::testing::v1;

namespace {

bool same_bits(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool same_bits(const InformationState& a, const InformationState& b) {
  return a.t == b.t && same_bits(a.model_belief.mean, b.model_belief.mean) &&
         same_bits(a.model_belief.cov, b.model_belief.cov) &&
         same_bits(a.plant_belief.mean, b.plant_belief.mean) &&
         same_bits(a.plant_belief.cov, b.plant_belief.cov) &&
         same_bits(a.yhat_traj, b.yhat_traj) && same_bits(a.u_prefix, b.u_prefix);
}

SeparatedController known_plant_controller(const ExampleInstance& ex) {
  return bind_predictor(matching_strategy(ex.model, ex.dims), ex.model,
                        PlantPredictor::from_system(ex.plant), ex.cost, ex.dims);
}

std::string report_json(const MonteCarloReport& r) {
  std::ostringstream os;
  write_report_json(os, r);
  return os.str();
}

}  // namespace

TEST(RunEpisode, IdenticalDeterministicSystemsCoincide) {
  const Dims d{1, 1, 1, 1, 1, 3};
  const auto sys = sepctl::testing::scalar_system(3, 0.8, 1, 1);
  NoiseSpec noise;
  noise.mean = VectorXd::Zero(NoiseLayout(d).size());
  noise.mean(0) = 1.5;
  noise.cov = MatrixXd::Zero(noise.mean.size(), noise.mean.size());
  SeparatedStrategy zero;
  zero.dims = d;
  zero.mode = BindingMode::kBound;
  for (int t = 0; t < 3; ++t) {
    zero.steps.push_back(StrategyStep{MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 0),
                                      MatrixXd::Zero(1, 3 - t), VectorXd::Zero(1)});
  }
  const EpisodeTrace tr = run_episode(sys, sys, SeparatedController::from_strategy(zero), noise,
                                      d, RngStreamSpec{1, 0});
  for (int t = 0; t <= 3; ++t) {
    EXPECT_EQ(tr.record.x[t], tr.record.xhat[t]);
    EXPECT_DOUBLE_EQ(tr.record.x[t](0), 1.5 * std::pow(0.8, t));
  }
}

TEST(RunEpisode, SameStreamIsBitIdentical) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const SeparatedController c = known_plant_controller(ex);
  EpisodeOptions opts;
  opts.probe_std = 0.3;
  const EpisodeTrace a = run_episode(ex.plant, ex.model, c, ex.noise, ex.dims, {9, 4}, opts);
  const EpisodeTrace b = run_episode(ex.plant, ex.model, c, ex.noise, ex.dims, {9, 4}, opts);
  for (int t = 0; t <= ex.dims.T; ++t) {
    EXPECT_TRUE(same_bits(a.record.x[t], b.record.x[t]));
    EXPECT_TRUE(same_bits(a.record.xhat[t], b.record.xhat[t]));
    EXPECT_TRUE(same_bits(a.info[t], b.info[t]));
  }
  const EpisodeTrace c2 = run_episode(ex.plant, ex.model, c, ex.noise, ex.dims, {9, 5}, opts);
  EXPECT_FALSE(same_bits(a.record.x[0], c2.record.x[0]));
}

TEST(RunEpisode, SharedPrimitivesDriveBothSystems) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const EpisodeTrace tr =
      run_episode(ex.plant, ex.model, known_plant_controller(ex), ex.noise, ex.dims, {3, 3});
  const EpisodeRecord& r = tr.record;
  EXPECT_EQ(r.x[0], r.xhat[0]);
  for (int t = 0; t < ex.dims.T; ++t) {
    EXPECT_EQ(r.xhat[t + 1], step_plant(ex.plant, t, r.xhat[t], r.u[t], r.w[t]));
    EXPECT_EQ(r.x[t + 1], step_model(ex.model, t, r.x[t], r.u_model[t], r.w[t]));
  }
}

TEST(InformationState, IndependentOfTheStrategyInControl) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ExampleInstance ex = scalar_mismatch_instance(seed % 2 ? 0.5 : -0.5);
    const SeparatedController a = known_plant_controller(ex);
    QuadraticCostSpec lq = ex.cost;
    lq.beta = 0.0;
    const SeparatedController b = SeparatedController::from_strategy(
        bind_parameters(solve_tracking_lq(ex.model, lq, ex.dims),
                        model_predicted_means(ex.model, ex.noise, ex.dims)),
        StateSource::kPlantBelief);
    const EpisodeTrace tr =
        run_episode(ex.plant, ex.model, a, ex.noise, ex.dims, {seed, 0});
    // Replay the realized data while the other strategy is in control.
    const DisturbancePreview preview(ex.model, ex.noise, ex.dims);
    const EpisodeRecord& r = tr.record;
    InformationState pi = initial_information_state(ex.model, ex.noise, ex.dims, r.y[0],
                                                    r.yhat[0], nullptr, 1.0);
    ASSERT_TRUE(same_bits(pi, tr.info[0]));
    for (int t = 0; t < ex.dims.T; ++t) {
      const VectorXd wp = preview.at(t, {r.y.begin(), r.y.begin() + t + 1},
                                     {r.u_model.begin(), r.u_model.begin() + t});
      (void)b.decide(t, pi.model_belief.mean, pi.plant_belief.mean, wp);
      pi = info_state_update(pi, r.y[t + 1], r.yhat[t + 1], r.u_model[t], r.u[t], ex.model,
                             ex.model, ex.noise, ex.dims);
      EXPECT_TRUE(same_bits(pi, tr.info[t + 1])) << "seed " << seed << " t=" << t + 1;
    }
  }
}

TEST(RunMonteCarlo, SingleEpisodeEqualsRunEpisode) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const SeparatedController c = known_plant_controller(ex);
  MonteCarloOptions mc;
  mc.episodes = 1;
  mc.seed = 8;
  const MonteCarloReport rep = run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc);
  const EpisodeTrace tr = run_episode(ex.plant, ex.model, c, ex.noise, ex.dims, {8, 0});
  EXPECT_DOUBLE_EQ(rep.cost.J1_mean, problem1_cost(tr.record, ex.cost));
  EXPECT_DOUBLE_EQ(rep.cost.model_cost_mean, model_cost(tr.record, ex.cost));
}

TEST(RunMonteCarlo, ThreadCountDoesNotChangeTheReport) {
  const ExampleInstance ex = scalar_mismatch_instance(0.5);
  const SeparatedController c = known_plant_controller(ex);
  MonteCarloOptions mc;
  mc.episodes = 3001;
  mc.seed = 21;
  mc.threads = 1;
  const std::string one =
      report_json(run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc));
  mc.threads = 7;
  const std::string seven =
      report_json(run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc));
  mc.threads = 7;
  const std::string again =
      report_json(run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc));
  EXPECT_EQ(one, seven);
  EXPECT_EQ(seven, again);
}

TEST(RunMonteCarlo, IdenticalSystemsHaveNoPenalty) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const SeparatedController c =
      bind_predictor(matching_strategy(ex.model, ex.dims), ex.model,
                     PlantPredictor::from_system(ex.model), ex.cost, ex.dims);
  MonteCarloOptions mc;
  mc.episodes = 2000;
  mc.seed = 2;
  const MonteCarloReport rep = run_monte_carlo(ex.model, ex.model, c, ex.noise, ex.cost, ex.dims, mc);
  EXPECT_LT(rep.cost.penalty_mean, 1e-12);
  EXPECT_LT(rep.cost.penalty_ms_mean, 1e-12);
  EXPECT_NEAR(rep.cost.J2_mean, rep.cost.J1_mean, 1e-12);
}

TEST(RunMonteCarlo, KnownPlantCostMatchesExactValue) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  MonteCarloOptions mc;
  mc.episodes = 1000000;
  mc.seed = 3;
  const MonteCarloReport rep = run_monte_carlo(ex.plant, ex.model, known_plant_controller(ex),
                                               ex.noise, ex.cost, ex.dims, mc);
  EXPECT_LT(std::abs(rep.cost.J1_mean - 0.1875), 3.0 * rep.cost.J1_stderr);
}

TEST(RunMonteCarlo, MatchingDrivesMeanDiscrepancyToZero) {
  for (double rho : {-0.5, 0.5}) {
    const ExampleInstance ex = scalar_mismatch_instance(rho);
    MonteCarloOptions mc;
    mc.episodes = 20000;
    mc.seed = 4;
    const MonteCarloReport rep = run_monte_carlo(ex.plant, ex.model, known_plant_controller(ex),
                                                 ex.noise, ex.cost, ex.dims, mc);
    for (int t = 0; t < ex.dims.T; ++t) {
      const double band = 4.0 / std::sqrt(mc.episodes) * rep.discrepancy_std[t](0) + 1e-12;
      EXPECT_LE(std::abs(rep.discrepancy_mean[t](0)), band) << "t=" << t;
    }
  }
}

TEST(RunMonteCarlo, StderrShrinksWithEpisodes) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const SeparatedController c = known_plant_controller(ex);
  MonteCarloOptions mc;
  mc.seed = 5;
  mc.episodes = 10000;
  const double se1 = run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc).cost.J1_stderr;
  mc.episodes = 40000;
  const double se4 = run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc).cost.J1_stderr;
  EXPECT_NEAR(se4 / se1, 0.5, 0.1);
}

TEST(RunMonteCarlo, RejectsZeroEpisodes) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  MonteCarloOptions mc;
  mc.episodes = 0;
  EXPECT_THROW(run_monte_carlo(ex.plant, ex.model, known_plant_controller(ex), ex.noise,
                               ex.cost, ex.dims, mc),
               Error);
}

TEST(DisturbancePreview, ConditionalMeanOfCorrelatedDisturbance) {
  const ExampleInstance ex = scalar_mismatch_instance(0.5);
  const DisturbancePreview pv(ex.model, ex.noise, ex.dims);
  const VectorXd w = pv.at(0, {v1(0.8)}, {});
  EXPECT_NEAR(w(0), 0.4, 1e-12);
  EXPECT_NEAR(w(1), 0.0, 1e-12);
  const DisturbancePreview prior(ex.model, ex.noise, ex.dims, PreviewMode::kPrior);
  EXPECT_NEAR(prior.at(0, {v1(0.8)}, {})(0), 0.0, 1e-15);
}

TEST(ClosedLoopLearn, SmokeRunIsFinite) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  LearnOptions lo;
  lo.n_outer = 1;
  lo.n_inner = 1;
  lo.seed = 1;
  lo.threads = 1;
  const MonteCarloReport rep = closed_loop_learn(ex.plant, ex.model, matching_strategy(ex.model, ex.dims),
                                                 ex.noise, ex.cost, ex.dims, lo);
  EXPECT_TRUE(std::isfinite(rep.cost.J1_mean));
  EXPECT_TRUE(std::isfinite(rep.cost.J2_mean));
  EXPECT_EQ(rep.xhat_trace.size(), 1u);
}

TEST(ClosedLoopLearn, NoMismatchRecoversModelMeans) {
  const Dims d{1, 1, 1, 1, 1, 3};
  const auto sys = sepctl::testing::scalar_system(3, 0.9, 1, 1);
  VectorXd x0 = v1(2.0);
  const NoiseSpec noise = NoiseSpec::independent(d, x0, s(1), s(1), s(1));
  QuadraticCostSpec cost;
  cost.Qx.assign(3, s(1));
  cost.Ru.assign(3, s(1));
  cost.QT = s(1);
  cost.beta = 1.0;
  LearnOptions lo;
  lo.n_outer = 1;
  lo.n_inner = 20000;
  lo.seed = 6;
  const MonteCarloReport rep =
      closed_loop_learn(sys, sys, matching_strategy(sys, d), noise, cost, d, lo);
  const SeparatedController c0 = bind_predictor(matching_strategy(sys, d), sys,
                                                PlantPredictor::from_system(sys), cost, d);
  const ClosedLoopCoefficients cl = extract_coefficients(sys, sys, c0, noise, d);
  for (int t = 0; t <= d.T; ++t) {
    const double expected = (cl.x_gain[t] * noise.mean + cl.x_offset[t])(0);
    EXPECT_LT(std::abs(rep.xhat_trace[0][t](0) - expected), 4.0 * rep.xhat_stderr[0][t](0) + 1e-12)
        << "t=" << t;
  }
}

TEST(ClosedLoopLearn, ExampleEstimateMatchesPlantMean) {
  // With zero-mean primitives every affine closed loop has E[xhat_t] = 0.
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  LearnOptions lo;
  lo.n_outer = 2;
  lo.n_inner = 20000;
  lo.seed = 7;
  const MonteCarloReport rep = closed_loop_learn(ex.plant, ex.model, matching_strategy(ex.model, ex.dims),
                                                 ex.noise, ex.cost, ex.dims, lo);
  const auto& last = rep.xhat_trace.back();
  const auto& se = rep.xhat_stderr.back();
  for (int t = 0; t <= ex.dims.T; ++t) {
    EXPECT_LT(std::abs(last[t](0)), 4.0 * se[t](0) + 1e-12) << "t=" << t;
  }
  EXPECT_TRUE(rep.converged);
}

TEST(EpisodeCsv, DeterministicAndWellFormed) {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const SeparatedController c = known_plant_controller(ex);
  auto dump = [&] {
    std::ostringstream os;
    write_episode_csv_header(os, ex.dims);
    for (std::uint64_t k = 0; k < 5; ++k) {
      write_episode_csv(os, run_episode(ex.plant, ex.model, c, ex.noise, ex.dims, {1, k}).record,
                        ex.dims);
    }
    return os.str();
  };
  const std::string a = dump(), b = dump();
  EXPECT_EQ(a, b);
  std::istringstream in(a);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "episode,t,x0,xhat0,y0,yhat0,u0,w0,z0");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5 * (ex.dims.T + 1));
}
