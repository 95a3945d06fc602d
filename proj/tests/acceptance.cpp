// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "sepctl/oracle.hpp"
#include "sepctl/rng.hpp"
#include "sepctl/simharness.hpp"
#include "test_support.hpp"

using namespace sepctl;
using sepctl::testing::s;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

SeparatedController known_plant_controller(const ExampleInstance& ex) {
  return bind_predictor(matching_strategy(ex.model, ex.dims), ex.model,
                        PlantPredictor::from_system(ex.plant), ex.cost, ex.dims);
}

// 1. Coefficient reproduction, both covariance signs, under 60 s.
Outcome coefficient_reproduction() {
  const auto start = std::chrono::steady_clock::now();
  const ExampleReport rep = reproduce_example(ExampleOptions{});
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream os;
  write_example_text(os, rep);
  std::fputs(os.str().c_str(), stdout);
  bool reference_found = false;
  for (const SignReport& sr : rep.signs) {
    if (sr.rho == -0.5) reference_found = sr.matches_reference;
  }
  Outcome o;
  o.pass = rep.pass() && reference_found && secs < 60.0;
  o.detail = std::string("checks ") + (rep.pass() ? "pass" : "fail") +
             ", cov(X0,W0)=-0.5 gives the reference law: " +
             (reference_found ? "yes" : "no") + fmt(", %.1f s", secs);
  return o;
}

// 2. x_2 = xhat_2 per episode under the bound matching strategy.
Outcome terminal_identity() {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const SeparatedController c = known_plant_controller(ex);
  double worst = 0.0;
  const long n = 10000;
  for (long i = 0; i < n; ++i) {
    const EpisodeTrace tr = run_episode(ex.plant, ex.model, c, ex.noise, ex.dims,
                                        {2024, static_cast<std::uint64_t>(i)});
    worst = std::max(worst, (tr.record.x[2] - tr.record.xhat[2]).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-9, fmt("max |x_2 - xhat_2| = %.3g over 10^4 episodes (tol 1e-9)", worst)};
}

// 3. Problem costs agree once the mean discrepancy vanishes.
Outcome cost_equality() {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  MonteCarloOptions mc;
  mc.episodes = 100000;
  mc.seed = 3;
  const MonteCarloReport rep = run_monte_carlo(ex.plant, ex.model, known_plant_controller(ex),
                                               ex.noise, ex.cost, ex.dims, mc);
  bool residual_ok = true;
  double worst_ratio = 0.0;
  for (int t = 0; t < ex.dims.T; ++t) {
    const double band =
        4.0 / std::sqrt(static_cast<double>(mc.episodes)) * rep.discrepancy_std[t].maxCoeff();
    const double m = rep.discrepancy_mean[t].cwiseAbs().maxCoeff();
    residual_ok = residual_ok && m <= band + 1e-12;
    if (band > 0) worst_ratio = std::max(worst_ratio, m / band);
  }
  const double gap = std::abs(rep.cost.J2_mean - rep.cost.J1_mean);
  const double se = std::hypot(rep.cost.J1_stderr, rep.cost.J2_stderr);
  Outcome o;
  o.pass = residual_ok && gap <= 4.0 * se;
  o.detail = fmt("|J2 - J1| = %.3g vs 4 se = %.3g; worst residual/band %.2f", gap, 4.0 * se,
                 worst_ratio);
  return o;
}

// 4. Sequential filter equals batch conditioning on random instances.
Outcome filter_oracle() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = sepctl::testing::random_instance(1000 + seed, 4, 3, 6);
    worst = std::max(worst, sepctl::testing::filter_batch_deviation(inst, seed));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-8 && secs < 30.0,
          fmt("max deviation %.3g over 50 instances (tol 1e-8), %.2f s", worst, secs)};
}

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

// Information states recorded while `driver` was in control, replayed with
// `other` in control on the same realized data.
bool replay_matches(const sepctl::testing::RandomInstance& inst,
                    const TimeVaryingLinearSystem& plant, const SeparatedController& driver,
                    const SeparatedController& other, std::uint64_t stream) {
  const Dims& d = inst.dims;
  const EpisodeTrace tr = run_episode(plant, inst.sys, driver, inst.noise, d, {77, stream});
  const EpisodeRecord& r = tr.record;
  const DisturbancePreview preview(inst.sys, inst.noise, d);
  InformationState pi =
      initial_information_state(inst.sys, inst.noise, d, r.y[0], r.yhat[0], nullptr, 1.0);
  bool ok = same_bits(pi, tr.info[0]);
  for (int t = 0; t < d.T; ++t) {
    const VectorXd wp = preview.at(t, {r.y.begin(), r.y.begin() + t + 1},
                                   {r.u_model.begin(), r.u_model.begin() + t});
    (void)other.decide(t, pi.model_belief.mean, pi.plant_belief.mean, wp);
    pi = info_state_update(pi, r.y[t + 1], r.yhat[t + 1], r.u_model[t], r.u[t], inst.sys,
                           inst.sys, inst.noise, d);
    ok = ok && same_bits(pi, tr.info[t + 1]);
  }
  return ok;
}

// 5. Information states do not depend on the strategy in control.
Outcome policy_independence() {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = sepctl::testing::random_instance(5000 + seed, 3, 2, 5);
    std::mt19937_64 gen(seed);
    TimeVaryingLinearSystem plant = inst.sys;
    for (auto& A : plant.A) A += sepctl::testing::random_matrix(gen, A.rows(), A.cols(), 0.3);
    const StrategyParameterization means = model_predicted_means(inst.sys, inst.noise, inst.dims);
    const SeparatedStrategy lqr =
        bind_parameters(solve_tracking_lq(inst.sys, inst.cost, inst.dims), means);
    QuadraticCostSpec other_cost = inst.cost.scaled(1.0);
    for (auto& R : other_cost.Ru) R *= 10.0;
    const SeparatedStrategy lqr2 =
        bind_parameters(solve_tracking_lq(inst.sys, other_cost, inst.dims), means);
    const SeparatedController a = SeparatedController::from_strategy(lqr);
    const SeparatedController b =
        SeparatedController::from_strategy(lqr2, StateSource::kPlantBelief);
    if (replay_matches(inst, plant, a, b, seed) && replay_matches(inst, plant, b, a, seed)) ++ok;
  }
  return {ok == 20, fmt("%.0f/20 instances bit-identical in both directions", ok)};
}

std::vector<MatrixXd> textbook_lqr(const TimeVaryingLinearSystem& sys,
                                   const QuadraticCostSpec& cost) {
  const int T = sys.horizon();
  std::vector<MatrixXd> K(T);
  MatrixXd P = cost.QT;
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd& A = sys.A[t];
    const MatrixXd& B = sys.B[t];
    K[t] = -(cost.Ru[t] + B.transpose() * P * B).inverse() * B.transpose() * P * A;
    P = cost.Qx[t] + A.transpose() * P * A + A.transpose() * P * B * K[t];
  }
  return K;
}

// 6. Solver cross-checks.
Outcome solver_cross_check() {
  double worst_lqr = 0.0, worst_exact = 0.0;
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> ud(-1.5, 1.5), pos(0.1, 2.0);
  for (int k = 0; k < 30; ++k) {
    const int T = 1 + k % 3;
    const Dims d{1, 1, 1, 1, 1, T};
    TimeVaryingLinearSystem sys;
    QuadraticCostSpec cost;
    for (int t = 0; t < T; ++t) {
      sys.A.push_back(s(ud(gen)));
      sys.B.push_back(s(ud(gen) >= 0 ? pos(gen) : -pos(gen)));
      sys.D.push_back(s(ud(gen)));
      cost.Qx.push_back(s(pos(gen) - 0.1));
      cost.Ru.push_back(s(pos(gen)));
    }
    for (int t = 0; t <= T; ++t) {
      sys.C.push_back(s(1));
      sys.E.push_back(s(0));
    }
    cost.QT = s(pos(gen));
    cost.beta = 0.0;
    const NoiseSpec noise = NoiseSpec::independent(d, VectorXd::Zero(1), s(pos(gen)),
                                                   s(pos(gen)), s(1));
    const SeparatedStrategy st = solve_tracking_lq(sys, cost, d);
    const auto K = textbook_lqr(sys, cost);
    // Full-state information: u_t may use x_0 and w_0..w_{t-1}.
    const NoiseLayout layout(d);
    InformationBasis basis;
    for (int t = 0; t < T; ++t) {
      MatrixXd sel(1 + t, layout.size());
      sel.row(0) = layout.select_x0();
      for (int j = 0; j < t; ++j) sel.row(1 + j) = layout.select_w(j);
      basis.selectors.push_back(sel);
    }
    const auto exact = exact_linear_strategy(sys, noise, cost, d, basis);
    MatrixXd Phi = layout.select_x0();
    for (int t = 0; t < T; ++t) {
      worst_lqr = std::max(worst_lqr, (st.steps[t].K - K[t]).cwiseAbs().maxCoeff());
      const MatrixXd u_gain = st.steps[t].K * Phi;
      worst_exact = std::max(worst_exact, (u_gain - exact.primitive_gain[t]).cwiseAbs().maxCoeff());
      Phi = (sys.A[t] + sys.B[t] * st.steps[t].K) * Phi + sys.D[t] * layout.select_w(t);
    }
  }
  // Bound to the true plant means on the example, realized model inputs are
  // the matching law's.
  double worst_match = 0.0;
  for (double rho : {-0.5, 0.5}) {
    const ExampleInstance ex = scalar_mismatch_instance(rho);
    const SeparatedController c = known_plant_controller(ex);
    const SeparatedStrategy matching = matching_strategy(ex.model, ex.dims);
    for (std::uint64_t i = 0; i < 2000; ++i) {
      const EpisodeTrace tr = run_episode(ex.plant, ex.model, c, ex.noise, ex.dims, {66, i});
      const EpisodeRecord& r = tr.record;
      for (int t = 0; t < ex.dims.T; ++t) {
        const VectorXd& wp = tr.w_preview[t];
        const VectorXd target = step_plant(ex.plant, t, r.xhat[t], r.u[t], wp.head(ex.dims.r));
        VectorXd slots = VectorXd::Zero((ex.dims.T - t) * ex.dims.n);
        slots.head(ex.dims.n) = target;
        const VectorXd u_ref = matching.control(t, tr.info[t].model_belief.mean, slots, wp);
        worst_match = std::max(worst_match, (u_ref - r.u_model[t]).cwiseAbs().maxCoeff());
      }
    }
  }
  Outcome o;
  o.pass = worst_lqr <= 1e-8 && worst_exact <= 1e-8 && worst_match <= 1e-8;
  o.detail = fmt("LQR gain diff %.3g, exact-oracle diff %.3g, matching diff %.3g (tol 1e-8)",
                 worst_lqr, worst_exact, worst_match);
  return o;
}

std::string report_json(const MonteCarloReport& r) {
  std::ostringstream os;
  write_report_json(os, r);
  return os.str();
}

// 7. Standard error scaling and thread-count invariance.
Outcome statistical_sanity() {
  const ExampleInstance ex = scalar_mismatch_instance(-0.5);
  const SeparatedController c = known_plant_controller(ex);
  MonteCarloOptions mc;
  mc.seed = 7;
  mc.episodes = 10000;
  const MonteCarloReport small =
      run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc);
  mc.episodes = 40000;
  const MonteCarloReport large =
      run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc);
  const double ratio = large.cost.J1_stderr / small.cost.J1_stderr;
  mc.episodes = 10000;
  mc.threads = 1;
  const std::string one = report_json(run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc));
  mc.threads = 8;
  const std::string eight = report_json(run_monte_carlo(ex.plant, ex.model, c, ex.noise, ex.cost, ex.dims, mc));
  const bool same = one == eight;
  return {ratio >= 0.4 && ratio <= 0.6 && same,
          fmt("stderr ratio %.3f (want 0.5 +- 20%%), reports identical across 1/8 threads: %s",
              ratio) +
              (same ? "yes" : "no")};
}

// 8. No random affine perturbation beats the exact strategy.
Outcome oracle_optimality() {
  double worst = std::numeric_limits<double>::infinity();
  int beaten = 0;
  for (double rho : {-0.5, 0.5}) {
    const ExampleInstance ex = scalar_mismatch_instance(rho);
    const InformationBasis basis = scalar_mismatch_basis(ex.dims);
    const auto co = exact_linear_strategy(ex.plant, ex.noise, ex.cost, ex.dims, basis);
    StreamRng rng(RngStreamSpec{8, static_cast<std::uint64_t>(rho > 0)});
    for (int k = 0; k < 10000; ++k) {
      const double scale = std::pow(10.0, -8.0 + 8.0 * rng.uniform());
      std::vector<MatrixXd> gain;
      std::vector<VectorXd> offset;
      for (int t = 0; t < ex.dims.T; ++t) {
        MatrixXd th = co.gain[t];
        for (Eigen::Index j = 0; j < th.size(); ++j) th.data()[j] += scale * rng.normal();
        gain.push_back(th * basis.selectors[t]);
        offset.push_back(co.offset[t] + scale * rng.normals(ex.dims.m));
      }
      const double excess =
          affine_strategy_cost(ex.plant, ex.noise, ex.cost, ex.dims, gain, offset) - co.cost;
      worst = std::min(worst, excess);
      if (excess < -1e-12) ++beaten;
    }
  }
  return {beaten == 0,
          fmt("%.0f of 2x10^4 perturbations beat the exact cost; min excess %.3g (tol 1e-12)",
              beaten, worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"1 coefficient reproduction", coefficient_reproduction},
      {"2 terminal identity", terminal_identity},
      {"3 problem cost equality", cost_equality},
      {"4 filter-oracle equivalence", filter_oracle},
      {"5 policy independence", policy_independence},
      {"6 solver cross-check", solver_cross_check},
      {"7 statistical sanity", statistical_sanity},
      {"8 oracle optimality", oracle_optimality},
  };
  int failures = 0;
  std::vector<std::string> lines;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    lines.push_back(std::string(o.pass ? "PASS" : "FAIL") + "  criterion " + name + ": " +
                    o.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
