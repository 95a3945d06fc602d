#include "sepctl/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <json.hpp>

namespace sepctl {

namespace {

MatrixXd second_moment(const NoiseSpec& noise) {
  const Eigen::Index N = noise.mean.size();
  MatrixXd M(N + 1, N + 1);
  M.topLeftCorner(N, N) = noise.cov + noise.mean * noise.mean.transpose();
  M.topRightCorner(N, 1) = noise.mean;
  M.bottomLeftCorner(1, N) = noise.mean.transpose();
  M(N, N) = 1.0;
  return M;
}

// Maps a primitive selector to zeta = [xi; 1] coordinates.
MatrixXd lift(const MatrixXd& S) {
  MatrixXd out = MatrixXd::Zero(S.rows(), S.cols() + 1);
  out.leftCols(S.cols()) = S;
  return out;
}

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

GaussianBelief batch_gaussian_conditioning(const NoiseSpec& noise,
                                           const MatrixXd& observe,
                                           const VectorXd& observed,
                                           const MatrixXd& functional,
                                           double ridge) {
  const Eigen::Index N = noise.mean.size();
  if (observe.cols() != N || functional.cols() != N ||
      observe.rows() != observed.size()) {
    fail(ErrorKind::kDimensionMismatch, "conditioning operator shapes");
  }
  const MatrixXd& S = noise.cov;
  const MatrixXd Syy = observe * S * observe.transpose();
  const MatrixXd Sfy = functional * S * observe.transpose();
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(Syy);
  cod.setThreshold(ridge);
  const VectorXd innov = observed - observe * noise.mean;
  const VectorXd alpha = cod.solve(innov);
  // The observation must be explainable by the joint law.
  const VectorXd resid = Syy * alpha - innov;
  const double scale = std::max(1.0, innov.cwiseAbs().maxCoeff());
  if (resid.size() > 0 && resid.cwiseAbs().maxCoeff() > 1e-8 * scale) {
    fail(ErrorKind::kSingularObservationCov,
         "observation outside the support of the primitive law");
  }
  GaussianBelief out;
  out.mean = functional * noise.mean + Sfy * alpha;
  out.cov = functional * S * functional.transpose() -
            Sfy * cod.solve(Sfy.transpose());
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

AffineStrategyCoefficients exact_linear_strategy(const TimeVaryingLinearSystem& sys,
                                                 const NoiseSpec& noise,
                                                 const QuadraticCostSpec& cost,
                                                 const Dims& dims,
                                                 const InformationBasis& basis) {
  validate_system(sys, dims);
  validate_noise(noise, dims);
  validate_cost(cost, dims);
  const NoiseLayout layout(dims);
  const int N = layout.size(), T = dims.T, n = dims.n, m = dims.m;
  if (basis.selectors.size() != static_cast<std::size_t>(T)) {
    fail(ErrorKind::kHorizonMismatch, "basis needs one selector per step");
  }
  for (const auto& S : basis.selectors) {
    if (S.cols() != N) fail(ErrorKind::kDimensionMismatch, "basis selector width");
  }
  const MatrixXd M = second_moment(noise);

  // Parameter j acts on a single entry of U_t; record (t, effect on U_t).
  struct Param {
    int t;
    MatrixXd effect;  // m x (N+1)
  };
  std::vector<Param> params;
  for (int t = 0; t < T; ++t) {
    const MatrixXd& S = basis.selectors[t];
    for (Eigen::Index k = 0; k < S.rows(); ++k) {
      for (int i = 0; i < m; ++i) {
        MatrixXd e = MatrixXd::Zero(m, N + 1);
        e.row(i).head(N) = S.row(k);
        params.push_back({t, e});
      }
    }
    if (basis.constant) {
      for (int i = 0; i < m; ++i) {
        MatrixXd e = MatrixXd::Zero(m, N + 1);
        e(i, N) = 1.0;
        params.push_back({t, e});
      }
    }
  }
  const int P = static_cast<int>(params.size());

  // Affine-in-theta representations: index 0 is the constant part.
  std::vector<MatrixXd> X(P + 1, MatrixXd::Zero(n, N + 1));
  X[0] = lift(layout.select_x0());
  MatrixXd H = MatrixXd::Zero(P, P);
  VectorXd g = VectorXd::Zero(P);
  double c0 = 0.0;
  auto accumulate = [&](const std::vector<MatrixXd>& V, const MatrixXd& W) {
    std::vector<MatrixXd> WVM(P + 1);
    for (int j = 0; j <= P; ++j) WVM[j] = W * V[j] * M;
    c0 += (WVM[0] * V[0].transpose()).trace();
    for (int j = 1; j <= P; ++j) {
      g(j - 1) += (WVM[j] * V[0].transpose()).trace();
      for (int k = 1; k <= P; ++k) {
        H(j - 1, k - 1) += (WVM[j] * V[k].transpose()).trace();
      }
    }
  };
  for (int t = 0; t < T; ++t) {
    std::vector<MatrixXd> U(P + 1, MatrixXd::Zero(m, N + 1));
    for (int j = 0; j < P; ++j) {
      if (params[j].t == t) U[j + 1] = params[j].effect;
    }
    accumulate(X, cost.Qx[t]);
    accumulate(U, cost.Ru[t]);
    std::vector<MatrixXd> next(P + 1);
    for (int j = 0; j <= P; ++j) next[j] = sys.A[t] * X[j] + sys.B[t] * U[j];
    next[0] += sys.D[t] * lift(layout.select_w(t));
    X = std::move(next);
  }
  accumulate(X, cost.QT);
  H = 0.5 * (H + H.transpose());

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (P > 0 && es.eigenvalues().minCoeff() <= 1e-12 * scale) {
    fail(ErrorKind::kSingularNormalEquations,
         "expected cost is not strictly convex in the basis coefficients");
  }
  const VectorXd theta = P > 0 ? VectorXd(H.ldlt().solve(-g)) : VectorXd(0);

  AffineStrategyCoefficients out;
  int j = 0;
  for (int t = 0; t < T; ++t) {
    const MatrixXd& S = basis.selectors[t];
    MatrixXd gain(m, S.rows());
    for (Eigen::Index k = 0; k < S.rows(); ++k) {
      for (int i = 0; i < m; ++i) gain(i, k) = theta(j++);
    }
    VectorXd offset = VectorXd::Zero(m);
    if (basis.constant) {
      for (int i = 0; i < m; ++i) offset(i) = theta(j++);
    }
    out.primitive_gain.push_back(gain * S);
    out.gain.push_back(gain);
    out.offset.push_back(offset);
  }
  out.cost = c0 + g.dot(theta);
  return out;
}

double affine_strategy_cost(const TimeVaryingLinearSystem& sys,
                            const NoiseSpec& noise, const QuadraticCostSpec& cost,
                            const Dims& dims,
                            const std::vector<MatrixXd>& primitive_gain,
                            const std::vector<VectorXd>& offset) {
  const NoiseLayout layout(dims);
  const int N = layout.size();
  if (primitive_gain.size() != static_cast<std::size_t>(dims.T) ||
      offset.size() != primitive_gain.size()) {
    fail(ErrorKind::kHorizonMismatch, "strategy coefficients length");
  }
  const MatrixXd M = second_moment(noise);
  MatrixXd X = lift(layout.select_x0());
  double J = 0.0;
  for (int t = 0; t < dims.T; ++t) {
    MatrixXd U(dims.m, N + 1);
    U << primitive_gain[t], offset[t];
    J += (cost.Qx[t] * X * M * X.transpose()).trace();
    J += (cost.Ru[t] * U * M * U.transpose()).trace();
    X = sys.A[t] * X + sys.B[t] * U + sys.D[t] * lift(layout.select_w(t));
  }
  J += (cost.QT * X * M * X.transpose()).trace();
  return J;
}

ClosedLoopCoefficients extract_coefficients(const TimeVaryingLinearSystem& plant_sys,
                                            const TimeVaryingLinearSystem& model_sys,
                                            const SeparatedController& controller,
                                            const NoiseSpec& noise,
                                            const Dims& dims) {
  const DisturbancePreview preview(model_sys, noise, dims);
  const int N = NoiseLayout(dims).size();
  auto run = [&](const VectorXd& xi) {
    return simulate_primitives(plant_sys, model_sys, controller, preview, noise,
                               dims, xi, {})
        .record;
  };
  const EpisodeRecord base = run(VectorXd::Zero(N));
  ClosedLoopCoefficients c;
  c.u_offset = base.u;
  c.u_model_offset = base.u_model;
  c.x_offset = base.x;
  c.xhat_offset = base.xhat;
  c.u_gain.assign(dims.T, MatrixXd(dims.m, N));
  c.u_model_gain.assign(dims.T, MatrixXd(dims.m, N));
  c.x_gain.assign(dims.T + 1, MatrixXd(dims.n, N));
  c.xhat_gain.assign(dims.T + 1, MatrixXd(dims.n, N));
  for (int i = 0; i < N; ++i) {
    const EpisodeRecord ep = run(VectorXd::Unit(N, i));
    for (int t = 0; t < dims.T; ++t) {
      c.u_gain[t].col(i) = ep.u[t] - base.u[t];
      c.u_model_gain[t].col(i) = ep.u_model[t] - base.u_model[t];
    }
    for (int t = 0; t <= dims.T; ++t) {
      c.x_gain[t].col(i) = ep.x[t] - base.x[t];
      c.xhat_gain[t].col(i) = ep.xhat[t] - base.xhat[t];
    }
  }
  return c;
}

ExampleInstance scalar_mismatch_instance(double rho) {
  ExampleInstance inst;
  inst.dims = Dims{1, 1, 1, 1, 1, 2};
  const MatrixXd one = scalar(1.0), zero = scalar(0.0);
  inst.model.A = {scalar(3.0), scalar(3.0)};
  inst.model.B = {scalar(2.0), scalar(3.0)};
  inst.model.D = {scalar(2.0), zero};
  inst.model.C = {one, one, one};
  inst.model.E = {zero, zero, zero};
  inst.plant.A = {one, one};
  inst.plant.B = {one, one};
  inst.plant.D = {one, zero};
  inst.plant.C = inst.model.C;
  inst.plant.E = inst.model.E;
  const int N = NoiseLayout(inst.dims).size();
  inst.noise.mean = VectorXd::Zero(N);
  inst.noise.cov = MatrixXd::Identity(N, N);
  const int w0 = NoiseLayout(inst.dims).w_offset(0);
  inst.noise.cov(0, w0) = rho;
  inst.noise.cov(w0, 0) = rho;
  inst.cost.Qx = {zero, zero};
  inst.cost.Ru = {zero, scalar(0.5)};
  inst.cost.QT = scalar(0.5);
  inst.cost.beta = 1.0;
  return inst;
}

InformationBasis scalar_mismatch_basis(const Dims& dims) {
  const NoiseLayout layout(dims);
  InformationBasis basis;
  basis.selectors.push_back(layout.select_x0());
  MatrixXd S1(2 * dims.n, layout.size());
  S1 << layout.select_x0(), layout.select_w(0);
  basis.selectors.push_back(S1);
  basis.constant = true;
  return basis;
}

bool SignReport::pass() const {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

bool ExampleReport::pass() const {
  bool any_reference = false;
  for (const auto& s : signs) {
    if (!s.pass()) return false;
    any_reference = any_reference || s.matches_reference;
  }
  // A single-sign run only adjudicates its own checks.
  return any_reference || signs.size() == 1;
}

namespace {

std::vector<double> example_coef(const std::vector<MatrixXd>& gain, const Dims& dims) {
  const int w0 = NoiseLayout(dims).w_offset(0);
  return {gain[0](0, 0), gain[1](0, 0), gain[1](0, w0)};
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

PipelineResult analytic_pipeline(const std::string& name, const ExampleInstance& inst,
                                 const SeparatedController& controller) {
  const ClosedLoopCoefficients c =
      extract_coefficients(inst.plant, inst.model, controller, inst.noise, inst.dims);
  PipelineResult r;
  r.name = name;
  r.coef = example_coef(c.u_gain, inst.dims);
  r.J1 = affine_strategy_cost(inst.plant, inst.noise, inst.cost, inst.dims,
                              c.u_gain, c.u_offset);
  return r;
}

SignReport reproduce_sign(double rho, const ExampleOptions& options) {
  const ExampleInstance inst = scalar_mismatch_instance(rho);
  const Dims& dims = inst.dims;
  SignReport rep;
  rep.rho = rho;
  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    rep.checks.push_back({name, ok, detail});
  };

  // (i) exact affine optimum on the true plant.
  const AffineStrategyCoefficients exact = exact_linear_strategy(
      inst.plant, inst.noise, inst.cost, dims, scalar_mismatch_basis(dims));
  PipelineResult pi;
  pi.name = "exact";
  pi.coef = example_coef(exact.primitive_gain, dims);
  pi.J1 = exact.cost;
  const double direct = affine_strategy_cost(inst.plant, inst.noise, inst.cost, dims,
                                             exact.primitive_gain, exact.offset);
  check("exact cost matches direct evaluation", std::abs(direct - exact.cost) <= 1e-12,
        "normal equations " + fmt(exact.cost) + ", direct " + fmt(direct));
  rep.matches_reference = max_abs_diff(pi.coef, {-0.5, -0.25, -0.5}) <= 1e-9;
  rep.pipelines.push_back(pi);

  // (ii) matching law bound to the plant's conditional-mean predictor.
  const SeparatedStrategy matching = matching_strategy(inst.model, dims);
  const PlantPredictor truth = PlantPredictor::from_system(inst.plant);
  const SeparatedController matched =
      bind_predictor(matching, inst.model, truth, inst.cost, dims);
  rep.pipelines.push_back(analytic_pipeline("matching", inst, matched));
  const double d_match = max_abs_diff(rep.pipelines.back().coef, pi.coef);
  check("matching agrees with exact", d_match <= 1e-6, "max diff " + fmt(d_match));

  // (iii) penalized LQ over the matched pair.
  const SeparatedController pair =
      solve_matched_pair_lq(inst.model, truth, inst.cost, dims);
  rep.pipelines.push_back(analytic_pipeline("matched-pair-lq", inst, pair));
  const double d_pair = max_abs_diff(rep.pipelines.back().coef, pi.coef);
  check("matched-pair LQ agrees with exact", d_pair <= 1e-6, "max diff " + fmt(d_pair));

  // Reference only: tracking LQ on the raw model, bound to open-loop means.
  const SeparatedStrategy raw = bind_parameters(
      solve_tracking_lq(inst.model, inst.cost, dims),
      model_predicted_means(inst.model, inst.noise, dims));
  rep.pipelines.push_back(
      analytic_pipeline("raw-model-tracking", inst, SeparatedController::from_strategy(raw)));

  // Per-episode terminal identity and zero-mean discrepancies under (ii).
  {
    const DisturbancePreview preview(inst.model, inst.noise, dims);
    const PrimitiveSampler sampler(inst.noise, dims);
    std::vector<double> sum(dims.T, 0.0), sum2(dims.T, 0.0);
    double worst = 0.0;
    const long N = options.identity_episodes;
    for (long e = 0; e < N; ++e) {
      const RngStreamSpec stream{options.seed, static_cast<std::uint64_t>(e)};
      const EpisodeRecord ep =
          simulate_primitives(inst.plant, inst.model, matched, preview, inst.noise,
                              dims, sampler.draw(stream), {})
              .record;
      worst = std::max(worst, std::abs(ep.x[dims.T](0) - ep.xhat[dims.T](0)));
      for (int t = 0; t < dims.T; ++t) {
        const double d = ep.x[t + 1](0) - ep.xhat[t + 1](0);
        sum[t] += d;
        sum2[t] += d * d;
      }
    }
    rep.identity_max_abs = worst;
    check("terminal identity x_T = xhat_T per episode", worst <= 1e-9,
          "max |x_T - xhat_T| " + fmt(worst) + " over " + std::to_string(N) + " episodes");
    for (int t = 0; t < dims.T; ++t) {
      const double mean = sum[t] / static_cast<double>(N);
      const double var = N > 1 ? std::max(0.0, (sum2[t] - N * mean * mean) / (N - 1)) : 0.0;
      const double sd = std::sqrt(var);
      rep.discrepancy_mean.push_back(mean);
      rep.discrepancy_std.push_back(sd);
      const double band = 4.0 / std::sqrt(static_cast<double>(N)) * sd + 1e-12;
      check("zero mean discrepancy at t=" + std::to_string(t + 1), std::abs(mean) <= band,
            "mean " + fmt(mean) + ", band " + fmt(band));
    }
  }

  // Cost equality of the two problems under (ii).
  {
    MonteCarloOptions mc;
    mc.episodes = options.eval_episodes;
    mc.seed = options.seed + 1;
    mc.threads = options.threads;
    const CostReport c =
        run_monte_carlo(inst.plant, inst.model, matched, inst.noise, inst.cost, dims, mc)
            .cost;
    const double se = std::hypot(c.J1_stderr, c.J2_stderr);
    check("problem costs agree", std::abs(c.J2_mean - c.J1_mean) <= 4.0 * se,
          "J1 " + fmt(c.J1_mean) + ", J2 " + fmt(c.J2_mean) + ", 4se " + fmt(4.0 * se));
    check("Monte Carlo J1 matches exact cost",
          std::abs(c.J1_mean - exact.cost) <= 4.0 * c.J1_stderr,
          "J1 " + fmt(c.J1_mean) + " +- " + fmt(c.J1_stderr));
  }

  // (iv) learned predictor from closed-loop data.
  {
    LearnOptions lo;
    lo.n_outer = options.learn_outer;
    lo.n_inner = options.learn_episodes;
    lo.seed = options.seed + 2;
    lo.threads = options.threads;
    lo.eval_episodes = options.eval_episodes;
    const MonteCarloReport learned = closed_loop_learn(inst.plant, inst.model, matching,
                                                       inst.noise, inst.cost, dims, lo);
    PipelineResult pl = analytic_pipeline(
        "learned", inst,
        bind_predictor(matching, inst.model, *learned.learned_predictor, inst.cost, dims));
    const std::size_t B = learned.batch_predictors.size();
    std::vector<double> mean(3, 0.0), m2(3, 0.0);
    std::vector<std::vector<double>> per_batch;
    for (const auto& p : learned.batch_predictors) {
      per_batch.push_back(analytic_pipeline(
                              "batch", inst,
                              bind_predictor(matching, inst.model, p, inst.cost, dims))
                              .coef);
    }
    for (const auto& c : per_batch) {
      for (int i = 0; i < 3; ++i) mean[i] += c[i] / static_cast<double>(B);
    }
    for (const auto& c : per_batch) {
      for (int i = 0; i < 3; ++i) m2[i] += (c[i] - mean[i]) * (c[i] - mean[i]);
    }
    bool ok = true;
    std::string detail;
    for (int i = 0; i < 3; ++i) {
      const double se =
          B > 1 ? std::sqrt(m2[i] / static_cast<double>(B - 1) / static_cast<double>(B))
                : 0.0;
      pl.coef_stderr.push_back(se);
      const double d = std::abs(pl.coef[i] - pi.coef[i]);
      ok = ok && d <= std::max(4.0 * se, 1e-6);
      detail += (i ? ", " : "") + fmt(d) + "/" + fmt(4.0 * se);
    }
    pl.J1 = learned.cost.J1_mean;
    pl.J1_stderr = learned.cost.J1_stderr;
    check("learned coefficients within 4 stderr", ok, "diff/4se " + detail);
    check("learned J1 matches exact cost",
          std::abs(pl.J1 - exact.cost) <= 4.0 * pl.J1_stderr,
          "J1 " + fmt(pl.J1) + " +- " + fmt(pl.J1_stderr));
    rep.pipelines.push_back(pl);
  }
  return rep;
}

}  // namespace

ExampleReport reproduce_example(const ExampleOptions& options) {
  ExampleReport report;
  for (double rho : options.signs) report.signs.push_back(reproduce_sign(rho, options));
  return report;
}

void write_example_text(std::ostream& os, const ExampleReport& report) {
  char line[160];
  for (const auto& s : report.signs) {
    os << "cov(X0,W0) = " << fmt(s.rho)
       << (s.matches_reference ? "  [reproduces u0=-x0/2, u1=-x0/4-w0/2]" : "") << '\n';
    std::snprintf(line, sizeof(line), "  %-20s %12s %12s %12s %12s\n", "pipeline",
                  "u0:x0", "u1:x0", "u1:w0", "J1");
    os << line;
    for (const auto& p : s.pipelines) {
      std::snprintf(line, sizeof(line), "  %-20s %12.8f %12.8f %12.8f %12.8f\n",
                    p.name.c_str(), p.coef[0], p.coef[1], p.coef[2], p.J1);
      os << line;
      if (!p.coef_stderr.empty()) {
        std::snprintf(line, sizeof(line), "  %-20s %12.2e %12.2e %12.2e %12.2e\n",
                      "  (stderr)", p.coef_stderr[0], p.coef_stderr[1],
                      p.coef_stderr[2], p.J1_stderr);
        os << line;
      }
    }
    for (const auto& c : s.checks) {
      os << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << " (" << c.detail
         << ")\n";
    }
  }
  os << (report.pass() ? "RESULT: PASS" : "RESULT: FAIL") << '\n';
}

void write_example_json(std::ostream& os, const ExampleReport& report) {
  nlohmann::json j;
  j["pass"] = report.pass();
  j["signs"] = nlohmann::json::array();
  for (const auto& s : report.signs) {
    nlohmann::json js;
    js["rho"] = s.rho;
    js["matches_reference"] = s.matches_reference;
    js["pass"] = s.pass();
    js["identity_max_abs"] = s.identity_max_abs;
    js["discrepancy_mean"] = s.discrepancy_mean;
    js["discrepancy_std"] = s.discrepancy_std;
    for (const auto& p : s.pipelines) {
      nlohmann::json jp;
      jp["u0_x0"] = p.coef[0];
      jp["u1_x0"] = p.coef[1];
      jp["u1_w0"] = p.coef[2];
      jp["J1"] = p.J1;
      if (!p.coef_stderr.empty()) {
        jp["u0_x0_stderr"] = p.coef_stderr[0];
        jp["u1_x0_stderr"] = p.coef_stderr[1];
        jp["u1_w0_stderr"] = p.coef_stderr[2];
        jp["J1_stderr"] = p.J1_stderr;
      }
      js["pipelines"][p.name] = jp;
    }
    for (const auto& c : s.checks) {
      js["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    j["signs"].push_back(js);
  }
  os << j.dump(2) << '\n';
}

}  // namespace sepctl
