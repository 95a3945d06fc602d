#include "sepctl/solver.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace sepctl {

namespace {

// Finite-horizon LQ with an exogenous vector e known at decision time:
//   x_{t+1} = A_t x + B_t u + G_t e,
//   stage  x'Q_t x + u'R_t u + beta |Pi x_{t+1} - Ref_t e|^2,  terminal x'QT x.
// The value is V_t(x, e) = x'P_t x + 2 x'S_t e + (terms free of x), and the
// optimal law is u = K_t x + L_t e.
struct BackwardProblem {
  std::vector<MatrixXd> A, B, G, Q, R, Ref;
  MatrixXd QT;
  MatrixXd Pi;
  double beta = 0.0;
};

struct BackwardSolution {
  std::vector<MatrixXd> K;
  std::vector<MatrixXd> L;
};

BackwardSolution backward_pass(const BackwardProblem& pb) {
  const int T = static_cast<int>(pb.A.size());
  const int de = static_cast<int>(pb.G.front().cols());
  BackwardSolution sol;
  sol.K.resize(T);
  sol.L.resize(T);
  MatrixXd P = pb.QT;
  MatrixXd S = MatrixXd::Zero(P.rows(), de);
  const MatrixXd penalty = pb.beta * pb.Pi.transpose() * pb.Pi;
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd& A = pb.A[t];
    const MatrixXd& B = pb.B[t];
    const MatrixXd& G = pb.G[t];
    const MatrixXd Pt = P + penalty;
    const MatrixXd St = S - pb.beta * pb.Pi.transpose() * pb.Ref[t];
    MatrixXd H = pb.R[t] + B.transpose() * Pt * B;
    H = 0.5 * (H + H.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() <= 1e-12 * scale) {
      std::ostringstream os;
      os << "R + B'PB is not invertible at Riccati step t=" << t
         << " (min eigenvalue " << es.eigenvalues().minCoeff() << ")";
      fail(ErrorKind::kSingularRiccati, os.str());
    }
    const Eigen::LDLT<MatrixXd> ldlt(H);
    const MatrixXd K = -ldlt.solve(B.transpose() * Pt * A);
    const MatrixXd L = -ldlt.solve(B.transpose() * (Pt * G + St));
    const MatrixXd Acl = A + B * K;
    const MatrixXd Gcl = B * L + G;
    const MatrixXd P_next =
        pb.Q[t] + K.transpose() * pb.R[t] * K + Acl.transpose() * Pt * Acl;
    S = K.transpose() * pb.R[t] * L + Acl.transpose() * (Pt * Gcl + St);
    P = 0.5 * (P_next + P_next.transpose());
    sol.K[t] = K;
    sol.L[t] = L;
  }
  return sol;
}

MatrixXd pseudo_inverse(const MatrixXd& B, int* rank) {
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(B);
  cod.setThreshold(1e-12);
  if (rank != nullptr) *rank = static_cast<int>(cod.rank());
  return cod.pseudoInverse();
}

VectorXd stack(const std::vector<VectorXd>& parts, std::size_t begin) {
  Eigen::Index len = 0;
  for (std::size_t i = begin; i < parts.size(); ++i) len += parts[i].size();
  VectorXd out(len);
  Eigen::Index o = 0;
  for (std::size_t i = begin; i < parts.size(); ++i) {
    out.segment(o, parts[i].size()) = parts[i];
    o += parts[i].size();
  }
  return out;
}

// Exogenous layout for predictor-driven problems: [w_0 .. w_{T-1} | 1].
std::vector<MatrixXd> predictor_exogenous(const PlantPredictor& pred,
                                          const Dims& dims) {
  const int de = dims.T * dims.r + 1;
  std::vector<MatrixXd> G(dims.T);
  for (int t = 0; t < dims.T; ++t) {
    G[t] = MatrixXd::Zero(dims.n, de);
    G[t].middleCols(t * dims.r, dims.r) = pred.H[t];
    G[t].col(de - 1) = pred.h[t];
  }
  return G;
}

void check_predictor(const PlantPredictor& pred, const Dims& dims) {
  if (pred.horizon() != dims.T || pred.G.size() != pred.F.size() ||
      pred.H.size() != pred.F.size() || pred.h.size() != pred.F.size()) {
    fail(ErrorKind::kHorizonMismatch, "predictor horizon");
  }
  for (int t = 0; t < dims.T; ++t) {
    if (pred.F[t].rows() != dims.n || pred.F[t].cols() != dims.n ||
        pred.G[t].cols() != dims.m || pred.H[t].cols() != dims.r ||
        pred.h[t].size() != dims.n) {
      fail(ErrorKind::kDimensionMismatch, "predictor matrix shapes");
    }
  }
}

}  // namespace

VectorXd SeparatedStrategy::control(int t, const VectorXd& model_mean,
                                    const VectorXd& w_preview) const {
  if (!bound()) {
    fail(ErrorKind::kInvalidArgument, "strategy has unbound xhat slots");
  }
  return control(t, model_mean, VectorXd(0), w_preview);
}

VectorXd SeparatedStrategy::control(int t, const VectorXd& model_mean,
                                    const VectorXd& slots,
                                    const VectorXd& w_preview) const {
  if (t < 0 || t >= static_cast<int>(steps.size())) {
    fail(ErrorKind::kIndexOutOfHorizon, "strategy step");
  }
  const StrategyStep& s = steps[t];
  if (model_mean.size() != s.K.cols() || slots.size() != s.L.cols() ||
      w_preview.size() != s.J.cols()) {
    fail(ErrorKind::kDimensionMismatch, "strategy inputs");
  }
  VectorXd u = s.K * model_mean + s.J * w_preview + s.k;
  if (s.L.cols() > 0) u += s.L * slots;
  return u;
}

SeparatedStrategy solve_tracking_lq(const TimeVaryingLinearSystem& model_sys,
                                    const QuadraticCostSpec& cost,
                                    const Dims& dims) {
  validate_system(model_sys, dims);
  validate_cost(cost, dims);
  const int T = dims.T, n = dims.n, r = dims.r;
  const int de = T * r + T * n;
  BackwardProblem pb;
  pb.A = model_sys.A;
  pb.B = model_sys.B;
  pb.Q = cost.Qx;
  pb.R = cost.Ru;
  pb.QT = cost.QT;
  pb.beta = cost.beta;
  pb.Pi = MatrixXd::Identity(n, n);
  for (int t = 0; t < T; ++t) {
    MatrixXd G = MatrixXd::Zero(n, de);
    G.middleCols(t * r, r) = model_sys.D[t];
    pb.G.push_back(G);
    MatrixXd Ref = MatrixXd::Zero(n, de);
    Ref.middleCols(T * r + t * n, n).setIdentity();  // slot xhat_{t+1}
    pb.Ref.push_back(Ref);
  }
  const BackwardSolution sol = backward_pass(pb);

  SeparatedStrategy strategy;
  strategy.dims = dims;
  strategy.mode = BindingMode::kParameterized;
  strategy.rank_deficient.assign(T, false);
  for (int t = 0; t < T; ++t) {
    StrategyStep step;
    step.K = sol.K[t];
    step.J = sol.L[t].middleCols(t * r, (T - t) * r);
    step.L = sol.L[t].middleCols(T * r + t * n, (T - t) * n);
    step.k = VectorXd::Zero(dims.m);
    strategy.steps.push_back(std::move(step));
  }
  return strategy;
}

SeparatedStrategy matching_strategy(const TimeVaryingLinearSystem& model_sys,
                                    const Dims& dims) {
  validate_system(model_sys, dims);
  const int T = dims.T, n = dims.n, m = dims.m, r = dims.r;
  SeparatedStrategy strategy;
  strategy.dims = dims;
  strategy.mode = BindingMode::kParameterized;
  for (int t = 0; t < T; ++t) {
    int rank = 0;
    const MatrixXd Bp = pseudo_inverse(model_sys.B[t], &rank);
    StrategyStep step;
    step.K = -Bp * model_sys.A[t];
    step.L = MatrixXd::Zero(m, (T - t) * n);
    step.L.leftCols(n) = Bp;
    step.J = MatrixXd::Zero(m, (T - t) * r);
    step.J.leftCols(r) = -Bp * model_sys.D[t];
    step.k = VectorXd::Zero(m);
    strategy.steps.push_back(std::move(step));
    strategy.rank_deficient.push_back(rank < n);
  }
  return strategy;
}

MatchingResult matching_control(const TimeVaryingLinearSystem& model_sys,
                                int t, const VectorXd& x,
                                const VectorXd& w_mean, const VectorXd& target,
                                bool strict) {
  if (t < 0 || t >= model_sys.horizon()) {
    fail(ErrorKind::kIndexOutOfHorizon, "matching step");
  }
  int rank = 0;
  const MatrixXd Bp = pseudo_inverse(model_sys.B[t], &rank);
  const VectorXd free_response = model_sys.A[t] * x + model_sys.D[t] * w_mean;
  MatchingResult out;
  out.u = Bp * (target - free_response);
  out.residual = (free_response + model_sys.B[t] * out.u - target).norm();
  out.rank_deficient = rank < static_cast<int>(x.size());
  const double scale = std::max(1.0, target.norm());
  if (strict && out.residual > 1e-9 * scale) {
    std::ostringstream os;
    os << "matching target unreachable at t=" << t << " (residual "
       << out.residual << ")";
    fail(ErrorKind::kRankDeficient, os.str());
  }
  return out;
}

SeparatedStrategy bind_parameters(const SeparatedStrategy& strategy,
                                  const StrategyParameterization& params) {
  if (strategy.bound()) {
    fail(ErrorKind::kAlreadyBound, "strategy slots are already bound");
  }
  const int T = strategy.dims.T;
  if (params.xhat_means.size() != static_cast<std::size_t>(T + 1)) {
    std::ostringstream os;
    os << "expected " << T + 1 << " xhat values, got " << params.xhat_means.size();
    fail(ErrorKind::kLengthMismatch, os.str());
  }
  for (const auto& v : params.xhat_means) {
    if (v.size() != strategy.dims.n) {
      fail(ErrorKind::kLengthMismatch, "xhat value has wrong dimension");
    }
  }
  SeparatedStrategy out = strategy;
  for (int t = 0; t < T; ++t) {
    StrategyStep& step = out.steps[t];
    step.k += step.L * stack(params.xhat_means, t + 1);
    step.L = MatrixXd(step.k.size(), 0);
  }
  out.mode = BindingMode::kBound;
  return out;
}

StrategyParameterization model_predicted_means(
    const TimeVaryingLinearSystem& model_sys, const NoiseSpec& noise,
    const Dims& dims) {
  StrategyParameterization params;
  params.xhat_means.push_back(noise.x0_mean(dims));
  for (int t = 0; t < dims.T; ++t) {
    params.xhat_means.push_back(model_sys.A[t] * params.xhat_means.back() +
                                model_sys.D[t] * noise.w_mean(dims, t));
  }
  return params;
}

ControlDecision SeparatedController::decide(int t, const VectorXd& model_mean,
                                            const VectorXd& plant_mean,
                                            const VectorXd& w_preview) const {
  return decide(t, model_mean, plant_mean, w_preview, VectorXd::Zero(dims.m));
}

ControlDecision SeparatedController::decide(int t, const VectorXd& model_mean,
                                            const VectorXd& plant_mean,
                                            const VectorXd& w_preview,
                                            const VectorXd& probe) const {
  if (t < 0 || t >= static_cast<int>(plant_law.size())) {
    fail(ErrorKind::kIndexOutOfHorizon, "controller step");
  }
  const ControlLawStep& law = plant_law[t];
  ControlDecision out;
  out.plant = law.Kx * model_mean + law.Kp * plant_mean + law.J * w_preview + law.k +
              probe;
  if (!matching) {
    out.model = out.plant;
    return out;
  }
  const int r = dims.r;
  const VectorXd target =
      predictor->predict(t, plant_mean, out.plant, w_preview.head(r));
  VectorXd slots = VectorXd::Zero((dims.T - t) * dims.n);
  slots.head(dims.n) = target;
  out.model = matching->control(t, model_mean, slots, w_preview);
  const VectorXd reached = model->A[t] * model_mean + model->B[t] * out.model +
                           model->D[t] * w_preview.head(r);
  out.matching_residual = (reached - target).norm();
  return out;
}

SeparatedController SeparatedController::from_strategy(
    const SeparatedStrategy& strategy, StateSource source) {
  if (!strategy.bound()) {
    fail(ErrorKind::kInvalidArgument, "controller needs a bound strategy");
  }
  SeparatedController c;
  c.dims = strategy.dims;
  for (const auto& step : strategy.steps) {
    ControlLawStep law;
    const MatrixXd zero = MatrixXd::Zero(step.K.rows(), step.K.cols());
    law.Kx = source == StateSource::kModelBelief ? step.K : zero;
    law.Kp = source == StateSource::kPlantBelief ? step.K : zero;
    law.J = step.J;
    law.k = step.k;
    c.plant_law.push_back(std::move(law));
  }
  return c;
}

SeparatedController bind_predictor(const SeparatedStrategy& matching,
                                   const TimeVaryingLinearSystem& model_sys,
                                   const PlantPredictor& predictor,
                                   const QuadraticCostSpec& cost,
                                   const Dims& dims) {
  if (matching.bound()) {
    fail(ErrorKind::kAlreadyBound, "matching strategy is already bound");
  }
  validate_cost(cost, dims);
  check_predictor(predictor, dims);
  const int T = dims.T, n = dims.n, r = dims.r;
  BackwardProblem pb;
  pb.A = predictor.F;
  pb.B = predictor.G;
  pb.G = predictor_exogenous(predictor, dims);
  pb.Q = cost.Qx;
  pb.R = cost.Ru;
  pb.QT = cost.QT;
  pb.beta = 0.0;  // matched: the discrepancy has zero conditional mean
  pb.Pi = MatrixXd::Identity(n, n);
  pb.Ref.assign(T, MatrixXd::Zero(n, pb.G.front().cols()));
  const BackwardSolution sol = backward_pass(pb);

  SeparatedController c;
  c.dims = dims;
  for (int t = 0; t < T; ++t) {
    ControlLawStep law;
    law.Kx = MatrixXd::Zero(dims.m, n);
    law.Kp = sol.K[t];
    law.J = sol.L[t].middleCols(t * r, (T - t) * r);
    law.k = sol.L[t].col(T * r);
    c.plant_law.push_back(std::move(law));
  }
  c.matching = matching;
  c.predictor = predictor;
  c.model = model_sys;
  return c;
}

SeparatedController solve_matched_pair_lq(const TimeVaryingLinearSystem& model_sys,
                                          const PlantPredictor& predictor,
                                          const QuadraticCostSpec& cost,
                                          const Dims& dims) {
  validate_system(model_sys, dims);
  validate_cost(cost, dims);
  check_predictor(predictor, dims);
  const int T = dims.T, n = dims.n, r = dims.r;
  const std::vector<MatrixXd> G = predictor_exogenous(predictor, dims);
  const int de = static_cast<int>(G.front().cols());
  BackwardProblem pb;
  for (int t = 0; t < T; ++t) {
    // Under matching both halves follow the predictor in conditional mean.
    MatrixXd A = MatrixXd::Zero(2 * n, 2 * n);
    A.topRightCorner(n, n) = predictor.F[t];
    A.bottomRightCorner(n, n) = predictor.F[t];
    MatrixXd B(2 * n, dims.m);
    B << predictor.G[t], predictor.G[t];
    MatrixXd Gt(2 * n, de);
    Gt << G[t], G[t];
    MatrixXd Q = MatrixXd::Zero(2 * n, 2 * n);
    Q.topLeftCorner(n, n) = cost.Qx[t];
    pb.A.push_back(A);
    pb.B.push_back(B);
    pb.G.push_back(Gt);
    pb.Q.push_back(Q);
    pb.R.push_back(cost.Ru[t]);
    pb.Ref.push_back(MatrixXd::Zero(n, de));
  }
  pb.QT = MatrixXd::Zero(2 * n, 2 * n);
  pb.QT.topLeftCorner(n, n) = cost.QT;
  pb.Pi.resize(n, 2 * n);
  pb.Pi << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  pb.beta = cost.beta;
  const BackwardSolution sol = backward_pass(pb);

  SeparatedController c;
  c.dims = dims;
  for (int t = 0; t < T; ++t) {
    ControlLawStep law;
    law.Kx = sol.K[t].leftCols(n);
    law.Kp = sol.K[t].rightCols(n);
    law.J = sol.L[t].middleCols(t * r, (T - t) * r);
    law.k = sol.L[t].col(T * r);
    c.plant_law.push_back(std::move(law));
  }
  c.matching = matching_strategy(model_sys, dims);
  c.predictor = predictor;
  c.model = model_sys;
  return c;
}

}  // namespace sepctl
