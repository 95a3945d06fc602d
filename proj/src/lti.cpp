#include "sepctl/lti.hpp"

#include <sstream>

#include <Eigen/Eigenvalues>

namespace sepctl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kHorizonMismatch: return "HorizonMismatch";
    case ErrorKind::kIndexOutOfHorizon: return "IndexOutOfHorizon";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kNumericalFailure: return "NumericalFailure";
    case ErrorKind::kEmptyDensity: return "EmptyDensity";
    case ErrorKind::kSingularRiccati: return "SingularRiccati";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kAlreadyBound: return "AlreadyBound";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kSingularObservationCov: return "SingularObservationCov";
    case ErrorKind::kSingularNormalEquations: return "SingularNormalEquations";
    case ErrorKind::kNonConvergence: return "NonConvergence";
    case ErrorKind::kConfig: return "ConfigError";
  }
  return "Unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

namespace {

void check_shape(const MatrixXd& M, int rows, int cols, const char* name,
                 int t) {
  if (M.rows() != rows || M.cols() != cols) {
    std::ostringstream os;
    os << name << "[" << t << "]: expected " << rows << "x" << cols << ", got "
       << M.rows() << "x" << M.cols();
    fail(ErrorKind::kDimensionMismatch, os.str());
  }
}

void check_len(const VectorXd& v, int len, const char* name) {
  if (v.size() != len) {
    std::ostringstream os;
    os << name << ": expected length " << len << ", got " << v.size();
    fail(ErrorKind::kDimensionMismatch, os.str());
  }
}

void check_step(int t, int upper, const char* what) {
  if (t < 0 || t >= upper) {
    std::ostringstream os;
    os << what << ": step " << t << " outside [0, " << upper << ")";
    fail(ErrorKind::kIndexOutOfHorizon, os.str());
  }
}

bool symmetric(const MatrixXd& M, double tol) {
  return M.rows() == M.cols() && (M - M.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double quad(const VectorXd& v, const MatrixXd& W) { return v.dot(W * v); }

}  // namespace

void Dims::validate() const {
  if (n <= 0 || m <= 0 || p <= 0 || r <= 0 || s <= 0 || T < 1) {
    std::ostringstream os;
    os << "dims must be positive (n=" << n << " m=" << m << " p=" << p
       << " r=" << r << " s=" << s << " T=" << T << ")";
    fail(ErrorKind::kDimensionMismatch, os.str());
  }
}

TimeVaryingLinearSystem TimeVaryingLinearSystem::constant(
    const Dims& dims, const MatrixXd& A, const MatrixXd& B, const MatrixXd& D,
    const MatrixXd& C, const MatrixXd& E) {
  TimeVaryingLinearSystem sys;
  sys.A.assign(dims.T, A);
  sys.B.assign(dims.T, B);
  sys.D.assign(dims.T, D);
  sys.C.assign(dims.T + 1, C);
  sys.E.assign(dims.T + 1, E);
  return sys;
}

const TimeVaryingLinearSystem& validate_system(
    const TimeVaryingLinearSystem& sys, const Dims& dims) {
  dims.validate();
  const auto T = static_cast<std::size_t>(dims.T);
  auto horizon = [&](std::size_t got, std::size_t want, const char* name) {
    if (got != want) {
      std::ostringstream os;
      os << name << ": expected " << want << " matrices, got " << got;
      fail(ErrorKind::kHorizonMismatch, os.str());
    }
  };
  horizon(sys.A.size(), T, "A");
  horizon(sys.B.size(), T, "B");
  horizon(sys.D.size(), T, "D");
  horizon(sys.C.size(), T + 1, "C");
  horizon(sys.E.size(), T + 1, "E");
  for (int t = 0; t < dims.T; ++t) {
    check_shape(sys.A[t], dims.n, dims.n, "A", t);
    check_shape(sys.B[t], dims.n, dims.m, "B", t);
    check_shape(sys.D[t], dims.n, dims.r, "D", t);
  }
  for (int t = 0; t <= dims.T; ++t) {
    check_shape(sys.C[t], dims.p, dims.n, "C", t);
    check_shape(sys.E[t], dims.p, dims.s, "E", t);
  }
  return sys;
}

MatrixXd NoiseLayout::select_x0() const {
  MatrixXd S = MatrixXd::Zero(dims_.n, size());
  S.block(0, x0_offset(), dims_.n, dims_.n).setIdentity();
  return S;
}

MatrixXd NoiseLayout::select_w(int t) const {
  MatrixXd S = MatrixXd::Zero(dims_.r, size());
  S.block(0, w_offset(t), dims_.r, dims_.r).setIdentity();
  return S;
}

MatrixXd NoiseLayout::select_z(int t) const {
  MatrixXd S = MatrixXd::Zero(dims_.s, size());
  S.block(0, z_offset(t), dims_.s, dims_.s).setIdentity();
  return S;
}

VectorXd NoiseSpec::x0_mean(const Dims& dims) const {
  return mean.segment(0, dims.n);
}
MatrixXd NoiseSpec::x0_cov(const Dims& dims) const {
  return cov.block(0, 0, dims.n, dims.n);
}
VectorXd NoiseSpec::w_mean(const Dims& dims, int t) const {
  return mean.segment(NoiseLayout(dims).w_offset(t), dims.r);
}
MatrixXd NoiseSpec::w_cov(const Dims& dims, int t) const {
  const int o = NoiseLayout(dims).w_offset(t);
  return cov.block(o, o, dims.r, dims.r);
}
VectorXd NoiseSpec::z_mean(const Dims& dims, int t) const {
  return mean.segment(NoiseLayout(dims).z_offset(t), dims.s);
}
MatrixXd NoiseSpec::z_cov(const Dims& dims, int t) const {
  const int o = NoiseLayout(dims).z_offset(t);
  return cov.block(o, o, dims.s, dims.s);
}

NoiseSpec NoiseSpec::independent(const Dims& dims, const VectorXd& x0_mean,
                                 const MatrixXd& x0_cov, const MatrixXd& w_cov,
                                 const MatrixXd& z_cov) {
  const NoiseLayout layout(dims);
  NoiseSpec noise;
  noise.mean = VectorXd::Zero(layout.size());
  noise.cov = MatrixXd::Zero(layout.size(), layout.size());
  noise.mean.segment(0, dims.n) = x0_mean;
  noise.cov.block(0, 0, dims.n, dims.n) = x0_cov;
  for (int t = 0; t < dims.T; ++t) {
    const int o = layout.w_offset(t);
    noise.cov.block(o, o, dims.r, dims.r) = w_cov;
  }
  for (int t = 0; t <= dims.T; ++t) {
    const int o = layout.z_offset(t);
    noise.cov.block(o, o, dims.s, dims.s) = z_cov;
  }
  return noise;
}

void validate_noise(const NoiseSpec& noise, const Dims& dims) {
  const int size = NoiseLayout(dims).size();
  check_len(noise.mean, size, "noise.mean");
  check_shape(noise.cov, size, size, "noise.cov", 0);
  if (!symmetric(noise.cov, 1e-12)) {
    fail(ErrorKind::kInvalidArgument, "noise.cov is not symmetric");
  }
  if (min_eigenvalue(noise.cov) < -1e-10) {
    fail(ErrorKind::kInvalidArgument, "noise.cov is not positive semidefinite");
  }
}

QuadraticCostSpec QuadraticCostSpec::scaled(double lambda) const {
  QuadraticCostSpec out = *this;
  for (auto& Q : out.Qx) Q *= lambda;
  for (auto& R : out.Ru) R *= lambda;
  out.QT *= lambda;
  out.beta *= lambda;
  return out;
}

void validate_cost(const QuadraticCostSpec& cost, const Dims& dims) {
  if (cost.Qx.size() != static_cast<std::size_t>(dims.T) ||
      cost.Ru.size() != static_cast<std::size_t>(dims.T)) {
    fail(ErrorKind::kHorizonMismatch, "cost: Qx and Ru need T matrices each");
  }
  auto psd = [](const MatrixXd& M, const char* name, int t) {
    if (!symmetric(M, 1e-12) || min_eigenvalue(M) < -1e-10) {
      std::ostringstream os;
      os << "cost." << name << "[" << t << "] must be symmetric PSD";
      fail(ErrorKind::kInvalidArgument, os.str());
    }
  };
  for (int t = 0; t < dims.T; ++t) {
    check_shape(cost.Qx[t], dims.n, dims.n, "Qx", t);
    check_shape(cost.Ru[t], dims.m, dims.m, "Ru", t);
    psd(cost.Qx[t], "Qx", t);
    psd(cost.Ru[t], "Ru", t);
  }
  check_shape(cost.QT, dims.n, dims.n, "QT", dims.T);
  psd(cost.QT, "QT", dims.T);
  if (!(cost.beta >= 0.0)) {
    fail(ErrorKind::kInvalidArgument, "cost.beta must be nonnegative");
  }
}

VectorXd step_model(const TimeVaryingLinearSystem& sys, int t,
                    const VectorXd& x, const VectorXd& u, const VectorXd& w) {
  check_step(t, sys.horizon(), "step");
  check_len(x, sys.A[t].cols(), "state");
  check_len(u, sys.B[t].cols(), "control");
  check_len(w, sys.D[t].cols(), "disturbance");
  return sys.A[t] * x + sys.B[t] * u + sys.D[t] * w;
}

VectorXd step_plant(const TimeVaryingLinearSystem& plant, int t,
                    const VectorXd& xhat, const VectorXd& u,
                    const VectorXd& w) {
  return step_model(plant, t, xhat, u, w);
}

VectorXd observe(const TimeVaryingLinearSystem& sys, int t,
                 const VectorXd& state, const VectorXd& z) {
  check_step(t, static_cast<int>(sys.C.size()), "observe");
  check_len(state, sys.C[t].cols(), "state");
  check_len(z, sys.E[t].cols(), "sensor noise");
  return sys.C[t] * state + sys.E[t] * z;
}

namespace {

void check_episode(const EpisodeRecord& ep, const QuadraticCostSpec& cost) {
  const auto T = cost.Qx.size();
  if (ep.u.size() != T || ep.x.size() != T + 1 || ep.xhat.size() != T + 1) {
    fail(ErrorKind::kDimensionMismatch,
         "episode lengths do not match the cost horizon");
  }
}

double stage_and_terminal(const std::vector<VectorXd>& states,
                          const std::vector<VectorXd>& controls,
                          const QuadraticCostSpec& cost) {
  const std::size_t T = controls.size();
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (states[t].size() != cost.Qx[t].rows() ||
        controls[t].size() != cost.Ru[t].rows()) {
      fail(ErrorKind::kDimensionMismatch, "episode/cost dimension mismatch");
    }
    total += quad(states[t], cost.Qx[t]) + quad(controls[t], cost.Ru[t]);
  }
  if (states[T].size() != cost.QT.rows()) {
    fail(ErrorKind::kDimensionMismatch, "terminal state/cost mismatch");
  }
  return total + quad(states[T], cost.QT);
}

}  // namespace

double problem1_cost(const EpisodeRecord& ep, const QuadraticCostSpec& cost) {
  check_episode(ep, cost);
  return stage_and_terminal(ep.xhat, ep.u, cost);
}

double model_cost(const EpisodeRecord& ep, const QuadraticCostSpec& cost) {
  check_episode(ep, cost);
  return stage_and_terminal(ep.x, ep.u, cost);
}

double discrepancy_penalty(const EpisodeRecord& ep,
                           const QuadraticCostSpec& cost) {
  check_episode(ep, cost);
  double total = 0.0;
  for (std::size_t t = 1; t < ep.x.size(); ++t) {
    total += (ep.x[t] - ep.xhat[t]).squaredNorm();
  }
  return cost.beta * total;
}

double problem2_cost(const EpisodeRecord& ep, const QuadraticCostSpec& cost) {
  return model_cost(ep, cost) + discrepancy_penalty(ep, cost);
}

}  // namespace sepctl
