#include "sepctl/estimator.hpp"

#include <cmath>
#include <sstream>

namespace sepctl {

StepNoise step_noise(const NoiseSpec& noise, const Dims& dims, int t) {
  return StepNoise{noise.w_mean(dims, t), noise.w_cov(dims, t),
                   noise.z_mean(dims, t + 1), noise.z_cov(dims, t + 1), MatrixXd()};
}

GaussianBelief measurement_update(const GaussianBelief& prior,
                                  const MatrixXd& C, const MatrixXd& E,
                                  const VectorXd& z_mean,
                                  const MatrixXd& z_cov, const VectorXd& y) {
  if (C.cols() != prior.dim() || y.size() != C.rows() ||
      E.rows() != C.rows() || E.cols() != z_mean.size()) {
    fail(ErrorKind::kDimensionMismatch, "measurement update shapes");
  }
  const MatrixXd PCt = prior.cov * C.transpose();
  const MatrixXd S = C * PCt + E * z_cov * E.transpose();
  const MatrixXd K = PCt * pinv_psd(S);
  GaussianBelief post;
  post.mean = prior.mean + K * (y - C * prior.mean - E * z_mean);
  post.cov = clip_psd(prior.cov - K * PCt.transpose());
  return post;
}

GaussianBelief initial_belief(const TimeVaryingLinearSystem& sys,
                              const NoiseSpec& noise, const Dims& dims,
                              const VectorXd& y0) {
  const GaussianBelief prior{noise.x0_mean(dims), noise.x0_cov(dims)};
  return measurement_update(prior, sys.C[0], sys.E[0], noise.z_mean(dims, 0),
                            noise.z_cov(dims, 0), y0);
}

GaussianBelief kalman_step(const TimeVaryingLinearSystem& sys,
                           const StepNoise& noise, const GaussianBelief& belief,
                           int t, const VectorXd& u, const VectorXd& y_next) {
  if (t < 0 || t >= sys.horizon()) {
    fail(ErrorKind::kIndexOutOfHorizon, "kalman_step beyond horizon");
  }
  const MatrixXd& A = sys.A[t];
  const MatrixXd& D = sys.D[t];
  if (belief.dim() != A.cols() || u.size() != sys.B[t].cols() ||
      noise.w_mean.size() != D.cols()) {
    fail(ErrorKind::kDimensionMismatch, "kalman_step shapes");
  }
  GaussianBelief predicted;
  predicted.mean = A * belief.mean + sys.B[t] * u + D * noise.w_mean;
  predicted.cov = A * belief.cov * A.transpose() + D * noise.w_cov * D.transpose();
  if (noise.state_cov.size() > 0) predicted.cov += noise.state_cov;
  return measurement_update(predicted, sys.C[t + 1], sys.E[t + 1], noise.z_mean,
                            noise.z_cov, y_next);
}

// --- AffineRegression ------------------------------------------------------

AffineRegression::AffineRegression(int regressors, int outputs)
    : xtx_(MatrixXd::Zero(regressors + 1, regressors + 1)),
      xty_(MatrixXd::Zero(regressors + 1, outputs)),
      yty_(MatrixXd::Zero(outputs, outputs)) {}

void AffineRegression::update(const VectorXd& x, const VectorXd& y) {
  if (x.size() != regressors() || y.size() != outputs()) {
    fail(ErrorKind::kDimensionMismatch, "regression sample shape");
  }
  VectorXd xa(x.size() + 1);
  xa << x, 1.0;
  xtx_.noalias() += xa * xa.transpose();
  xty_.noalias() += xa * y.transpose();
  yty_.noalias() += y * y.transpose();
  ++count_;
}

void AffineRegression::merge(const AffineRegression& other) {
  if (other.count_ == 0) return;
  if (count_ == 0 && xtx_.size() == 0) {
    *this = other;
    return;
  }
  xtx_ += other.xtx_;
  xty_ += other.xty_;
  yty_ += other.yty_;
  count_ += other.count_;
}

MatrixXd AffineRegression::coefficients() const {
  if (count_ == 0) return MatrixXd::Zero(outputs(), regressors() + 1);
  return (pinv_psd(xtx_, 1e-12) * xty_).transpose();
}

VectorXd AffineRegression::predict(const VectorXd& x) const {
  VectorXd xa(x.size() + 1);
  xa << x, 1.0;
  return coefficients() * xa;
}

MatrixXd AffineRegression::residual_cov() const {
  const MatrixXd theta = coefficients();
  const MatrixXd rss = yty_ - theta * xty_;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(xtx_, Eigen::EigenvaluesOnly);
  const double threshold = 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
  long rank = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()(i) > threshold) ++rank;
  }
  const long dof = count_ - rank;
  if (dof <= 0) return MatrixXd::Zero(outputs(), outputs());
  return clip_psd(0.5 * (rss + rss.transpose()) / static_cast<double>(dof), 1e-6);
}

// --- OutputDensityEstimate -------------------------------------------------

OutputDensityEstimate::OutputDensityEstimate(int t_in, int p, int m, int n,
                                             ConditioningMode mode_in,
                                             double bin_width_in)
    : t(t_in),
      mean(VectorXd::Zero(p * (t_in + 1))),
      m2(MatrixXd::Zero(p * (t_in + 1), p * (t_in + 1))),
      mode(mode_in),
      bin_width(bin_width_in),
      regression(m * t_in, p * (t_in + 1)),
      belief_mean(VectorXd::Zero(n)),
      belief_m2(MatrixXd::Zero(n, n)),
      belief_cov_sum(MatrixXd::Zero(n, n)) {}

MatrixXd OutputDensityEstimate::cov() const {
  if (count < 2) return MatrixXd::Zero(mean.size(), mean.size());
  return m2 / static_cast<double>(count - 1);
}

namespace {

std::vector<long> bin_key(const VectorXd& u_prefix, double width) {
  std::vector<long> key(u_prefix.size());
  for (Eigen::Index i = 0; i < u_prefix.size(); ++i) {
    key[i] = static_cast<long>(std::floor(u_prefix(i) / width));
  }
  return key;
}

// Chan et al. pairwise combination of (count, mean, M2).
void combine_moments(long& n_a, VectorXd& mean_a, MatrixXd& m2_a, long n_b,
                     const VectorXd& mean_b, const MatrixXd& m2_b) {
  if (n_b == 0) return;
  if (n_a == 0) {
    n_a = n_b;
    mean_a = mean_b;
    m2_a = m2_b;
    return;
  }
  const double na = static_cast<double>(n_a);
  const double nb = static_cast<double>(n_b);
  const VectorXd delta = mean_b - mean_a;
  mean_a += delta * (nb / (na + nb));
  m2_a += m2_b + delta * delta.transpose() * (na * nb / (na + nb));
  n_a += n_b;
}

}  // namespace

VectorXd OutputDensityEstimate::conditional_mean(const VectorXd& u_prefix) const {
  if (mode == ConditioningMode::kBinned) {
    auto it = bins.find(bin_key(u_prefix, bin_width));
    return it == bins.end() ? mean : it->second.second;
  }
  if (regression.count() == 0 || u_prefix.size() == 0) return mean;
  return regression.predict(u_prefix);
}

void OutputDensityEstimate::merge(const OutputDensityEstimate& other) {
  if (other.t != t || other.mean.size() != mean.size()) {
    fail(ErrorKind::kDimensionMismatch, "merging output densities of different prefixes");
  }
  combine_moments(count, mean, m2, other.count, other.mean, other.m2);
  regression.merge(other.regression);
  for (const auto& [key, entry] : other.bins) {
    auto& mine = bins[key];
    if (mine.first == 0) {
      mine = entry;
    } else {
      const double total = static_cast<double>(mine.first + entry.first);
      mine.second = (mine.second * static_cast<double>(mine.first) +
                     entry.second * static_cast<double>(entry.first)) /
                    total;
      mine.first += entry.first;
    }
  }
  combine_moments(belief_count, belief_mean, belief_m2, other.belief_count,
                  other.belief_mean, other.belief_m2);
  belief_cov_sum += other.belief_cov_sum;
}

OutputDensityEstimate learn_output_density(const OutputDensityEstimate& est,
                                           const VectorXd& yhat_traj,
                                           const VectorXd& u_prefix) {
  if (yhat_traj.size() != est.mean.size()) {
    std::ostringstream os;
    os << "trajectory length " << yhat_traj.size() << " does not match prefix t="
       << est.t << " (" << est.mean.size() << ")";
    fail(ErrorKind::kDimensionMismatch, os.str());
  }
  if (u_prefix.size() != est.regression.regressors()) {
    fail(ErrorKind::kDimensionMismatch, "control prefix length");
  }
  OutputDensityEstimate out = est;
  ++out.count;
  const VectorXd delta = yhat_traj - out.mean;
  out.mean += delta / static_cast<double>(out.count);
  out.m2 += delta * (yhat_traj - out.mean).transpose();
  if (out.mode == ConditioningMode::kAffine) {
    out.regression.update(u_prefix, yhat_traj);
  } else {
    auto& [n, m] = out.bins[bin_key(u_prefix, out.bin_width)];
    if (n == 0) m = VectorXd::Zero(yhat_traj.size());
    ++n;
    m += (yhat_traj - m) / static_cast<double>(n);
  }
  return out;
}

OutputDensityEstimate absorb_plant_belief(const OutputDensityEstimate& est,
                                          const GaussianBelief& belief) {
  if (belief.dim() != est.belief_mean.size()) {
    fail(ErrorKind::kDimensionMismatch, "plant belief dimension");
  }
  OutputDensityEstimate out = est;
  ++out.belief_count;
  const VectorXd delta = belief.mean - out.belief_mean;
  out.belief_mean += delta / static_cast<double>(out.belief_count);
  out.belief_m2 += delta * (belief.mean - out.belief_mean).transpose();
  out.belief_cov_sum += belief.cov;
  return out;
}

OutputDensityModel make_output_density_model(const Dims& dims,
                                             ConditioningMode mode,
                                             double bin_width) {
  OutputDensityModel model;
  model.reserve(dims.T + 1);
  for (int t = 0; t <= dims.T; ++t) {
    model.emplace_back(t, dims.p, dims.m, dims.n, mode, bin_width);
  }
  return model;
}

// --- InformationState ------------------------------------------------------

InformationState initial_information_state(
    const TimeVaryingLinearSystem& model_sys, const NoiseSpec& noise,
    const Dims& dims, const VectorXd& y0, const VectorXd& yhat0,
    std::shared_ptr<const OutputDensityEstimate> density0,
    double plant_inflation) {
  InformationState pi;
  pi.model_belief = initial_belief(model_sys, noise, dims, y0);
  // Both systems start from the same X0, so the plant prior is the model's.
  pi.plant_belief = initial_belief(model_sys, noise, dims, yhat0);
  pi.output_density = std::move(density0);
  pi.yhat_traj = yhat0;
  pi.u_prefix = VectorXd(0);
  pi.t = 0;
  pi.horizon = dims.T;
  pi.plant_inflation = plant_inflation;
  return pi;
}

InformationState info_state_update(
    const InformationState& pi, const VectorXd& y_next,
    const VectorXd& yhat_next, const VectorXd& u_model,
    const VectorXd& u_plant, const TimeVaryingLinearSystem& model_sys,
    const TimeVaryingLinearSystem& plant_belief_sys, const NoiseSpec& noise,
    const Dims& dims, std::shared_ptr<const OutputDensityEstimate> next_density) {
  if (pi.t < 0 || pi.t >= pi.horizon) {
    fail(ErrorKind::kIndexOutOfHorizon, "information state already at horizon");
  }
  const StepNoise sn = step_noise(noise, dims, pi.t);
  InformationState next;
  next.model_belief = kalman_step(model_sys, sn, pi.model_belief, pi.t, u_model, y_next);
  StepNoise plant_sn = sn;
  if (pi.plant_inflation > 0.0) {
    plant_sn.state_cov = pi.plant_inflation * MatrixXd::Identity(dims.n, dims.n);
  }
  next.plant_belief =
      kalman_step(plant_belief_sys, plant_sn, pi.plant_belief, pi.t, u_plant, yhat_next);
  next.yhat_traj.resize(pi.yhat_traj.size() + yhat_next.size());
  next.yhat_traj << pi.yhat_traj, yhat_next;
  next.u_prefix.resize(pi.u_prefix.size() + u_plant.size());
  next.u_prefix << pi.u_prefix, u_plant;
  next.output_density = std::move(next_density);
  next.t = pi.t + 1;
  next.horizon = pi.horizon;
  next.plant_inflation = pi.plant_inflation;
  return next;
}

InformationState info_state_update(
    const InformationState& pi, const VectorXd& y_next,
    const VectorXd& yhat_next, const VectorXd& u,
    const TimeVaryingLinearSystem& model_sys,
    const TimeVaryingLinearSystem& plant_belief_sys, const NoiseSpec& noise,
    const Dims& dims) {
  return info_state_update(pi, y_next, yhat_next, u, u, model_sys,
                           plant_belief_sys, noise, dims);
}

GaussianBelief collapse_mixture(const std::vector<GaussianBelief>& components,
                                const std::vector<double>& weights) {
  if (components.empty() || components.size() != weights.size()) {
    fail(ErrorKind::kEmptyDensity, "mixture needs matching nonempty components/weights");
  }
  const int n = components.front().dim();
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) fail(ErrorKind::kInvalidArgument, "mixture weights sum to zero");
  GaussianBelief out{VectorXd::Zero(n), MatrixXd::Zero(n, n)};
  for (std::size_t i = 0; i < components.size(); ++i) {
    out.mean += (weights[i] / total) * components[i].mean;
  }
  for (std::size_t i = 0; i < components.size(); ++i) {
    const VectorXd d = components[i].mean - out.mean;
    out.cov += (weights[i] / total) * (components[i].cov + d * d.transpose());
  }
  out.cov = clip_psd(out.cov);
  return out;
}

FactoredBelief factorize(const InformationState& pi) {
  const OutputDensityEstimate* est = pi.output_density.get();
  if (est == nullptr || est->belief_count == 0) {
    if (est != nullptr && est->prior) return {pi.model_belief, *est->prior};
    fail(ErrorKind::kEmptyDensity, "no absorbed plant beliefs and no prior");
  }
  const double n = static_cast<double>(est->belief_count);
  GaussianBelief marginal;
  marginal.mean = est->belief_mean;
  marginal.cov = clip_psd(est->belief_cov_sum / n + est->belief_m2 / n);
  return {pi.model_belief, marginal};
}

// --- PlantPredictor / learner ----------------------------------------------

VectorXd PlantPredictor::predict(int t, const VectorXd& xhat, const VectorXd& u,
                                 const VectorXd& w_mean) const {
  if (t < 0 || t >= horizon()) {
    fail(ErrorKind::kIndexOutOfHorizon, "predictor step");
  }
  return F[t] * xhat + G[t] * u + H[t] * w_mean + h[t];
}

PlantPredictor PlantPredictor::from_system(const TimeVaryingLinearSystem& sys) {
  PlantPredictor pred;
  pred.F = sys.A;
  pred.G = sys.B;
  pred.H = sys.D;
  for (const auto& A : sys.A) pred.h.push_back(VectorXd::Zero(A.rows()));
  return pred;
}

PlantTransitionLearner::PlantTransitionLearner(const Dims& dims) : dims_(dims) {
  steps_.assign(dims.T, AffineRegression(dims.n + dims.m + dims.r, dims.n));
}

void PlantTransitionLearner::absorb(int t, const VectorXd& xhat,
                                    const VectorXd& u, const VectorXd& w_mean,
                                    const VectorXd& xhat_next) {
  VectorXd x(dims_.n + dims_.m + dims_.r);
  x << xhat, u, w_mean;
  steps_.at(t).update(x, xhat_next);
}

void PlantTransitionLearner::merge(const PlantTransitionLearner& other) {
  if (steps_.empty()) {
    *this = other;
    return;
  }
  for (std::size_t t = 0; t < steps_.size(); ++t) steps_[t].merge(other.steps_[t]);
}

PlantPredictor PlantTransitionLearner::predictor(const PlantPredictor& fallback) const {
  PlantPredictor pred = fallback;
  const int n = dims_.n, m = dims_.m, r = dims_.r;
  for (std::size_t t = 0; t < steps_.size(); ++t) {
    if (steps_[t].count() <= n + m + r + 1) continue;
    const MatrixXd theta = steps_[t].coefficients();
    pred.F[t] = theta.leftCols(n);
    pred.G[t] = theta.middleCols(n, m);
    pred.H[t] = theta.middleCols(n + m, r);
    pred.h[t] = theta.col(n + m + r);
  }
  return pred;
}

}  // namespace sepctl
