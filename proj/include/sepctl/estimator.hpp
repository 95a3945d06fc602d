#pragma once

// Information-state machinery: Kalman beliefs for the model and the plant,
// the learned density of plant output trajectories, and the learned
// conditional-mean transition of the plant used to bind strategies.

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "sepctl/gaussian.hpp"
#include "sepctl/lti.hpp"

namespace sepctl {

/// Moments of W_t and Z_{t+1}, the primitives a single filter step consumes.
struct StepNoise {
  VectorXd w_mean;
  MatrixXd w_cov;
  VectorXd z_mean;  ///< of Z_{t+1}
  MatrixXd z_cov;
  MatrixXd state_cov;  ///< extra additive process covariance; empty = none
};

StepNoise step_noise(const NoiseSpec& noise, const Dims& dims, int t);

/// Conditions `prior` on y = C x + E z with z ~ N(z_mean, z_cov).
GaussianBelief measurement_update(const GaussianBelief& prior,
                                  const MatrixXd& C, const MatrixXd& E,
                                  const VectorXd& z_mean,
                                  const MatrixXd& z_cov, const VectorXd& y);

/// Belief over x_0 after the first observation.
GaussianBelief initial_belief(const TimeVaryingLinearSystem& sys,
                              const NoiseSpec& noise, const Dims& dims,
                              const VectorXd& y0);

/// One predict/update cycle: x_{t+1} = A_t x + B_t u + D_t w, then condition
/// on y_{t+1}. Singular innovation covariance falls back to a pseudo-inverse.
GaussianBelief kalman_step(const TimeVaryingLinearSystem& sys,
                           const StepNoise& noise, const GaussianBelief& belief,
                           int t, const VectorXd& u, const VectorXd& y_next);

/// Affine least squares y ~ Theta [x; 1] accumulated in information form, so
/// partial fits from independent workers merge exactly.
class AffineRegression {
 public:
  AffineRegression() = default;
  AffineRegression(int regressors, int outputs);

  void update(const VectorXd& x, const VectorXd& y);
  void merge(const AffineRegression& other);

  long count() const { return count_; }
  int regressors() const { return static_cast<int>(xtx_.rows()) - 1; }
  int outputs() const { return static_cast<int>(xty_.cols()); }

  /// outputs x (regressors + 1); last column is the intercept. Minimum-norm
  /// solution when regressors are collinear.
  MatrixXd coefficients() const;
  VectorXd predict(const VectorXd& x) const;
  /// Residual covariance of y (divisor count - rank).
  MatrixXd residual_cov() const;

 private:
  MatrixXd xtx_;
  MatrixXd xty_;
  MatrixXd yty_;
  long count_ = 0;
};

enum class ConditioningMode { kAffine, kBinned };

/// Running estimate of p(Yhat_{0:t} | U_{0:t-1}) for one prefix length t,
/// plus the episode-conditioned plant beliefs at step t used to collapse the
/// plant marginal.
struct OutputDensityEstimate {
  int t = 0;
  long count = 0;
  VectorXd mean;  ///< stacked yhat_{0:t}
  MatrixXd m2;    ///< Welford co-moment
  ConditioningMode mode = ConditioningMode::kAffine;
  double bin_width = 1.0;
  /// Affine conditional mean of yhat_{0:t} given the control prefix.
  AffineRegression regression;
  /// Binned conditional means keyed by the discretized control prefix.
  std::map<std::vector<long>, std::pair<long, VectorXd>> bins;

  // Mixture moments of absorbed plant beliefs.
  long belief_count = 0;
  VectorXd belief_mean;
  MatrixXd belief_m2;
  MatrixXd belief_cov_sum;
  std::optional<GaussianBelief> prior;

  OutputDensityEstimate() = default;
  OutputDensityEstimate(int t, int p, int m, int n,
                        ConditioningMode mode = ConditioningMode::kAffine,
                        double bin_width = 1.0);

  /// Unbiased sample covariance (zero until two samples).
  MatrixXd cov() const;
  /// Conditional mean of the stacked outputs given a control prefix.
  VectorXd conditional_mean(const VectorXd& u_prefix) const;
  /// Folds another estimate of the same prefix into this one.
  void merge(const OutputDensityEstimate& other);
};

/// Welford update with one stacked trajectory yhat_{0:t} and its control
/// prefix u_{0:t-1}.
OutputDensityEstimate learn_output_density(const OutputDensityEstimate& est,
                                           const VectorXd& yhat_traj,
                                           const VectorXd& u_prefix);

/// Adds one episode-conditioned plant belief p(Xhat_t | Yhat_{0:t}, U).
OutputDensityEstimate absorb_plant_belief(const OutputDensityEstimate& est,
                                          const GaussianBelief& belief);

/// Per-prefix estimates for t = 0..T.
using OutputDensityModel = std::vector<OutputDensityEstimate>;

OutputDensityModel make_output_density_model(
    const Dims& dims, ConditioningMode mode = ConditioningMode::kAffine,
    double bin_width = 1.0);

struct InformationState {
  GaussianBelief model_belief;
  GaussianBelief plant_belief;
  /// Learned cross-episode estimate for the current prefix length (shared,
  /// read-only); the episode's own data lives in yhat_traj/u_prefix until
  /// the merge step.
  std::shared_ptr<const OutputDensityEstimate> output_density;
  VectorXd yhat_traj;
  VectorXd u_prefix;
  int t = 0;
  int horizon = 0;
  /// Process covariance kappa*I added when filtering the plant, standing in
  /// for the unknown plant/model mismatch.
  double plant_inflation = 0.0;
};

InformationState initial_information_state(
    const TimeVaryingLinearSystem& model_sys, const NoiseSpec& noise,
    const Dims& dims, const VectorXd& y0, const VectorXd& yhat0,
    std::shared_ptr<const OutputDensityEstimate> density0 = nullptr,
    double plant_inflation = 0.0);

/// Pi_{t+1} from (Pi_t, y_{t+1}, yhat_{t+1}, controls). No strategy enters.
/// `u_model` drives the model belief and `u_plant` the plant belief, which is
/// filtered with the hypothesized `plant_belief_sys` matrices.
InformationState info_state_update(
    const InformationState& pi, const VectorXd& y_next,
    const VectorXd& yhat_next, const VectorXd& u_model,
    const VectorXd& u_plant, const TimeVaryingLinearSystem& model_sys,
    const TimeVaryingLinearSystem& plant_belief_sys, const NoiseSpec& noise,
    const Dims& dims,
    std::shared_ptr<const OutputDensityEstimate> next_density = nullptr);

/// Same control applied to both systems.
InformationState info_state_update(
    const InformationState& pi, const VectorXd& y_next,
    const VectorXd& yhat_next, const VectorXd& u,
    const TimeVaryingLinearSystem& model_sys,
    const TimeVaryingLinearSystem& plant_belief_sys, const NoiseSpec& noise,
    const Dims& dims);

/// Moment-matched collapse of episode-conditioned Gaussians with the given
/// weights: mean of means, covariance by the law of total variance.
GaussianBelief collapse_mixture(const std::vector<GaussianBelief>& components,
                                const std::vector<double>& weights);

struct FactoredBelief {
  GaussianBelief model_belief;
  GaussianBelief plant_marginal;
};

/// Splits Pi_t into the model belief and the plant marginal obtained by
/// collapsing the episode-conditioned plant beliefs absorbed in the output
/// density. Falls back to the configured prior; kEmptyDensity otherwise.
FactoredBelief factorize(const InformationState& pi);

/// Conditional-mean plant transition
///   xhat_{t+1} = F_t xhat_t + G_t u_t + H_t E[W_t | data] + h_t.
/// Binding the true plant uses (A-hat, B-hat, D-hat, 0).
struct PlantPredictor {
  std::vector<MatrixXd> F;
  std::vector<MatrixXd> G;
  std::vector<MatrixXd> H;
  std::vector<VectorXd> h;

  int horizon() const { return static_cast<int>(F.size()); }
  VectorXd predict(int t, const VectorXd& xhat, const VectorXd& u,
                   const VectorXd& w_mean) const;

  static PlantPredictor from_system(const TimeVaryingLinearSystem& sys);
};

/// Per-step regression of the next plant belief mean on
/// (plant belief mean, control, E[W_t | data]).
class PlantTransitionLearner {
 public:
  PlantTransitionLearner() = default;
  explicit PlantTransitionLearner(const Dims& dims);

  void absorb(int t, const VectorXd& xhat, const VectorXd& u,
              const VectorXd& w_mean, const VectorXd& xhat_next);
  void merge(const PlantTransitionLearner& other);
  long count(int t) const { return steps_.at(t).count(); }

  /// Predictor from the data so far; steps without data keep `fallback`.
  PlantPredictor predictor(const PlantPredictor& fallback) const;

 private:
  Dims dims_;
  std::vector<AffineRegression> steps_;
};

}  // namespace sepctl
