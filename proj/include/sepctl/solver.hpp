#pragma once

// Offline synthesis of separated strategies and their online binding.
//
// A parameterized strategy is an affine law per step,
//   u_t = K_t m_t + L_t xhat_{t+1:T} + J_t E[W_{t:T-1} | data] + k_t,
// where m_t is the model-belief mean and the xhat slots stand for the
// (unknown) plant trajectory expectations. Binding substitutes values for the
// slots. Binding to a plant predictor instead of constants yields a
// SeparatedController, which also emits the model-side matching input.

#include <iosfwd>
#include <optional>
#include <vector>

#include "sepctl/estimator.hpp"
#include "sepctl/lti.hpp"

namespace sepctl {

enum class BindingMode { kParameterized, kBound };

struct StrategyStep {
  MatrixXd K;  ///< m x n, on the model-belief mean
  MatrixXd L;  ///< m x n(T-t), on xhat_{t+1..T}; m x 0 once bound
  MatrixXd J;  ///< m x r(T-t), on E[W_t..W_{T-1} | data]
  VectorXd k;  ///< m
};

struct SeparatedStrategy {
  Dims dims;
  std::vector<StrategyStep> steps;
  BindingMode mode = BindingMode::kParameterized;
  /// Matching laws only: steps whose B_t cannot reach every target.
  std::vector<bool> rank_deficient;

  bool bound() const { return mode == BindingMode::kBound; }

  /// Evaluates a bound law. `w_preview` stacks E[W_t..W_{T-1} | data].
  VectorXd control(int t, const VectorXd& model_mean,
                   const VectorXd& w_preview) const;
  /// Evaluates a parameterized law with explicit slot values xhat_{t+1..T}.
  VectorXd control(int t, const VectorXd& model_mean, const VectorXd& slots,
                   const VectorXd& w_preview) const;
};

/// Expected plant states xhat_0..xhat_T.
struct StrategyParameterization {
  std::vector<VectorXd> xhat_means;
};

/// Backward Riccati pass with reference tracking on the model: stage cost
/// x'Qx + u'Ru + beta |x_{t+1} - xhat_{t+1}|^2, terminal x'QT x. The value is
/// quadratic in x and affine in the slots and predicted disturbances.
SeparatedStrategy solve_tracking_lq(const TimeVaryingLinearSystem& model_sys,
                                    const QuadraticCostSpec& cost,
                                    const Dims& dims);

/// Minimum-norm matching law u_t = B_t^+ (xhat_{t+1} - A_t m_t - D_t E[W_t]).
SeparatedStrategy matching_strategy(const TimeVaryingLinearSystem& model_sys,
                                    const Dims& dims);

struct MatchingResult {
  VectorXd u;
  double residual = 0.0;  ///< |A x + B u + D w - target|
  bool rank_deficient = false;
};

/// Matching control for one step; throws kRankDeficient when `strict` and the
/// target is unreachable.
MatchingResult matching_control(const TimeVaryingLinearSystem& model_sys,
                                int t, const VectorXd& x,
                                const VectorXd& w_mean, const VectorXd& target,
                                bool strict = false);

/// Substitutes constant slot values. kAlreadyBound / kLengthMismatch.
SeparatedStrategy bind_parameters(const SeparatedStrategy& strategy,
                                  const StrategyParameterization& params);

/// Open-loop model means (zero control), the prior guess for xhat.
StrategyParameterization model_predicted_means(
    const TimeVaryingLinearSystem& model_sys, const NoiseSpec& noise,
    const Dims& dims);

/// Executable control decision: plant input and model input.
struct ControlDecision {
  VectorXd plant;
  VectorXd model;
  double matching_residual = 0.0;
};

struct ControlLawStep {
  MatrixXd Kx;  ///< on model-belief mean
  MatrixXd Kp;  ///< on plant-belief mean
  MatrixXd J;   ///< on E[W_t..W_{T-1} | data]
  VectorXd k;
};

/// Which belief a bound SeparatedStrategy reads its state from.
enum class StateSource { kModelBelief, kPlantBelief };

/// Plant-input law plus, optionally, the matching law for the model input
/// with its xhat slot bound to a plant predictor.
struct SeparatedController {
  Dims dims;
  std::vector<ControlLawStep> plant_law;
  std::optional<SeparatedStrategy> matching;
  std::optional<PlantPredictor> predictor;
  std::optional<TimeVaryingLinearSystem> model;  ///< for matching residuals

  ControlDecision decide(int t, const VectorXd& model_mean,
                         const VectorXd& plant_mean,
                         const VectorXd& w_preview) const;
  /// As above with `probe` added to the plant input before matching.
  ControlDecision decide(int t, const VectorXd& model_mean,
                         const VectorXd& plant_mean, const VectorXd& w_preview,
                         const VectorXd& probe) const;

  /// Wraps a bound strategy; both systems receive the same input.
  static SeparatedController from_strategy(const SeparatedStrategy& strategy,
                                           StateSource source = StateSource::kModelBelief);
};

/// Binds the matching law to a plant predictor and solves the remaining
/// model-side (tracking-penalized) stationarity conditions: with the model matched to the
/// predictor, the discrepancy term is control independent, so the plant input
/// is the Riccati solution on the predictor dynamics.
SeparatedController bind_predictor(const SeparatedStrategy& matching,
                                   const TimeVaryingLinearSystem& model_sys,
                                   const PlantPredictor& predictor,
                                   const QuadraticCostSpec& cost,
                                   const Dims& dims);

/// Tracking LQ over the matched model/plant pair z = [x; xhat] with the
/// penalty beta |x_{t+1} - xhat_{t+1}|^2 kept explicitly in the recursion.
SeparatedController solve_matched_pair_lq(const TimeVaryingLinearSystem& model_sys,
                                          const PlantPredictor& predictor,
                                          const QuadraticCostSpec& cost,
                                          const Dims& dims);

struct CostReport {
  double J1_mean = 0.0;
  double J1_stderr = 0.0;
  double J2_mean = 0.0;
  double J2_stderr = 0.0;
  /// sum_t beta |mean(x_{t+1} - xhat_{t+1})|^2
  double penalty_mean = 0.0;
  /// mean of the realized sum_t beta |x_{t+1} - xhat_{t+1}|^2
  double penalty_ms_mean = 0.0;
  double model_cost_mean = 0.0;
  long episodes = 0;
};

/// Monte Carlo estimate of both problems' costs under shared-noise paired
/// simulation (see simharness).
CostReport evaluate_strategy(const SeparatedController& controller,
                             const TimeVaryingLinearSystem& plant_sys,
                             const TimeVaryingLinearSystem& model_sys,
                             const NoiseSpec& noise,
                             const QuadraticCostSpec& cost, const Dims& dims,
                             long n_episodes, std::uint64_t seed,
                             int threads = 0);

/// Plain-text strategy export, 17 significant digits.
void write_strategy(std::ostream& os, const SeparatedStrategy& strategy);
SeparatedStrategy read_strategy(std::istream& is);

}  // namespace sepctl
