#pragma once

// Paired model/plant episodes under shared primitive draws, seeded Monte
// Carlo aggregation, and the learn-and-bind closed loop.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "sepctl/estimator.hpp"
#include "sepctl/gaussian.hpp"
#include "sepctl/lti.hpp"
#include "sepctl/rng.hpp"
#include "sepctl/solver.hpp"

namespace sepctl {

enum class PreviewMode {
  kConditional,  ///< E[W_{t:T-1} | y_{0:t}] by batch conditioning
  kPrior,        ///< unconditional means (zero-mean fast path)
};

/// E[W_t..W_{T-1} | y_{0:t}] for a known model. The model output is affine in
/// the primitives once the (known) input contribution is removed, so the
/// conditioning gains are computed once per (model, noise).
class DisturbancePreview {
 public:
  DisturbancePreview(const TimeVaryingLinearSystem& model_sys,
                     const NoiseSpec& noise, const Dims& dims,
                     PreviewMode mode = PreviewMode::kConditional);

  /// `y` holds y_0..y_t, `u_model` the model inputs u_0..u_{t-1}.
  VectorXd at(int t, const std::vector<VectorXd>& y,
              const std::vector<VectorXd>& u_model) const;

  /// Rows mapping the primitive vector to y_t with zero input.
  const MatrixXd& output_operator(int t) const { return observe_ops_[t]; }

 private:
  TimeVaryingLinearSystem model_;
  NoiseSpec noise_;
  Dims dims_;
  PreviewMode mode_;
  std::vector<MatrixXd> observe_ops_;
  std::vector<LinearConditioner> conditioners_;
};

struct EpisodeOptions {
  double probe_std = 0.0;  ///< i.i.d. probing added to the plant input
  PreviewMode preview = PreviewMode::kConditional;
  /// Process inflation for the plant filter (see InformationState).
  double plant_inflation = 1.0;
  /// Matrices the plant belief is filtered with; the model when unset.
  std::optional<TimeVaryingLinearSystem> plant_belief_sys;
};

/// One episode with its information-state sequence Pi_0..Pi_T.
struct EpisodeTrace {
  EpisodeRecord record;
  std::vector<InformationState> info;
  std::vector<VectorXd> w_preview;  ///< E[W_t | data] used at step t
  double max_matching_residual = 0.0;
};

/// Runs the loop from an explicit primitive vector [X0 | W | Z] and probe
/// sequence (empty means none). Deterministic.
EpisodeTrace simulate_primitives(const TimeVaryingLinearSystem& plant_sys,
                                 const TimeVaryingLinearSystem& model_sys,
                                 const SeparatedController& controller,
                                 const DisturbancePreview& preview,
                                 const NoiseSpec& noise, const Dims& dims,
                                 const VectorXd& xi,
                                 const std::vector<VectorXd>& probes,
                                 const EpisodeOptions& options = {});

/// Draws the primitives and probes from `stream`, then simulates.
EpisodeTrace run_episode(const TimeVaryingLinearSystem& plant_sys,
                         const TimeVaryingLinearSystem& model_sys,
                         const SeparatedController& controller,
                         const NoiseSpec& noise, const Dims& dims,
                         const RngStreamSpec& stream,
                         const EpisodeOptions& options = {});

/// Primitive sampler reused across episodes.
class PrimitiveSampler {
 public:
  PrimitiveSampler(const NoiseSpec& noise, const Dims& dims);
  VectorXd draw(const RngStreamSpec& stream) const;
  std::vector<VectorXd> probes(const RngStreamSpec& stream, double std_dev) const;

 private:
  VectorXd mean_;
  MatrixXd factor_;
  Dims dims_;
};

struct MonteCarloOptions {
  long episodes = 1000;
  std::uint64_t seed = 0;
  int threads = 0;  ///< 0 = hardware concurrency
  std::uint64_t stream_offset = 0;
  EpisodeOptions episode;
};

struct MonteCarloReport {
  CostReport cost;
  std::vector<VectorXd> discrepancy_mean;  ///< x_{t+1} - xhat_{t+1}, t=0..T-1
  std::vector<VectorXd> discrepancy_std;
  double max_matching_residual = 0.0;
  /// Estimated xhat_0..xhat_T per outer iteration, with standard errors.
  std::vector<std::vector<VectorXd>> xhat_trace;
  std::vector<std::vector<VectorXd>> xhat_stderr;
  bool converged = true;
  double final_change = 0.0;
  std::optional<PlantPredictor> learned_predictor;
  /// Predictors refit on disjoint sub-batches of the learning data.
  std::vector<PlantPredictor> batch_predictors;
  long episodes = 0;
  double wall_seconds = 0.0;
};

/// Deterministic for a fixed seed regardless of `threads`.
MonteCarloReport run_monte_carlo(const TimeVaryingLinearSystem& plant_sys,
                                 const TimeVaryingLinearSystem& model_sys,
                                 const SeparatedController& controller,
                                 const NoiseSpec& noise,
                                 const QuadraticCostSpec& cost,
                                 const Dims& dims,
                                 const MonteCarloOptions& options);

enum class RebindMode {
  kBatched,  ///< rebind between outer iterations
  kPerStep,  ///< rebind after every observed transition (sequential)
};

struct LearnOptions {
  int n_outer = 5;
  long n_inner = 1000;
  std::uint64_t seed = 0;
  int threads = 0;
  double probe_std = 1.0;
  double plant_inflation = 1.0;
  double tolerance = 1e-2;  ///< on the xhat trace change, beyond 4 stderr
  RebindMode rebind = RebindMode::kBatched;
  ConditioningMode conditioning = ConditioningMode::kAffine;
  double bin_width = 1.0;
  int sub_batches = 10;
  long eval_episodes = 0;  ///< 0 = n_inner
};

/// Learn-and-bind loop: bind the matching law to the current plant predictor
/// (iteration 0: the model itself, i.e. model-predicted means), run probing
/// episodes, refit the predictor from plant beliefs, estimate xhat_{0:T}
/// from the output density, repeat. Final costs come from a probe-free
/// evaluation of the last controller.
MonteCarloReport closed_loop_learn(const TimeVaryingLinearSystem& plant_sys,
                                   const TimeVaryingLinearSystem& model_sys,
                                   const SeparatedStrategy& matching,
                                   const NoiseSpec& noise,
                                   const QuadraticCostSpec& cost,
                                   const Dims& dims,
                                   const LearnOptions& options);

/// CSV header `episode,t,x...,xhat...,y...,yhat...,u...,w...,z...`; one row per
/// t = 0..T (u and w are empty at t = T).
void write_episode_csv_header(std::ostream& os, const Dims& dims);
void write_episode_csv(std::ostream& os, const EpisodeRecord& ep,
                       const Dims& dims);

/// Belief rows: episode,t,model_mean...,model_cov...,plant_mean...,plant_cov...
void write_belief_csv_header(std::ostream& os, const Dims& dims);
void write_belief_csv(std::ostream& os, std::uint64_t episode,
                      const std::vector<InformationState>& info);

/// Flat JSON document (sorted keys, round-trip number formatting).
void write_report_json(std::ostream& os, const MonteCarloReport& report);

}  // namespace sepctl
