#include "sepctl/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <thread>

#include <json.hpp>

namespace sepctl {

namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Calls fn(i) for i in [0, count); each index runs exactly once and writes
// only its own output slot, so results do not depend on scheduling.
void parallel_for(long count, int threads, const std::function<void(long)>& fn) {
  const int workers = static_cast<int>(
      std::min<long>(resolve_threads(threads), std::max<long>(count, 1)));
  if (workers <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

using ControllerAt = std::function<const SeparatedController&(int)>;
using TransitionHook = std::function<void(int t, const InformationState& before,
                                          const ControlDecision& decision,
                                          const VectorXd& w_head,
                                          const InformationState& after)>;

EpisodeTrace simulate_impl(const TimeVaryingLinearSystem& plant_sys,
                           const TimeVaryingLinearSystem& model_sys,
                           const ControllerAt& controller_at,
                           const DisturbancePreview& preview,
                           const NoiseSpec& noise, const Dims& dims,
                           const VectorXd& xi,
                           const std::vector<VectorXd>& probes,
                           const EpisodeOptions& options,
                           const TransitionHook& hook) {
  const NoiseLayout layout(dims);
  if (xi.size() != layout.size()) {
    fail(ErrorKind::kDimensionMismatch, "primitive vector size");
  }
  if (!probes.empty() && probes.size() != static_cast<std::size_t>(dims.T)) {
    fail(ErrorKind::kLengthMismatch, "probe sequence length");
  }
  const TimeVaryingLinearSystem& belief_sys =
      options.plant_belief_sys ? *options.plant_belief_sys : model_sys;

  EpisodeTrace trace;
  EpisodeRecord& rec = trace.record;
  for (int t = 0; t < dims.T; ++t) {
    rec.w.push_back(xi.segment(layout.w_offset(t), dims.r));
  }
  for (int t = 0; t <= dims.T; ++t) {
    rec.z.push_back(xi.segment(layout.z_offset(t), dims.s));
  }
  rec.x.push_back(xi.head(dims.n));
  rec.xhat.push_back(rec.x.front());
  rec.y.push_back(observe(model_sys, 0, rec.x[0], rec.z[0]));
  rec.yhat.push_back(observe(plant_sys, 0, rec.xhat[0], rec.z[0]));
  trace.info.push_back(initial_information_state(model_sys, noise, dims, rec.y[0],
                                                 rec.yhat[0], nullptr,
                                                 options.plant_inflation));
  const VectorXd no_probe = VectorXd::Zero(dims.m);
  for (int t = 0; t < dims.T; ++t) {
    const InformationState& pi = trace.info.back();
    const VectorXd wp = preview.at(t, rec.y, rec.u_model);
    const ControlDecision dec = controller_at(t).decide(
        t, pi.model_belief.mean, pi.plant_belief.mean, wp,
        probes.empty() ? no_probe : probes[t]);
    trace.max_matching_residual =
        std::max(trace.max_matching_residual, dec.matching_residual);
    rec.u.push_back(dec.plant);
    rec.u_model.push_back(dec.model);
    rec.x.push_back(step_model(model_sys, t, rec.x[t], dec.model, rec.w[t]));
    rec.xhat.push_back(step_plant(plant_sys, t, rec.xhat[t], dec.plant, rec.w[t]));
    rec.y.push_back(observe(model_sys, t + 1, rec.x[t + 1], rec.z[t + 1]));
    rec.yhat.push_back(observe(plant_sys, t + 1, rec.xhat[t + 1], rec.z[t + 1]));
    trace.info.push_back(info_state_update(pi, rec.y[t + 1], rec.yhat[t + 1],
                                           dec.model, dec.plant, model_sys,
                                           belief_sys, noise, dims));
    trace.w_preview.push_back(wp);
    if (hook) {
      hook(t, trace.info[t], dec, wp.head(dims.r), trace.info[t + 1]);
    }
  }
  return trace;
}

struct EpisodeSummary {
  double j1 = 0.0;
  double model = 0.0;
  double penalty_ms = 0.0;
  VectorXd disc;  // stacked x_{t+1} - xhat_{t+1}
  double residual = 0.0;
};

// Sequential Welford accumulator; fed in episode order for determinism.
struct Moments {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double var() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double stderr_mean() const {
    return n > 1 ? std::sqrt(var() / static_cast<double>(n)) : 0.0;
  }
};

MonteCarloReport reduce(const std::vector<EpisodeSummary>& summaries,
                        const QuadraticCostSpec& cost, const Dims& dims) {
  MonteCarloReport report;
  Moments j1, model, pen;
  const int len = dims.T * dims.n;
  std::vector<Moments> disc(len);
  for (const auto& s : summaries) {
    j1.add(s.j1);
    model.add(s.model);
    pen.add(s.penalty_ms);
    for (int i = 0; i < len; ++i) disc[i].add(s.disc(i));
    report.max_matching_residual = std::max(report.max_matching_residual, s.residual);
  }
  CostReport& c = report.cost;
  c.episodes = static_cast<long>(summaries.size());
  c.J1_mean = j1.mean;
  c.J1_stderr = j1.stderr_mean();
  c.model_cost_mean = model.mean;
  c.penalty_ms_mean = pen.mean;
  double penalty = 0.0;
  double delta_var = 0.0;
  for (int t = 0; t < dims.T; ++t) {
    VectorXd mean(dims.n), sd(dims.n);
    for (int i = 0; i < dims.n; ++i) {
      const Moments& mo = disc[t * dims.n + i];
      mean(i) = mo.mean;
      sd(i) = std::sqrt(mo.var());
      delta_var += std::pow(2.0 * cost.beta * mo.mean * mo.stderr_mean(), 2);
    }
    penalty += cost.beta * mean.squaredNorm();
    report.discrepancy_mean.push_back(mean);
    report.discrepancy_std.push_back(sd);
  }
  c.penalty_mean = penalty;
  c.J2_mean = model.mean + penalty;
  c.J2_stderr = std::sqrt(std::pow(model.stderr_mean(), 2) + delta_var);
  report.episodes = c.episodes;
  return report;
}

EpisodeSummary summarize(const EpisodeTrace& trace, const QuadraticCostSpec& cost,
                         const Dims& dims) {
  EpisodeSummary s;
  const EpisodeRecord& ep = trace.record;
  s.j1 = problem1_cost(ep, cost);
  s.model = model_cost(ep, cost);
  s.penalty_ms = discrepancy_penalty(ep, cost);
  s.disc.resize(dims.T * dims.n);
  for (int t = 0; t < dims.T; ++t) {
    s.disc.segment(t * dims.n, dims.n) = ep.x[t + 1] - ep.xhat[t + 1];
  }
  s.residual = trace.max_matching_residual;
  return s;
}

// Plant-side data from one learning episode.
struct LearnSample {
  std::vector<GaussianBelief> plant;  // t = 0..T
  std::vector<VectorXd> u;
  std::vector<VectorXd> w_head;
  VectorXd yhat_traj;
  VectorXd u_traj;
};

LearnSample learn_sample(const EpisodeTrace& trace, const Dims& dims) {
  LearnSample s;
  for (const auto& pi : trace.info) s.plant.push_back(pi.plant_belief);
  s.u = trace.record.u;
  for (const auto& wp : trace.w_preview) s.w_head.push_back(wp.head(dims.r));
  s.yhat_traj = trace.info.back().yhat_traj;
  s.u_traj = trace.info.back().u_prefix;
  return s;
}

std::string fmt_key(const std::string& base, std::initializer_list<long> idx) {
  std::string k = base;
  for (long i : idx) k += "." + std::to_string(i);
  return k;
}

}  // namespace

DisturbancePreview::DisturbancePreview(const TimeVaryingLinearSystem& model_sys,
                                       const NoiseSpec& noise, const Dims& dims,
                                       PreviewMode mode)
    : model_(validate_system(model_sys, dims)),
      noise_(noise),
      dims_(dims),
      mode_(mode) {
  validate_noise(noise, dims);
  const NoiseLayout layout(dims);
  MatrixXd phi = layout.select_x0();
  for (int t = 0; t <= dims.T; ++t) {
    observe_ops_.push_back(model_.C[t] * phi + model_.E[t] * layout.select_z(t));
    if (t < dims.T) phi = model_.A[t] * phi + model_.D[t] * layout.select_w(t);
  }
  if (mode_ == PreviewMode::kPrior) return;
  for (int t = 0; t < dims.T; ++t) {
    MatrixXd O((t + 1) * dims.p, layout.size());
    for (int k = 0; k <= t; ++k) O.middleRows(k * dims.p, dims.p) = observe_ops_[k];
    conditioners_.emplace_back(noise.mean, noise.cov, O);
  }
}

VectorXd DisturbancePreview::at(int t, const std::vector<VectorXd>& y,
                                const std::vector<VectorXd>& u_model) const {
  if (t < 0 || t >= dims_.T) fail(ErrorKind::kIndexOutOfHorizon, "preview step");
  const NoiseLayout layout(dims_);
  const int len = (dims_.T - t) * dims_.r;
  if (mode_ == PreviewMode::kPrior) {
    return noise_.mean.segment(layout.w_offset(t), len);
  }
  if (y.size() < static_cast<std::size_t>(t + 1) ||
      u_model.size() < static_cast<std::size_t>(t)) {
    fail(ErrorKind::kLengthMismatch, "preview needs y_0..y_t and u_0..u_{t-1}");
  }
  VectorXd adjusted((t + 1) * dims_.p);
  VectorXd x_input = VectorXd::Zero(dims_.n);
  for (int k = 0; k <= t; ++k) {
    adjusted.segment(k * dims_.p, dims_.p) = y[k] - model_.C[k] * x_input;
    if (k < t) x_input = model_.A[k] * x_input + model_.B[k] * u_model[k];
  }
  return conditioners_[t].posterior_mean(adjusted).segment(layout.w_offset(t), len);
}

EpisodeTrace simulate_primitives(const TimeVaryingLinearSystem& plant_sys,
                                 const TimeVaryingLinearSystem& model_sys,
                                 const SeparatedController& controller,
                                 const DisturbancePreview& preview,
                                 const NoiseSpec& noise, const Dims& dims,
                                 const VectorXd& xi,
                                 const std::vector<VectorXd>& probes,
                                 const EpisodeOptions& options) {
  return simulate_impl(
      plant_sys, model_sys,
      [&](int) -> const SeparatedController& { return controller; }, preview,
      noise, dims, xi, probes, options, nullptr);
}

PrimitiveSampler::PrimitiveSampler(const NoiseSpec& noise, const Dims& dims)
    : mean_(noise.mean), factor_(sampling_factor(noise.cov)), dims_(dims) {}

VectorXd PrimitiveSampler::draw(const RngStreamSpec& stream) const {
  StreamRng rng(stream, 0);
  return mean_ + factor_ * rng.normals(static_cast<int>(mean_.size()));
}

std::vector<VectorXd> PrimitiveSampler::probes(const RngStreamSpec& stream,
                                               double std_dev) const {
  if (std_dev <= 0.0) return {};
  StreamRng rng(stream, 1);
  std::vector<VectorXd> out;
  for (int t = 0; t < dims_.T; ++t) out.push_back(std_dev * rng.normals(dims_.m));
  return out;
}

EpisodeTrace run_episode(const TimeVaryingLinearSystem& plant_sys,
                         const TimeVaryingLinearSystem& model_sys,
                         const SeparatedController& controller,
                         const NoiseSpec& noise, const Dims& dims,
                         const RngStreamSpec& stream,
                         const EpisodeOptions& options) {
  validate_system(plant_sys, dims);
  const DisturbancePreview preview(model_sys, noise, dims, options.preview);
  const PrimitiveSampler sampler(noise, dims);
  EpisodeTrace trace =
      simulate_primitives(plant_sys, model_sys, controller, preview, noise, dims,
                          sampler.draw(stream),
                          sampler.probes(stream, options.probe_std), options);
  trace.record.seed = stream.master_seed;
  trace.record.episode = stream.stream;
  return trace;
}

MonteCarloReport run_monte_carlo(const TimeVaryingLinearSystem& plant_sys,
                                 const TimeVaryingLinearSystem& model_sys,
                                 const SeparatedController& controller,
                                 const NoiseSpec& noise,
                                 const QuadraticCostSpec& cost, const Dims& dims,
                                 const MonteCarloOptions& options) {
  if (options.episodes < 1) fail(ErrorKind::kInvalidArgument, "episodes must be >= 1");
  validate_system(plant_sys, dims);
  validate_cost(cost, dims);
  const auto start = std::chrono::steady_clock::now();
  const DisturbancePreview preview(model_sys, noise, dims, options.episode.preview);
  const PrimitiveSampler sampler(noise, dims);
  std::vector<EpisodeSummary> summaries(options.episodes);
  parallel_for(options.episodes, options.threads, [&](long i) {
    const RngStreamSpec stream{options.seed,
                               options.stream_offset + static_cast<std::uint64_t>(i)};
    const EpisodeTrace trace = simulate_primitives(
        plant_sys, model_sys, controller, preview, noise, dims,
        sampler.draw(stream), sampler.probes(stream, options.episode.probe_std),
        options.episode);
    summaries[i] = summarize(trace, cost, dims);
  });
  MonteCarloReport report = reduce(summaries, cost, dims);
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

MonteCarloReport closed_loop_learn(const TimeVaryingLinearSystem& plant_sys,
                                   const TimeVaryingLinearSystem& model_sys,
                                   const SeparatedStrategy& matching,
                                   const NoiseSpec& noise,
                                   const QuadraticCostSpec& cost,
                                   const Dims& dims,
                                   const LearnOptions& options) {
  if (matching.bound()) {
    fail(ErrorKind::kAlreadyBound, "closed_loop_learn needs a parameterized strategy");
  }
  if (options.n_outer < 1 || options.n_inner < 1 || options.sub_batches < 1) {
    fail(ErrorKind::kInvalidArgument, "n_outer, n_inner and sub_batches must be >= 1");
  }
  validate_system(plant_sys, dims);
  validate_cost(cost, dims);
  const auto start = std::chrono::steady_clock::now();
  const PlantPredictor fallback = PlantPredictor::from_system(model_sys);
  const DisturbancePreview preview(model_sys, noise, dims);
  const PrimitiveSampler sampler(noise, dims);
  EpisodeOptions ep_opts;
  ep_opts.probe_std = options.probe_std;
  ep_opts.plant_inflation = options.plant_inflation;

  PlantTransitionLearner learner(dims);
  std::vector<PlantTransitionLearner> batches(options.sub_batches,
                                              PlantTransitionLearner(dims));
  PlantPredictor predictor = fallback;

  std::vector<std::vector<VectorXd>> trace;
  std::vector<std::vector<VectorXd>> trace_se;
  trace.push_back(model_predicted_means(model_sys, noise, dims).xhat_means);
  trace_se.push_back(std::vector<VectorXd>(dims.T + 1, VectorXd::Zero(dims.n)));
  double change = 0.0;
  bool converged = true;

  for (int k = 0; k < options.n_outer; ++k) {
    const std::uint64_t offset =
        static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(options.n_inner);
    std::vector<LearnSample> samples(options.n_inner);
    if (options.rebind == RebindMode::kBatched) {
      const SeparatedController controller =
          bind_predictor(matching, model_sys, predictor, cost, dims);
      parallel_for(options.n_inner, options.threads, [&](long i) {
        const RngStreamSpec stream{options.seed, offset + static_cast<std::uint64_t>(i)};
        samples[i] = learn_sample(
            simulate_primitives(plant_sys, model_sys, controller, preview, noise,
                                dims, sampler.draw(stream),
                                sampler.probes(stream, options.probe_std), ep_opts),
            dims);
      });
    } else {
      // Sequential: the learner absorbs each transition as it is observed and
      // the controller is rebound before the next decision.
      SeparatedController controller =
          bind_predictor(matching, model_sys, predictor, cost, dims);
      for (long i = 0; i < options.n_inner; ++i) {
        const std::uint64_t ep = offset + static_cast<std::uint64_t>(i);
        const RngStreamSpec stream{options.seed, ep};
        auto hook = [&](int t, const InformationState& before,
                        const ControlDecision& dec, const VectorXd& w_head,
                        const InformationState& after) {
          learner.absorb(t, before.plant_belief.mean, dec.plant, w_head,
                         after.plant_belief.mean);
          batches[ep % batches.size()].absorb(t, before.plant_belief.mean, dec.plant,
                                              w_head, after.plant_belief.mean);
          controller = bind_predictor(matching, model_sys, learner.predictor(fallback),
                                      cost, dims);
        };
        samples[i] = learn_sample(
            simulate_impl(plant_sys, model_sys,
                          [&](int) -> const SeparatedController& { return controller; },
                          preview, noise, dims, sampler.draw(stream),
                          sampler.probes(stream, options.probe_std), ep_opts, hook),
            dims);
      }
    }

    OutputDensityModel density =
        make_output_density_model(dims, options.conditioning, options.bin_width);
    for (long i = 0; i < options.n_inner; ++i) {
      const LearnSample& s = samples[i];
      const std::uint64_t ep = offset + static_cast<std::uint64_t>(i);
      if (options.rebind == RebindMode::kBatched) {
        for (int t = 0; t < dims.T; ++t) {
          learner.absorb(t, s.plant[t].mean, s.u[t], s.w_head[t], s.plant[t + 1].mean);
          batches[ep % batches.size()].absorb(t, s.plant[t].mean, s.u[t], s.w_head[t],
                                              s.plant[t + 1].mean);
        }
      }
      for (int t = 0; t <= dims.T; ++t) {
        density[t] = learn_output_density(density[t], s.yhat_traj.head((t + 1) * dims.p),
                                          s.u_traj.head(t * dims.m));
        density[t] = absorb_plant_belief(density[t], s.plant[t]);
      }
    }

    std::vector<VectorXd> est, se;
    for (int t = 0; t <= dims.T; ++t) {
      InformationState probe_state;
      probe_state.output_density =
          std::make_shared<const OutputDensityEstimate>(density[t]);
      est.push_back(factorize(probe_state).plant_marginal.mean);
      const double cnt = static_cast<double>(density[t].belief_count);
      se.push_back(cnt > 1 ? VectorXd((density[t].belief_m2.diagonal() /
                                       (cnt * (cnt - 1.0)))
                                          .cwiseSqrt())
                           : VectorXd::Zero(dims.n));
    }
    change = 0.0;
    converged = true;
    for (int t = 0; t <= dims.T; ++t) {
      for (int i = 0; i < dims.n; ++i) {
        const double d = std::abs(est[t](i) - trace.back()[t](i));
        const double band = options.tolerance +
                            4.0 * std::hypot(se[t](i), trace_se.back()[t](i));
        change = std::max(change, d);
        if (d > band) converged = false;
      }
    }
    trace.push_back(est);
    trace_se.push_back(se);
    predictor = learner.predictor(fallback);
  }

  const SeparatedController final_controller =
      bind_predictor(matching, model_sys, predictor, cost, dims);
  MonteCarloOptions eval;
  eval.episodes = options.eval_episodes > 0 ? options.eval_episodes : options.n_inner;
  eval.seed = options.seed;
  eval.threads = options.threads;
  eval.episode.plant_inflation = options.plant_inflation;
  eval.stream_offset =
      static_cast<std::uint64_t>(options.n_outer) * static_cast<std::uint64_t>(options.n_inner);
  MonteCarloReport report = run_monte_carlo(plant_sys, model_sys, final_controller,
                                            noise, cost, dims, eval);
  // Drop the prior guess; the trace lists estimates per outer iteration.
  report.xhat_trace.assign(trace.begin() + 1, trace.end());
  report.xhat_stderr.assign(trace_se.begin() + 1, trace_se.end());
  report.converged = converged;
  report.final_change = change;
  report.learned_predictor = predictor;
  for (const auto& b : batches) report.batch_predictors.push_back(b.predictor(fallback));
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

CostReport evaluate_strategy(const SeparatedController& controller,
                             const TimeVaryingLinearSystem& plant_sys,
                             const TimeVaryingLinearSystem& model_sys,
                             const NoiseSpec& noise,
                             const QuadraticCostSpec& cost, const Dims& dims,
                             long n_episodes, std::uint64_t seed, int threads) {
  MonteCarloOptions opts;
  opts.episodes = n_episodes;
  opts.seed = seed;
  opts.threads = threads;
  return run_monte_carlo(plant_sys, model_sys, controller, noise, cost, dims, opts)
      .cost;
}

namespace {

void header_block(std::ostream& os, const char* name, int count) {
  for (int i = 0; i < count; ++i) os << ',' << name << i;
}

void value_block(std::ostream& os, const VectorXd* v, int count) {
  char buf[40];
  for (int i = 0; i < count; ++i) {
    os << ',';
    if (v != nullptr) {
      std::snprintf(buf, sizeof(buf), "%.17g", (*v)(i));
      os << buf;
    }
  }
}

}  // namespace

void write_episode_csv_header(std::ostream& os, const Dims& dims) {
  os << "episode,t";
  header_block(os, "x", dims.n);
  header_block(os, "xhat", dims.n);
  header_block(os, "y", dims.p);
  header_block(os, "yhat", dims.p);
  header_block(os, "u", dims.m);
  header_block(os, "w", dims.r);
  header_block(os, "z", dims.s);
  os << '\n';
}

void write_episode_csv(std::ostream& os, const EpisodeRecord& ep, const Dims& dims) {
  for (int t = 0; t <= dims.T; ++t) {
    const bool has_step = t < dims.T;
    os << ep.episode << ',' << t;
    value_block(os, &ep.x[t], dims.n);
    value_block(os, &ep.xhat[t], dims.n);
    value_block(os, &ep.y[t], dims.p);
    value_block(os, &ep.yhat[t], dims.p);
    value_block(os, has_step ? &ep.u[t] : nullptr, dims.m);
    value_block(os, has_step ? &ep.w[t] : nullptr, dims.r);
    value_block(os, &ep.z[t], dims.s);
    os << '\n';
  }
}

void write_belief_csv_header(std::ostream& os, const Dims& dims) {
  os << "episode,t";
  header_block(os, "model_mean", dims.n);
  header_block(os, "model_cov", dims.n * dims.n);
  header_block(os, "plant_mean", dims.n);
  header_block(os, "plant_cov", dims.n * dims.n);
  os << '\n';
}

void write_belief_csv(std::ostream& os, std::uint64_t episode,
                      const std::vector<InformationState>& info) {
  for (const auto& pi : info) {
    const int n = pi.model_belief.dim();
    // Row-major flattening of the covariances.
    const MatrixXd mc = pi.model_belief.cov.transpose();
    const MatrixXd pc = pi.plant_belief.cov.transpose();
    const VectorXd mcv = Eigen::Map<const VectorXd>(mc.data(), n * n);
    const VectorXd pcv = Eigen::Map<const VectorXd>(pc.data(), n * n);
    os << episode << ',' << pi.t;
    value_block(os, &pi.model_belief.mean, n);
    value_block(os, &mcv, n * n);
    value_block(os, &pi.plant_belief.mean, n);
    value_block(os, &pcv, n * n);
    os << '\n';
  }
}

void write_report_json(std::ostream& os, const MonteCarloReport& report) {
  nlohmann::json j;
  const CostReport& c = report.cost;
  j["J1_mean"] = c.J1_mean;
  j["J1_stderr"] = c.J1_stderr;
  j["J2_mean"] = c.J2_mean;
  j["J2_stderr"] = c.J2_stderr;
  j["penalty_mean"] = c.penalty_mean;
  j["penalty_ms_mean"] = c.penalty_ms_mean;
  j["model_cost_mean"] = c.model_cost_mean;
  j["episodes"] = report.episodes;
  j["max_matching_residual"] = report.max_matching_residual;
  for (std::size_t t = 0; t < report.discrepancy_mean.size(); ++t) {
    for (Eigen::Index i = 0; i < report.discrepancy_mean[t].size(); ++i) {
      j[fmt_key("discrepancy_mean", {static_cast<long>(t), i})] =
          report.discrepancy_mean[t](i);
      j[fmt_key("discrepancy_std", {static_cast<long>(t), i})] =
          report.discrepancy_std[t](i);
    }
  }
  for (std::size_t k = 0; k < report.xhat_trace.size(); ++k) {
    for (std::size_t t = 0; t < report.xhat_trace[k].size(); ++t) {
      for (Eigen::Index i = 0; i < report.xhat_trace[k][t].size(); ++i) {
        const long kk = static_cast<long>(k), tt = static_cast<long>(t);
        j[fmt_key("xhat_trace", {kk, tt, i})] = report.xhat_trace[k][t](i);
        j[fmt_key("xhat_stderr", {kk, tt, i})] = report.xhat_stderr[k][t](i);
      }
    }
  }
  if (!report.xhat_trace.empty()) {
    j["converged"] = report.converged;
    j["final_change"] = report.final_change;
  }
  os << j.dump(2) << '\n';
}

}  // namespace sepctl
