// Command-line front end: solve, learn, simulate, reproduce-example, compare.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sepctl/config.hpp"
#include "sepctl/oracle.hpp"
#include "sepctl/simharness.hpp"
#include "sepctl/solver.hpp"

namespace {

using namespace sepctl;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitConvergence = 4;
constexpr int kExitReproduction = 5;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<long> episodes;
  std::optional<int> outer;
  std::optional<double> beta;
  std::optional<int> threads;
  std::string json;
  std::string dump_episodes;
  std::string trace;
  std::string strategy;
  std::string csv;
  std::string cov_sign;
  bool strict = false;
};

ScenarioConfig load(const Flags& f) {
  if (f.config.empty()) fail(ErrorKind::kConfig, "--config is required");
  ScenarioConfig cfg = load_config(f.config);
  if (f.seed) cfg.run.seed = *f.seed;
  if (f.episodes) cfg.run.episodes = *f.episodes;
  if (f.outer) cfg.run.outer = *f.outer;
  if (f.threads) cfg.run.threads = *f.threads;
  if (f.beta) {
    if (*f.beta < 0.0) fail(ErrorKind::kConfig, "--beta must be nonnegative");
    cfg.cost.beta = *f.beta;
  }
  if (cfg.run.episodes < 1) fail(ErrorKind::kConfig, "--episodes must be >= 1");
  if (cfg.run.outer < 1) fail(ErrorKind::kConfig, "--outer must be >= 1");
  return cfg;
}

const TimeVaryingLinearSystem& require_plant(const ScenarioConfig& cfg,
                                             const std::string& command) {
  if (!cfg.plant) {
    fail(ErrorKind::kConfig,
         "field 'plant': missing (" + command + " needs the plant simulator section)");
  }
  return *cfg.plant;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kConfig, "cannot write '" + path + "'");
  return out;
}

std::string pick(const std::string& flag, const std::string& configured) {
  return flag.empty() ? configured : flag;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void dump_episodes(const std::string& path, const ScenarioConfig& cfg,
                   const SeparatedController& controller, std::uint64_t offset,
                   long count, std::vector<std::string>& artifacts) {
  if (path.empty()) return;
  std::ofstream out = open_out(path);
  const DisturbancePreview preview(cfg.model, cfg.noise, cfg.dims);
  const PrimitiveSampler sampler(cfg.noise, cfg.dims);
  EpisodeOptions opts;
  opts.plant_inflation = cfg.run.plant_inflation;
  write_episode_csv_header(out, cfg.dims);
  for (long i = 0; i < count; ++i) {
    const RngStreamSpec stream{cfg.run.seed, offset + static_cast<std::uint64_t>(i)};
    EpisodeTrace tr = simulate_primitives(*cfg.plant, cfg.model, controller, preview,
                                          cfg.noise, cfg.dims, sampler.draw(stream),
                                          {}, opts);
    tr.record.episode = stream.stream;
    write_episode_csv(out, tr.record, cfg.dims);
  }
  artifacts.push_back(path);
}

void print_cost(const CostReport& c) {
  std::printf("episodes      %ld\n", c.episodes);
  std::printf("J1 (plant)    %.10g +- %.3g\n", c.J1_mean, c.J1_stderr);
  std::printf("J2 (model)    %.10g +- %.3g\n", c.J2_mean, c.J2_stderr);
  std::printf("penalty       %.10g (mean-square %.10g)\n", c.penalty_mean,
              c.penalty_ms_mean);
}

int cmd_solve(const Flags& f) {
  RunManifest manifest;
  manifest.command = "solve";
  manifest.started_utc = utc_now();
  const ScenarioConfig cfg = load(f);
  const SeparatedStrategy strategy = solve_tracking_lq(cfg.model, cfg.cost, cfg.dims);
  const std::string path = pick(f.strategy, cfg.outputs.strategy.empty()
                                                ? "strategy.txt"
                                                : cfg.outputs.strategy);
  {
    std::ofstream out = open_out(path);
    write_strategy(out, strategy);
  }
  manifest.artifacts.push_back(path);
  manifest.config_digest = cfg.digest;
  manifest.seed = cfg.run.seed;
  manifest.finished_utc = utc_now();
  manifest.write(path + ".manifest.json");
  std::printf("wrote %s (%d steps, beta=%g)\n", path.c_str(), cfg.dims.T, cfg.cost.beta);
  return kExitOk;
}

int cmd_learn(const Flags& f) {
  RunManifest manifest;
  manifest.command = "learn";
  manifest.started_utc = utc_now();
  const ScenarioConfig cfg = load(f);
  const TimeVaryingLinearSystem& plant = require_plant(cfg, "learn");
  LearnOptions lo;
  lo.n_outer = cfg.run.outer;
  lo.n_inner = cfg.run.episodes;
  lo.seed = cfg.run.seed;
  lo.threads = cfg.run.threads;
  lo.probe_std = cfg.run.probe_std;
  lo.plant_inflation = cfg.run.plant_inflation;
  lo.tolerance = cfg.run.tolerance;
  lo.rebind = cfg.run.rebind;
  lo.conditioning = cfg.run.conditioning;
  lo.bin_width = cfg.run.bin_width;
  const SeparatedStrategy matching = matching_strategy(cfg.model, cfg.dims);
  const MonteCarloReport report =
      closed_loop_learn(plant, cfg.model, matching, cfg.noise, cfg.cost, cfg.dims, lo);
  print_cost(report.cost);
  std::fprintf(stderr, "wall-clock %.2f s\n", report.wall_seconds);

  const std::string report_path = pick(f.json, cfg.outputs.report);
  if (!report_path.empty()) {
    std::ofstream out = open_out(report_path);
    write_report_json(out, report);
    manifest.artifacts.push_back(report_path);
  }
  const std::string trace_path = pick(f.trace, cfg.outputs.trace);
  if (!trace_path.empty()) {
    std::ofstream out = open_out(trace_path);
    out << "iteration,t";
    for (int i = 0; i < cfg.dims.n; ++i) out << ",xhat" << i;
    for (int i = 0; i < cfg.dims.n; ++i) out << ",stderr" << i;
    out << '\n';
    for (std::size_t k = 0; k < report.xhat_trace.size(); ++k) {
      for (std::size_t t = 0; t < report.xhat_trace[k].size(); ++t) {
        out << k << ',' << t;
        for (int i = 0; i < cfg.dims.n; ++i) out << ',' << fmt(report.xhat_trace[k][t](i));
        for (int i = 0; i < cfg.dims.n; ++i) out << ',' << fmt(report.xhat_stderr[k][t](i));
        out << '\n';
      }
    }
    manifest.artifacts.push_back(trace_path);
  }
  const SeparatedController controller = bind_predictor(
      matching, cfg.model, *report.learned_predictor, cfg.cost, cfg.dims);
  dump_episodes(pick(f.dump_episodes, cfg.outputs.episodes), cfg, controller,
                static_cast<std::uint64_t>(lo.n_outer) * lo.n_inner, report.episodes,
                manifest.artifacts);
  manifest.config_digest = cfg.digest;
  manifest.seed = cfg.run.seed;
  manifest.finished_utc = utc_now();
  if (!report_path.empty()) manifest.write(report_path + ".manifest.json");

  if (!report.converged) {
    std::fprintf(stderr,
                 "warning: xhat estimates still moving after %d iterations "
                 "(last change %.3g)\n",
                 lo.n_outer, report.final_change);
    if (f.strict) return kExitConvergence;
  }
  return kExitOk;
}

int cmd_simulate(const Flags& f) {
  RunManifest manifest;
  manifest.command = "simulate";
  manifest.started_utc = utc_now();
  const ScenarioConfig cfg = load(f);
  const TimeVaryingLinearSystem& plant = require_plant(cfg, "simulate");
  SeparatedController controller;
  if (!f.strategy.empty()) {
    std::ifstream in(f.strategy);
    if (!in) fail(ErrorKind::kConfig, "cannot open strategy '" + f.strategy + "'");
    SeparatedStrategy s = read_strategy(in);
    if (!(s.dims == cfg.dims)) {
      fail(ErrorKind::kConfig, "strategy dims do not match the config");
    }
    if (!s.bound()) {
      s = bind_parameters(s, model_predicted_means(cfg.model, cfg.noise, cfg.dims));
    }
    controller = SeparatedController::from_strategy(s);
  } else {
    controller = bind_predictor(matching_strategy(cfg.model, cfg.dims), cfg.model,
                                PlantPredictor::from_system(plant), cfg.cost, cfg.dims);
  }
  MonteCarloOptions mc;
  mc.episodes = cfg.run.episodes;
  mc.seed = cfg.run.seed;
  mc.threads = cfg.run.threads;
  mc.episode.plant_inflation = cfg.run.plant_inflation;
  const MonteCarloReport report =
      run_monte_carlo(plant, cfg.model, controller, cfg.noise, cfg.cost, cfg.dims, mc);
  print_cost(report.cost);
  std::fprintf(stderr, "wall-clock %.2f s\n", report.wall_seconds);
  const std::string report_path = pick(f.json, cfg.outputs.report);
  if (!report_path.empty()) {
    std::ofstream out = open_out(report_path);
    write_report_json(out, report);
    manifest.artifacts.push_back(report_path);
  }
  dump_episodes(pick(f.dump_episodes, cfg.outputs.episodes), cfg, controller, 0,
                cfg.run.episodes, manifest.artifacts);
  const std::string trace_path = pick(f.trace, cfg.outputs.trace);
  if (!trace_path.empty()) {
    std::ofstream out = open_out(trace_path);
    write_belief_csv_header(out, cfg.dims);
    EpisodeOptions opts;
    opts.plant_inflation = cfg.run.plant_inflation;
    for (long i = 0; i < cfg.run.episodes; ++i) {
      const RngStreamSpec stream{cfg.run.seed, static_cast<std::uint64_t>(i)};
      const EpisodeTrace tr =
          run_episode(plant, cfg.model, controller, cfg.noise, cfg.dims, stream, opts);
      write_belief_csv(out, stream.stream, tr.info);
    }
    manifest.artifacts.push_back(trace_path);
  }
  manifest.config_digest = cfg.digest;
  manifest.seed = cfg.run.seed;
  manifest.finished_utc = utc_now();
  if (!report_path.empty()) manifest.write(report_path + ".manifest.json");
  return kExitOk;
}

int cmd_reproduce(const Flags& f) {
  ExampleOptions opts;
  if (f.cov_sign == "+") opts.signs = {0.5};
  if (f.cov_sign == "-") opts.signs = {-0.5};
  if (f.seed) opts.seed = *f.seed;
  if (f.threads) opts.threads = *f.threads;
  if (f.episodes) {
    opts.learn_episodes = *f.episodes;
    opts.eval_episodes = *f.episodes;
  }
  if (f.outer) opts.learn_outer = *f.outer;
  const ExampleReport report = reproduce_example(opts);
  write_example_text(std::cout, report);
  if (!f.json.empty()) {
    std::ofstream out = open_out(f.json);
    write_example_json(out, report);
  }
  if (!report.pass()) {
    std::fprintf(stderr, "failed assertions:\n");
    for (const auto& s : report.signs) {
      for (const auto& c : s.checks) {
        if (!c.pass) std::fprintf(stderr, "  rho=%g: %s\n", s.rho, c.name.c_str());
      }
    }
    return kExitReproduction;
  }
  return kExitOk;
}

int cmd_compare(const Flags& f) {
  const ScenarioConfig cfg = load(f);
  const TimeVaryingLinearSystem& plant = require_plant(cfg, "compare");
  const Dims& d = cfg.dims;
  MonteCarloOptions mc;
  mc.episodes = cfg.run.episodes;
  mc.seed = cfg.run.seed;
  mc.threads = cfg.run.threads;
  mc.episode.plant_inflation = cfg.run.plant_inflation;
  // Common random numbers: every strategy sees the same episodes.
  mc.stream_offset = static_cast<std::uint64_t>(cfg.run.outer) * cfg.run.episodes;

  const SeparatedStrategy matching = matching_strategy(cfg.model, d);
  struct Row {
    std::string name;
    CostReport cost;
  };
  std::vector<Row> rows;
  const SeparatedController known = bind_predictor(
      matching, cfg.model, PlantPredictor::from_system(plant), cfg.cost, d);
  rows.push_back({"known-plant",
                  run_monte_carlo(plant, cfg.model, known, cfg.noise, cfg.cost, d, mc).cost});

  QuadraticCostSpec lqg_cost = cfg.cost;
  lqg_cost.beta = 0.0;
  const SeparatedStrategy naive = bind_parameters(
      solve_tracking_lq(cfg.model, lqg_cost, d),
      model_predicted_means(cfg.model, cfg.noise, d));
  const SeparatedController naive_ctrl =
      SeparatedController::from_strategy(naive, StateSource::kPlantBelief);
  rows.push_back(
      {"naive-model", run_monte_carlo(plant, cfg.model, naive_ctrl, cfg.noise, cfg.cost, d, mc)
                          .cost});

  LearnOptions lo;
  lo.n_outer = cfg.run.outer;
  lo.n_inner = cfg.run.episodes;
  lo.seed = cfg.run.seed;
  lo.threads = cfg.run.threads;
  lo.probe_std = cfg.run.probe_std;
  lo.plant_inflation = cfg.run.plant_inflation;
  lo.tolerance = cfg.run.tolerance;
  lo.rebind = cfg.run.rebind;
  const MonteCarloReport learned =
      closed_loop_learn(plant, cfg.model, matching, cfg.noise, cfg.cost, d, lo);
  rows.push_back({"separated-learned", learned.cost});

  std::printf("%-20s %16s %12s\n", "strategy", "J1_mean", "J1_stderr");
  for (const auto& r : rows) {
    std::printf("%-20s %16.10g %12.4g\n", r.name.c_str(), r.cost.J1_mean, r.cost.J1_stderr);
  }
  std::ostringstream csv;
  csv << "strategy,J1_mean,J1_stderr,episodes\n";
  for (const auto& r : rows) {
    csv << r.name << ',' << fmt(r.cost.J1_mean) << ',' << fmt(r.cost.J1_stderr) << ','
        << r.cost.episodes << '\n';
  }
  if (!f.csv.empty()) {
    std::ofstream out = open_out(f.csv);
    out << csv.str();
  } else {
    std::cout << '\n' << csv.str();
  }
  if (!f.json.empty()) {
    nlohmann::json j;
    for (const auto& r : rows) {
      j[r.name + ".J1_mean"] = r.cost.J1_mean;
      j[r.name + ".J1_stderr"] = r.cost.J1_stderr;
    }
    j["episodes"] = cfg.run.episodes;
    std::ofstream out = open_out(f.json);
    out << j.dump(2) << '\n';
  }
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kDimensionMismatch:
    case ErrorKind::kHorizonMismatch:
    case ErrorKind::kLengthMismatch:
      return kExitConfig;
    case ErrorKind::kNonConvergence:
      return kExitConvergence;
    default:
      return kExitSolver;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Separated learning and control for linear systems", "sepctl"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&f](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", f.config, "Scenario document (JSON)");
    if (needs_config) c->required();
    sub->add_option("--seed", f.seed, "Master RNG seed");
    sub->add_option("--episodes", f.episodes, "Episodes per batch");
    sub->add_option("--outer", f.outer, "Outer learning iterations");
    sub->add_option("--beta", f.beta, "Discrepancy weight (overrides config)");
    sub->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
    sub->add_option("--json", f.json, "Machine-readable report path");
    sub->add_option("--dump-episodes", f.dump_episodes, "Episode CSV path");
    sub->add_option("--trace", f.trace, "Trace CSV path");
    sub->add_option("--strategy", f.strategy, "Strategy file path");
    sub->add_flag("--strict", f.strict, "Fail on non-convergence");
  };
  auto* solve = app.add_subcommand("solve", "Solve the parameterized separated strategy");
  common(solve, true);
  auto* learn = app.add_subcommand("learn", "Closed-loop learn-and-bind");
  common(learn, true);
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation");
  common(simulate, true);
  auto* reproduce =
      app.add_subcommand("reproduce-example", "Reproduce the scalar mismatch example");
  common(reproduce, false);
  reproduce->add_option("--cov-sign", f.cov_sign, "Sign of cov(X0,W0): + or -")
      ->check(CLI::IsMember({"+", "-"}));
  auto* compare = app.add_subcommand("compare", "Compare known-plant, naive and learned");
  common(compare, true);
  compare->add_option("--csv", f.csv, "Comparison CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*solve) return cmd_solve(f);
    if (*learn) return cmd_learn(f);
    if (*simulate) return cmd_simulate(f);
    if (*reproduce) return cmd_reproduce(f);
    if (*compare) return cmd_compare(f);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolver;
  }
  return kExitOk;
}
