#pragma once

// Scenario documents (JSON, comments allowed) and run manifests.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sepctl/estimator.hpp"
#include "sepctl/lti.hpp"
#include "sepctl/simharness.hpp"

namespace sepctl {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunControls {
  long episodes = 10000;
  int outer = 3;
  std::uint64_t seed = 1;
  int threads = 0;
  double tolerance = 1e-2;
  double probe_std = 1.0;
  double plant_inflation = 1.0;
  RebindMode rebind = RebindMode::kBatched;
  ConditioningMode conditioning = ConditioningMode::kAffine;
  double bin_width = 1.0;
};

struct OutputPaths {
  std::string strategy;
  std::string report;
  std::string trace;
  std::string episodes;
};

struct ScenarioConfig {
  Dims dims;
  TimeVaryingLinearSystem model;
  std::optional<TimeVaryingLinearSystem> plant;  ///< absent: plant hidden
  NoiseSpec noise;
  QuadraticCostSpec cost;
  RunControls run;
  OutputPaths outputs;
  std::string digest;  ///< of the canonical document
};

/// Parses and validates a scenario. Errors are kConfig with the line (syntax)
/// or the dotted field path (content) in the message.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::string& path);

/// FNV-1a 64 over the canonical form: comments and whitespace dropped, keys
/// sorted, integral numbers normalized to floating point.
std::string config_digest(std::string_view text);

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::string tool_version{kToolVersion};
  std::uint64_t seed = 0;
  std::string started_utc;
  std::string finished_utc;
  std::vector<std::string> artifacts;

  void write(const std::string& path) const;
};

/// Current UTC time, ISO 8601.
std::string utc_now();

}  // namespace sepctl
