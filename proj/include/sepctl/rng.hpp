#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace sepctl {

/// Identifies one reproducible random stream. Draws depend only on
/// (master_seed, stream, channel), never on thread scheduling.
struct RngStreamSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream = 0;

  static constexpr std::string_view kAlgorithm = "splitmix64-boxmuller-v1";
};

/// Keyed SplitMix64 sequence with Box-Muller normals.
class StreamRng {
 public:
  explicit StreamRng(const RngStreamSpec& spec, std::uint64_t channel = 0);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  Eigen::VectorXd normals(int count);

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sepctl
