#include "sepctl/rng.hpp"

#include <cmath>
#include <numbers>

namespace sepctl {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

StreamRng::StreamRng(const RngStreamSpec& spec, std::uint64_t channel) {
  std::uint64_t key = mix(spec.master_seed + kGolden);
  key = mix(key ^ (spec.stream + 0x632BE59BD9B4E019ULL));
  state_ = mix(key ^ (channel * kGolden + 0x2545F4914F6CDD1DULL));
}

std::uint64_t StreamRng::next_u64() {
  state_ += kGolden;
  return mix(state_);
}

double StreamRng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double StreamRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double radius = std::sqrt(-2.0 * std::log(uniform()));
  const double angle = 2.0 * std::numbers::pi * uniform();
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Eigen::VectorXd StreamRng::normals(int count) {
  Eigen::VectorXd out(count);
  for (int i = 0; i < count; ++i) out(i) = normal();
  return out;
}

}  // namespace sepctl
