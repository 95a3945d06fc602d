#pragma once

// Linear time-varying model/plant definitions, the joint Gaussian law of the
// primitive random variables, quadratic costs, and the exact (noise-free
// given realizations) step/observe/cost arithmetic.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sepctl/errors.hpp"

namespace sepctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Dims {
  int n = 0;  ///< state
  int m = 0;  ///< control
  int p = 0;  ///< observation
  int r = 0;  ///< disturbance
  int s = 0;  ///< sensor noise
  int T = 0;  ///< number of control steps

  void validate() const;
  bool operator==(const Dims&) const = default;
};

/// x_{t+1} = A_t x_t + B_t u_t + D_t w_t,  y_t = C_t x_t + E_t z_t.
/// A, B, D hold T matrices; C, E hold T + 1.
struct TimeVaryingLinearSystem {
  std::vector<MatrixXd> A;
  std::vector<MatrixXd> B;
  std::vector<MatrixXd> D;
  std::vector<MatrixXd> C;
  std::vector<MatrixXd> E;

  int horizon() const { return static_cast<int>(A.size()); }

  /// Same matrices at every step.
  static TimeVaryingLinearSystem constant(const Dims& dims, const MatrixXd& A,
                                          const MatrixXd& B, const MatrixXd& D,
                                          const MatrixXd& C, const MatrixXd& E);
};

/// Throws kHorizonMismatch / kDimensionMismatch; returns `sys` on success.
const TimeVaryingLinearSystem& validate_system(
    const TimeVaryingLinearSystem& sys, const Dims& dims);

/// Offsets of the primitive blocks inside the stacked vector
/// [X0 | W_0 .. W_{T-1} | Z_0 .. Z_T].
struct NoiseLayout {
  explicit NoiseLayout(const Dims& dims) : dims_(dims) {}

  int size() const { return dims_.n + dims_.T * dims_.r + (dims_.T + 1) * dims_.s; }
  int x0_offset() const { return 0; }
  int w_offset(int t) const { return dims_.n + t * dims_.r; }
  int z_offset(int t) const { return dims_.n + dims_.T * dims_.r + t * dims_.s; }

  /// Selection matrices picking a block out of the primitive vector.
  MatrixXd select_x0() const;
  MatrixXd select_w(int t) const;
  MatrixXd select_z(int t) const;

 private:
  Dims dims_;
};

/// Joint Gaussian over all primitives. Independence between X0, W and Z is
/// just a block-diagonal covariance.
struct NoiseSpec {
  VectorXd mean;
  MatrixXd cov;

  VectorXd x0_mean(const Dims& dims) const;
  MatrixXd x0_cov(const Dims& dims) const;
  VectorXd w_mean(const Dims& dims, int t) const;
  MatrixXd w_cov(const Dims& dims, int t) const;
  VectorXd z_mean(const Dims& dims, int t) const;
  MatrixXd z_cov(const Dims& dims, int t) const;

  /// Independent blocks with the given per-step moments.
  static NoiseSpec independent(const Dims& dims, const VectorXd& x0_mean,
                               const MatrixXd& x0_cov, const MatrixXd& w_cov,
                               const MatrixXd& z_cov);
};

void validate_noise(const NoiseSpec& noise, const Dims& dims);

struct QuadraticCostSpec {
  std::vector<MatrixXd> Qx;  ///< T state weights
  std::vector<MatrixXd> Ru;  ///< T control weights
  MatrixXd QT;               ///< terminal weight
  double beta = 1.0;         ///< model/plant discrepancy weight

  /// Multiplies every weight (including beta) by `lambda`.
  QuadraticCostSpec scaled(double lambda) const;
};

void validate_cost(const QuadraticCostSpec& cost, const Dims& dims);

/// One paired model/plant run under shared primitive draws.
struct EpisodeRecord {
  std::vector<VectorXd> x;        ///< model states x_0..x_T
  std::vector<VectorXd> xhat;     ///< plant states
  std::vector<VectorXd> y;        ///< model observations y_0..y_T
  std::vector<VectorXd> yhat;     ///< plant observations
  std::vector<VectorXd> u;        ///< applied (plant) controls u_0..u_{T-1}
  std::vector<VectorXd> u_model;  ///< input driving the model
  std::vector<VectorXd> w;        ///< w_0..w_{T-1}
  std::vector<VectorXd> z;        ///< z_0..z_T
  std::uint64_t seed = 0;
  std::uint64_t episode = 0;

  int horizon() const { return static_cast<int>(u.size()); }
};

VectorXd step_model(const TimeVaryingLinearSystem& sys, int t,
                    const VectorXd& x, const VectorXd& u, const VectorXd& w);
VectorXd step_plant(const TimeVaryingLinearSystem& plant, int t,
                    const VectorXd& xhat, const VectorXd& u,
                    const VectorXd& w);
VectorXd observe(const TimeVaryingLinearSystem& sys, int t,
                 const VectorXd& state, const VectorXd& z);

/// Realized cost of the plant trajectory: sum c_t(xhat_t, u_t) + c_T(xhat_T).
double problem1_cost(const EpisodeRecord& ep, const QuadraticCostSpec& cost);

/// Realized model cost sum c_t(x_t, u_t) + c_T(x_T), no discrepancy term.
double model_cost(const EpisodeRecord& ep, const QuadraticCostSpec& cost);

/// Realized sum beta * |x_{t+1} - xhat_{t+1}|^2.
double discrepancy_penalty(const EpisodeRecord& ep,
                           const QuadraticCostSpec& cost);

/// model_cost + discrepancy_penalty.
double problem2_cost(const EpisodeRecord& ep, const QuadraticCostSpec& cost);

}  // namespace sepctl
