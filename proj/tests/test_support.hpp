#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sepctl/estimator.hpp"
#include "sepctl/lti.hpp"
#include "sepctl/oracle.hpp"

namespace sepctl::testing {

inline MatrixXd s(double v) { return MatrixXd::Constant(1, 1, v); }
inline VectorXd v1(double v) { return VectorXd::Constant(1, v); }

inline MatrixXd random_matrix(std::mt19937_64& gen, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = nd(gen);
  return M;
}

// Symmetric positive definite with eigenvalues bounded below by `floor`.
inline MatrixXd random_spd(std::mt19937_64& gen, int n, double floor = 0.2) {
  const MatrixXd M = random_matrix(gen, n, n, 0.7);
  return M * M.transpose() + floor * MatrixXd::Identity(n, n);
}

struct RandomInstance {
  Dims dims;
  TimeVaryingLinearSystem sys;
  NoiseSpec noise;
  QuadraticCostSpec cost;
};

// Time-varying system with independent primitive blocks and s = p, E_t
// invertible (nondegenerate sensor noise).
inline RandomInstance random_instance(std::uint64_t seed, int max_n = 4, int max_p = 3,
                                      int max_T = 6) {
  std::mt19937_64 gen(seed);
  auto pick = [&gen](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(gen);
  };
  RandomInstance inst;
  Dims& d = inst.dims;
  d.n = pick(1, max_n);
  d.m = pick(1, 2);
  d.p = pick(1, max_p);
  d.r = pick(1, 2);
  d.s = d.p;
  d.T = pick(1, max_T);
  for (int t = 0; t < d.T; ++t) {
    inst.sys.A.push_back(random_matrix(gen, d.n, d.n, 0.6));
    inst.sys.B.push_back(random_matrix(gen, d.n, d.m));
    inst.sys.D.push_back(random_matrix(gen, d.n, d.r, 0.5));
  }
  for (int t = 0; t <= d.T; ++t) {
    inst.sys.C.push_back(random_matrix(gen, d.p, d.n));
    inst.sys.E.push_back(MatrixXd::Identity(d.p, d.p) + random_matrix(gen, d.p, d.p, 0.2));
  }
  const NoiseLayout layout(d);
  inst.noise.mean = random_matrix(gen, layout.size(), 1, 0.3);
  inst.noise.cov = MatrixXd::Zero(layout.size(), layout.size());
  inst.noise.cov.block(0, 0, d.n, d.n) = random_spd(gen, d.n);
  for (int t = 0; t < d.T; ++t) {
    inst.noise.cov.block(layout.w_offset(t), layout.w_offset(t), d.r, d.r) = random_spd(gen, d.r);
  }
  for (int t = 0; t <= d.T; ++t) {
    inst.noise.cov.block(layout.z_offset(t), layout.z_offset(t), d.s, d.s) = random_spd(gen, d.s);
  }
  for (int t = 0; t < d.T; ++t) {
    inst.cost.Qx.push_back(random_spd(gen, d.n, 0.1));
    inst.cost.Ru.push_back(random_spd(gen, d.m, 0.5));
  }
  inst.cost.QT = random_spd(gen, d.n, 0.1);
  inst.cost.beta = 0.0;
  return inst;
}

// Scalar constant system x' = a x + b u + dw w, y = x.
inline TimeVaryingLinearSystem scalar_system(int T, double a, double b, double dw) {
  Dims d{1, 1, 1, 1, 1, T};
  return TimeVaryingLinearSystem::constant(d, s(a), s(b), s(dw), s(1.0), s(0.0));
}

// State x_t = Phi_t xi + c_t as a function of the primitive vector under a
// fixed open-loop input sequence.
struct AffineStateMaps {
  std::vector<MatrixXd> Phi;
  std::vector<VectorXd> c;
};

inline AffineStateMaps affine_state_maps(const TimeVaryingLinearSystem& sys, const Dims& d,
                                         const std::vector<VectorXd>& u) {
  const NoiseLayout layout(d);
  AffineStateMaps maps;
  maps.Phi.push_back(layout.select_x0());
  maps.c.push_back(VectorXd::Zero(d.n));
  for (int t = 0; t < d.T; ++t) {
    maps.Phi.push_back(sys.A[t] * maps.Phi[t] + sys.D[t] * layout.select_w(t));
    maps.c.push_back(sys.A[t] * maps.c[t] + sys.B[t] * u[t]);
  }
  return maps;
}

// Observation rows for y_0..y_t stacked, with the input contribution removed
// from `y_stack` by the caller via the returned offset.
struct StackedObservation {
  MatrixXd O;
  VectorXd offset;
};

inline StackedObservation stacked_observation(const TimeVaryingLinearSystem& sys, const Dims& d,
                                              const AffineStateMaps& maps, int t) {
  const NoiseLayout layout(d);
  StackedObservation so;
  so.O = MatrixXd::Zero((t + 1) * d.p, layout.size());
  so.offset = VectorXd::Zero((t + 1) * d.p);
  for (int k = 0; k <= t; ++k) {
    so.O.middleRows(k * d.p, d.p) = sys.C[k] * maps.Phi[k] + sys.E[k] * layout.select_z(k);
    so.offset.segment(k * d.p, d.p) = sys.C[k] * maps.c[k];
  }
  return so;
}

// Max |filter - batch| over belief means and covariance entries, t = 0..T,
// for one sampled realization under a random open-loop input sequence.
inline double filter_batch_deviation(const RandomInstance& inst, std::uint64_t seed) {
  const Dims& d = inst.dims;
  std::mt19937_64 gen(seed);
  std::vector<VectorXd> u;
  for (int t = 0; t < d.T; ++t) u.push_back(random_matrix(gen, d.m, 1));
  const NoiseLayout layout(d);
  const VectorXd xi =
      inst.noise.mean + sampling_factor(inst.noise.cov) * random_matrix(gen, layout.size(), 1);
  const AffineStateMaps maps = affine_state_maps(inst.sys, d, u);
  std::vector<VectorXd> y;
  for (int t = 0; t <= d.T; ++t) {
    const VectorXd x = maps.Phi[t] * xi + maps.c[t];
    y.push_back(observe(inst.sys, t, x, layout.select_z(t) * xi));
  }
  double dev = 0.0;
  GaussianBelief b = initial_belief(inst.sys, inst.noise, d, y[0]);
  for (int t = 0; t <= d.T; ++t) {
    if (t > 0) b = kalman_step(inst.sys, step_noise(inst.noise, d, t - 1), b, t - 1, u[t - 1], y[t]);
    const StackedObservation so = stacked_observation(inst.sys, d, maps, t);
    VectorXd ys((t + 1) * d.p);
    for (int k = 0; k <= t; ++k) ys.segment(k * d.p, d.p) = y[k];
    const GaussianBelief batch =
        batch_gaussian_conditioning(inst.noise, so.O, ys - so.offset, maps.Phi[t]);
    dev = std::max(dev, (b.mean - (batch.mean + maps.c[t])).cwiseAbs().maxCoeff());
    dev = std::max(dev, (b.cov - batch.cov).cwiseAbs().maxCoeff());
  }
  return dev;
}

}  // namespace sepctl::testing
