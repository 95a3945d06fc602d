#pragma once

// Independent ground truth: exact Gaussian conditioning on the primitive
// vector, the globally optimal affine strategy over a declared information
// basis, and the end-to-end reproduction of the scalar mismatch example.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sepctl/gaussian.hpp"
#include "sepctl/lti.hpp"
#include "sepctl/simharness.hpp"
#include "sepctl/solver.hpp"

namespace sepctl {

/// Belief over `functional * xi` given `observe * xi = observed`, by the
/// Schur complement of the joint Gaussian. Raises kSingularObservationCov when
/// the observation lies outside the support beyond `ridge`.
GaussianBelief batch_gaussian_conditioning(const NoiseSpec& noise,
                                           const MatrixXd& observe,
                                           const VectorXd& observed,
                                           const MatrixXd& functional,
                                           double ridge = 1e-12);

/// Per step t, u_t = Theta_t (S_t xi) + c_t with selectors S_t over the
/// primitive vector.
struct InformationBasis {
  std::vector<MatrixXd> selectors;
  bool constant = true;
};

struct AffineStrategyCoefficients {
  std::vector<MatrixXd> gain;            ///< Theta_t, m x rows(S_t)
  std::vector<VectorXd> offset;          ///< c_t
  std::vector<MatrixXd> primitive_gain;  ///< Theta_t S_t, m x N
  double cost = 0.0;                     ///< optimal expected cost
};

/// Minimizes the expected plant cost of `sys` over affine strategies in
/// the basis by solving the normal equations in closed form. Raises
/// kSingularNormalEquations if the minimizer is not unique.
AffineStrategyCoefficients exact_linear_strategy(const TimeVaryingLinearSystem& sys,
                                                 const NoiseSpec& noise,
                                                 const QuadraticCostSpec& cost,
                                                 const Dims& dims,
                                                 const InformationBasis& basis);

/// Expected plant cost of an affine strategy given in primitive
/// coordinates, by direct second-moment propagation.
double affine_strategy_cost(const TimeVaryingLinearSystem& sys,
                            const NoiseSpec& noise, const QuadraticCostSpec& cost,
                            const Dims& dims,
                            const std::vector<MatrixXd>& primitive_gain,
                            const std::vector<VectorXd>& offset);

/// Closed-loop quantities as affine functions of the primitive vector,
/// q = gain * xi + offset, recovered by unit-primitive propagation.
struct ClosedLoopCoefficients {
  std::vector<MatrixXd> u_gain, u_model_gain, x_gain, xhat_gain;
  std::vector<VectorXd> u_offset, u_model_offset, x_offset, xhat_offset;
};

ClosedLoopCoefficients extract_coefficients(const TimeVaryingLinearSystem& plant_sys,
                                            const TimeVaryingLinearSystem& model_sys,
                                            const SeparatedController& controller,
                                            const NoiseSpec& noise,
                                            const Dims& dims);

/// The scalar model/plant pair with X0-W0 covariance `rho`.
struct ExampleInstance {
  Dims dims;
  TimeVaryingLinearSystem model;
  TimeVaryingLinearSystem plant;
  NoiseSpec noise;
  QuadraticCostSpec cost;
};

ExampleInstance scalar_mismatch_instance(double rho);

/// Information basis u_0 <- {x_0}, u_1 <- {x_0, w_0}.
InformationBasis scalar_mismatch_basis(const Dims& dims);

struct PipelineResult {
  std::string name;
  /// Coefficients of u_0 on x_0 and of u_1 on (x_0, w_0).
  std::vector<double> coef;
  std::vector<double> coef_stderr;  ///< learned pipeline only
  double J1 = 0.0;
  double J1_stderr = 0.0;
};

struct ExampleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SignReport {
  double rho = 0.0;
  bool matches_reference = false;  ///< exact solution is the reference law
  std::vector<PipelineResult> pipelines;
  std::vector<ExampleCheck> checks;
  double identity_max_abs = 0.0;  ///< max |x_2 - xhat_2| over episodes
  std::vector<double> discrepancy_mean, discrepancy_std;
  bool pass() const;
};

struct ExampleOptions {
  std::vector<double> signs{-0.5, 0.5};
  std::uint64_t seed = 1;
  int threads = 0;
  long identity_episodes = 10000;
  long learn_episodes = 100000;  ///< per outer iteration
  int learn_outer = 2;
  long eval_episodes = 100000;
};

struct ExampleReport {
  std::vector<SignReport> signs;
  bool pass() const;
};

ExampleReport reproduce_example(const ExampleOptions& options = {});

void write_example_text(std::ostream& os, const ExampleReport& report);
void write_example_json(std::ostream& os, const ExampleReport& report);

}  // namespace sepctl
