#pragma once

#include <Eigen/Dense>

namespace sepctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Gaussian sufficient statistics (mean, covariance).
struct GaussianBelief {
  VectorXd mean;
  MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Symmetrizes and clips eigenvalues below zero. Throws kNumericalFailure if
/// the most negative eigenvalue is below -tol (relative to max(1, |cov|)).
MatrixXd clip_psd(const MatrixXd& cov, double tol = 1e-9);

/// Pseudo-inverse of a symmetric PSD matrix; eigenvalues at or below
/// cutoff * max(1, lambda_max) are treated as zero.
MatrixXd pinv_psd(const MatrixXd& S, double cutoff = 1e-12);

/// F with F F^T = cov, from a clipped eigendecomposition.
MatrixXd sampling_factor(const MatrixXd& cov);

/// Exact conditioning of xi ~ N(mean, cov) on O xi = y. Rank-deficient O cov
/// O^T is handled by pseudo-inverse; an observed value with a component
/// outside the support raises kSingularObservationCov.
GaussianBelief condition_on_linear(const VectorXd& mean, const MatrixXd& cov,
                                   const MatrixXd& O, const VectorXd& y,
                                   double cutoff = 1e-12);

/// Precomputed form of condition_on_linear for repeated use with the same
/// operator: E[xi | O xi = y] = mean + gain * (y - O mean).
struct LinearConditioner {
  VectorXd prior_mean;
  MatrixXd O;
  MatrixXd gain;
  MatrixXd posterior_cov;

  LinearConditioner() = default;
  LinearConditioner(const VectorXd& mean, const MatrixXd& cov,
                    const MatrixXd& O, double cutoff = 1e-12);

  VectorXd posterior_mean(const VectorXd& y) const {
    return prior_mean + gain * (y - O * prior_mean);
  }
};

}  // namespace sepctl
