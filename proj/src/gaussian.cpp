#include "sepctl/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sepctl/errors.hpp"

namespace sepctl {

MatrixXd clip_psd(const MatrixXd& cov, double tol) {
  if (cov.size() == 0) return cov;
  const MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  VectorXd lambda = es.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (lambda.minCoeff() < -tol * scale) {
    std::ostringstream os;
    os << "covariance has eigenvalue " << lambda.minCoeff();
    fail(ErrorKind::kNumericalFailure, os.str());
  }
  if (lambda.minCoeff() >= 0.0) return sym;
  lambda = lambda.cwiseMax(0.0);
  MatrixXd out = es.eigenvectors() * lambda.asDiagonal() *
                 es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

MatrixXd pinv_psd(const MatrixXd& S, double cutoff) {
  if (S.size() == 0) return S;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
  const VectorXd& lambda = es.eigenvalues();
  const double threshold = cutoff * std::max(1.0, lambda.maxCoeff());
  VectorXd inv(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    inv(i) = lambda(i) > threshold ? 1.0 / lambda(i) : 0.0;
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd sampling_factor(const MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (cov + cov.transpose()));
  const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

LinearConditioner::LinearConditioner(const VectorXd& mean, const MatrixXd& cov,
                                     const MatrixXd& O_in, double cutoff)
    : prior_mean(mean), O(O_in) {
  const MatrixXd cross = cov * O.transpose();
  const MatrixXd S = O * cross;
  gain = cross * pinv_psd(S, cutoff);
  posterior_cov = clip_psd(cov - gain * cross.transpose(), 1e-8);
}

GaussianBelief condition_on_linear(const VectorXd& mean, const MatrixXd& cov,
                                   const MatrixXd& O, const VectorXd& y,
                                   double cutoff) {
  if (O.cols() != mean.size() || O.rows() != y.size()) {
    fail(ErrorKind::kDimensionMismatch, "conditioning operator shape");
  }
  const LinearConditioner cond(mean, cov, O, cutoff);
  GaussianBelief out{cond.posterior_mean(y), cond.posterior_cov};
  // The conditioned mean must reproduce the observation when y lies in the
  // support of O xi; otherwise the observation is impossible under the law.
  const VectorXd residual = O * out.mean - y;
  const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  if (residual.size() > 0 && residual.cwiseAbs().maxCoeff() > 1e-8 * scale) {
    std::ostringstream os;
    os << "observation outside the support (residual "
       << residual.cwiseAbs().maxCoeff() << ")";
    fail(ErrorKind::kSingularObservationCov, os.str());
  }
  return out;
}

}  // namespace sepctl
