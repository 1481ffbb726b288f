#pragma once

// E-step quantities for a single modality: Gaussian posteriors over sparse
// codes, the marginal log-likelihood of the data and its derivative with
// respect to the noise scale.
//
// All routines take the noise standard deviation sigma (not the variance) and
// per-sample hyperparameter vectors gamma, i.e. prior variances of the codes.

#include "msbdl/model.hpp"

#include <vector>

namespace msbdl {

struct Posterior {
  Vector mean;
  Matrix covariance;
};

struct ApproxPosterior {
  Vector mean;
  Vector covariance_diagonal;
  Index iterations = 0;
  double residual = 0.0;  // final ||rhs - A mu|| / ||rhs||
};

enum class PosteriorMode { exact, approximate };

/// Posterior statistics of one modality over a set of samples.
struct PosteriorStats {
  Matrix means;                     // M x L
  Matrix variances;                 // M x L, diagonal of every covariance
  std::vector<Matrix> covariances;  // exact mode only
  PosteriorMode mode = PosteriorMode::exact;

  Index samples() const { return means.cols(); }
  static PosteriorStats from(const std::vector<Posterior>& posteriors);
  static PosteriorStats from(const std::vector<ApproxPosterior>& posteriors);
};

/// Sigma_x = (sigma^-2 D^T D + Gamma^-1)^-1, mu = sigma^-2 Sigma_x D^T y,
/// computed in the M-dimensional coefficient space.
Posterior posterior_exact(const Matrix& d, const Vector& y, const Vector& gamma, double sigma);

/// Same posterior through the N x N system
/// Sigma_x = Gamma - Gamma D^T (sigma^2 I + D Gamma D^T)^-1 D Gamma.
Posterior posterior_woodbury(const Matrix& d, const Vector& y, const Vector& gamma, double sigma);

/// Mean from Jacobi-preconditioned conjugate gradients, covariance replaced by
/// the inverse of the diagonal of the precision matrix. Throws NumericalError
/// (carrying the final residual) when cg_max_iter is exhausted; cg_max_iter
/// <= 0 means 10 * M.
ApproxPosterior posterior_approx(const Matrix& d, const Vector& y, const Vector& gamma, double sigma,
                                 double cg_tol = 1e-8, Index cg_max_iter = 0);

/// Posterior over the lifted coefficients x_hat_j of the hierarchical prior.
/// modality is 1 (gamma_hat = gamma_1, length M_2) or 2 (gamma_hat =
/// [gamma_1; gamma_2], length 2 M_2). The lifted design is D S_j^T, so
/// mu = sigma^-2 Sigma S_j D^T y.
Posterior posterior_hier(const Matrix& d, const SelectorMatrices& selectors, int modality, const Vector& y,
                         const Vector& gamma_hat, double sigma);

/// Task-driven posterior with label likelihood h ~ N(W x, beta^2 I).
Posterior posterior_td(const Matrix& d, const Matrix& w, const Vector& y, const Vector& h, const Vector& gamma,
                       double sigma, double beta);

/// sum_i log N(y_i; 0, sigma^2 I + D Gamma_i D^T); gammas holds one column
/// per sample.
double log_marginal(const Matrix& d, const Matrix& y, const Matrix& gammas, double sigma);

/// Hierarchical likelihood with covariance sigma^2 I + D S_j^T Gamma_j S_j D^T.
double log_marginal_hier(const Matrix& d, const SelectorMatrices& selectors, int modality, const Matrix& y,
                         const Matrix& gamma_hats, double sigma);

/// d/dsigma log p(Y | theta, sigma) from posterior statistics computed at the
/// same (D, gamma, sigma), using
///   Sigma_y^-1 y = (y - D mu) / sigma^2,
///   tr Sigma_y^-1 = (N - sigma^-2 tr(D^T D Sigma_x)) / sigma^2.
/// Exact posterior statistics give the exact derivative.
double sigma_loglik_derivative(const Matrix& d, const Matrix& y, const Matrix& gammas, double sigma,
                               const PosteriorStats& stats);

/// Lifted design matrix D S_j^T of the hierarchical model.
Matrix lifted_design(const Matrix& d, const SelectorMatrices& selectors, int modality);

}  // namespace msbdl
