#pragma once

// Per-sample E-step shared by every prior, variant and the supervised model.
//
// Works in the collapsed form: with prior variances c = S^T Gamma S (a
// diagonal over dictionary columns) the marginal covariance is
// Sigma_y = sigma^2 I + D diag(c) D^T, and every lifted posterior moment
// follows from E = L^-1 D and w = L^-1 y where L L^T = Sigma_y. An optional
// label block h ~ N(W x, beta^2 I) is appended through a block Cholesky so
// the data part is untouched when W = 0.

#include "msbdl/layout.hpp"
#include "msbdl/posterior.hpp"

namespace msbdl::detail {

struct EngineOptions {
  PosteriorMode mode = PosteriorMode::exact;
  double cg_tol = 1e-8;
  Index cg_max_iter = 0;
  bool covariance = true;  // keep what the dictionary update needs
  bool derivative = true;
};

struct LabelTerm {
  const Matrix* w = nullptr;  // C x M
  double beta = 1.0;
};

struct SampleResult {
  Vector lifted_mean;
  Vector lifted_var;
  Vector mean;  // collapsed mean S^T mu_hat, length M
  // Collapsed covariance S^T Sigma_hat S. Exact mode keeps it factored as
  // diag(prior_var) - factor^T factor with factor = L^-1 [D; W] diag(prior_var);
  // approximate mode keeps only its diagonal in second_diag.
  Vector prior_var;
  Matrix factor;
  Vector second_diag;
  double loglik = 0.0;        // log p(y | theta, sigma)
  double dloglik = 0.0;       // d/dsigma of loglik
  double label_loglik = 0.0;  // log p(h | y, theta, W, beta)
};

SampleResult infer_sample(const Matrix& d, const ModalityLayout& layout, const Eigen::Ref<const Vector>& gamma,
                          double sigma, const Eigen::Ref<const Vector>& y, const LabelTerm& label,
                          const Eigen::Ref<const Vector>& h, const EngineOptions& options);

/// Dense collapsed covariance of one result (tests and small problems).
Matrix collapsed_covariance(const SampleResult& r);

inline SampleResult infer_sample(const Matrix& d, const ModalityLayout& layout, const Eigen::Ref<const Vector>& gamma,
                                 double sigma, const Eigen::Ref<const Vector>& y, const EngineOptions& options) {
  return infer_sample(d, layout, gamma, sigma, y, LabelTerm{}, Vector(), options);
}

}  // namespace msbdl::detail
