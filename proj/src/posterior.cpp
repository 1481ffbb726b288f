#include "msbdl/posterior.hpp"

#include "factor.hpp"
#include "msbdl/error.hpp"

#include <cmath>
#include <numbers>

namespace msbdl {

namespace {

void check_inputs(const Matrix& d, const Vector& y, const Vector& gamma, double sigma) {
  if (y.size() != d.rows())
    throw InvalidArgument("observation has " + std::to_string(y.size()) + " entries, dictionary has " +
                          std::to_string(d.rows()) + " rows");
  if (gamma.size() != d.cols())
    throw InvalidArgument("gamma has " + std::to_string(gamma.size()) + " entries, dictionary has " +
                          std::to_string(d.cols()) + " columns");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be positive and finite");
  if (!d.allFinite() || !y.allFinite() || !gamma.allFinite()) throw InvalidArgument("non-finite posterior input");
  if ((gamma.array() < kGammaFloor).any()) throw InvalidArgument("gamma entries must be >= the hyperparameter floor");
}

}  // namespace

PosteriorStats PosteriorStats::from(const std::vector<Posterior>& posteriors) {
  PosteriorStats s;
  s.mode = PosteriorMode::exact;
  if (posteriors.empty()) return s;
  const Index m = posteriors.front().mean.size();
  const Index l = static_cast<Index>(posteriors.size());
  s.means.resize(m, l);
  s.variances.resize(m, l);
  s.covariances.reserve(posteriors.size());
  for (Index i = 0; i < l; ++i) {
    const auto& p = posteriors[static_cast<std::size_t>(i)];
    s.means.col(i) = p.mean;
    s.variances.col(i) = p.covariance.diagonal();
    s.covariances.push_back(p.covariance);
  }
  return s;
}

PosteriorStats PosteriorStats::from(const std::vector<ApproxPosterior>& posteriors) {
  PosteriorStats s;
  s.mode = PosteriorMode::approximate;
  if (posteriors.empty()) return s;
  const Index m = posteriors.front().mean.size();
  const Index l = static_cast<Index>(posteriors.size());
  s.means.resize(m, l);
  s.variances.resize(m, l);
  for (Index i = 0; i < l; ++i) {
    s.means.col(i) = posteriors[static_cast<std::size_t>(i)].mean;
    s.variances.col(i) = posteriors[static_cast<std::size_t>(i)].covariance_diagonal;
  }
  return s;
}

Posterior posterior_exact(const Matrix& d, const Vector& y, const Vector& gamma, double sigma) {
  check_inputs(d, y, gamma, sigma);
  const double inv_var = 1.0 / (sigma * sigma);
  Matrix precision = inv_var * d.transpose() * d;
  precision.diagonal() += gamma.cwiseInverse();
  const auto llt = detail::cholesky(std::move(precision), "posterior precision");
  Posterior p;
  p.covariance = llt.solve(Matrix::Identity(d.cols(), d.cols()));
  p.covariance = 0.5 * (p.covariance + p.covariance.transpose()).eval();
  p.mean = inv_var * (p.covariance * (d.transpose() * y));
  return p;
}

Posterior posterior_woodbury(const Matrix& d, const Vector& y, const Vector& gamma, double sigma) {
  check_inputs(d, y, gamma, sigma);
  Matrix dg = d * gamma.asDiagonal();
  Matrix sigma_y = dg * d.transpose();
  sigma_y.diagonal().array() += sigma * sigma;
  const auto llt = detail::cholesky(std::move(sigma_y), "marginal covariance");
  const Matrix e = llt.matrixL().solve(dg);
  const Vector w = llt.matrixL().solve(y);
  Posterior p;
  p.covariance = -(e.transpose() * e);
  p.covariance.diagonal() += gamma;
  p.mean = e.transpose() * w;
  return p;
}

ApproxPosterior posterior_approx(const Matrix& d, const Vector& y, const Vector& gamma, double sigma, double cg_tol,
                                 Index cg_max_iter) {
  check_inputs(d, y, gamma, sigma);
  if (!(cg_tol > 0.0)) throw InvalidArgument("cg_tol must be positive");
  const double inv_var = 1.0 / (sigma * sigma);
  const Vector inv_gamma = gamma.cwiseInverse();
  Vector diag = inv_var * d.colwise().squaredNorm().transpose() + inv_gamma;
  const Vector rhs = inv_var * (d.transpose() * y);
  const auto apply = [&](const Vector& v) -> Vector {
    return inv_var * (d.transpose() * (d * v)) + inv_gamma.cwiseProduct(v);
  };
  const auto solved = detail::jacobi_cg(apply, diag, rhs, cg_tol, cg_max_iter > 0 ? cg_max_iter : 10 * d.cols());
  ApproxPosterior p;
  p.mean = solved.x;
  p.iterations = solved.iterations;
  p.residual = solved.relative_residual;
  p.covariance_diagonal = diag.cwiseInverse();
  return p;
}

Matrix lifted_design(const Matrix& d, const SelectorMatrices& selectors, int modality) {
  if (modality == 1) {
    if (d.cols() != selectors.s1.cols()) throw InvalidArgument("dictionary 1 does not match the selectors");
    return d * selectors.s1.transpose();
  }
  if (modality == 2) {
    if (d.cols() != selectors.s2.cols()) throw InvalidArgument("dictionary 2 does not match the selectors");
    return d * selectors.s2.transpose();
  }
  throw InvalidArgument("hierarchical modality must be 1 or 2");
}

Posterior posterior_hier(const Matrix& d, const SelectorMatrices& selectors, int modality, const Vector& y,
                         const Vector& gamma_hat, double sigma) {
  const Matrix a = lifted_design(d, selectors, modality);
  if (gamma_hat.size() != a.cols())
    throw InvalidArgument("gamma_hat has " + std::to_string(gamma_hat.size()) + " entries, expected " +
                          std::to_string(a.cols()));
  return posterior_woodbury(a, y, gamma_hat, sigma);
}

Posterior posterior_td(const Matrix& d, const Matrix& w, const Vector& y, const Vector& h, const Vector& gamma,
                       double sigma, double beta) {
  check_inputs(d, y, gamma, sigma);
  if (w.cols() != d.cols() || h.size() != w.rows()) throw InvalidArgument("classifier dimensions do not match");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive and finite");
  const double inv_var = 1.0 / (sigma * sigma);
  const double inv_beta = 1.0 / (beta * beta);
  Matrix precision = inv_var * d.transpose() * d + inv_beta * w.transpose() * w;
  precision.diagonal() += gamma.cwiseInverse();
  const auto llt = detail::cholesky(std::move(precision), "task-driven posterior precision");
  Posterior p;
  p.covariance = llt.solve(Matrix::Identity(d.cols(), d.cols()));
  p.covariance = 0.5 * (p.covariance + p.covariance.transpose()).eval();
  p.mean = p.covariance * (inv_var * (d.transpose() * y) + inv_beta * (w.transpose() * h));
  return p;
}

double log_marginal(const Matrix& d, const Matrix& y, const Matrix& gammas, double sigma) {
  if (y.rows() != d.rows() || gammas.rows() != d.cols() || gammas.cols() != y.cols())
    throw InvalidArgument("log_marginal dimension mismatch");
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  const double n = static_cast<double>(d.rows());
  double total = 0.0;
  for (Index i = 0; i < y.cols(); ++i) {
    Matrix sigma_y = d * gammas.col(i).asDiagonal() * d.transpose();
    sigma_y.diagonal().array() += sigma * sigma;
    const auto llt = detail::cholesky(std::move(sigma_y), "marginal covariance");
    const Vector w = llt.matrixL().solve(y.col(i));
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    total += -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + w.squaredNorm());
  }
  return total;
}

double log_marginal_hier(const Matrix& d, const SelectorMatrices& selectors, int modality, const Matrix& y,
                         const Matrix& gamma_hats, double sigma) {
  return log_marginal(lifted_design(d, selectors, modality), y, gamma_hats, sigma);
}

double sigma_loglik_derivative(const Matrix& d, const Matrix& y, const Matrix& gammas, double sigma,
                               const PosteriorStats& stats) {
  if (y.rows() != d.rows() || stats.means.rows() != d.cols() || stats.samples() != y.cols() ||
      gammas.cols() != y.cols() || gammas.rows() != d.cols())
    throw InvalidArgument("sigma_loglik_derivative dimension mismatch");
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  const double var = sigma * sigma;
  const double n = static_cast<double>(d.rows());
  const Matrix gram = d.transpose() * d;
  const Vector atom_energy = gram.diagonal();
  double sum = 0.0;
  for (Index i = 0; i < y.cols(); ++i) {
    double tr_gram_cov = 0.0;
    if (stats.mode == PosteriorMode::exact && !stats.covariances.empty())
      tr_gram_cov = (gram.cwiseProduct(stats.covariances[static_cast<std::size_t>(i)])).sum();
    else
      tr_gram_cov = atom_energy.dot(stats.variances.col(i));
    const double trace_inv = (n - tr_gram_cov / var) / var;
    const double resid = (y.col(i) - d * stats.means.col(i)).squaredNorm() / (var * var);
    sum += trace_inv - resid;
  }
  return -sigma * sum;
}

}  // namespace msbdl
