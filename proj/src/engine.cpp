#include "engine.hpp"

#include "factor.hpp"

#include <cmath>

namespace msbdl::detail {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

double half_logdet(const Llt& llt) { return llt.matrixLLT().diagonal().array().log().sum(); }

}  // namespace

SampleResult infer_sample(const Matrix& d, const ModalityLayout& layout, const Eigen::Ref<const Vector>& gamma,
                          double sigma, const Eigen::Ref<const Vector>& y, const LabelTerm& label,
                          const Eigen::Ref<const Vector>& h, const EngineOptions& options) {
  const Index n = d.rows();
  const Index m = d.cols();
  const Index lifted = layout.lifted();
  if (layout.atoms != m) throw InvalidArgument("dictionary column count does not match the prior layout");
  if (y.size() != n) throw InvalidArgument("observation length does not match the dictionary");

  Vector gl(lifted);
  Vector c = Vector::Zero(m);
  for (Index g = 0; g < lifted; ++g) {
    gl(g) = gamma(layout.hyper[static_cast<std::size_t>(g)]);
    c(layout.atom[static_cast<std::size_t>(g)]) += gl(g);
  }
  const double var = sigma * sigma;

  // only the lower triangle is read by the factorization
  Matrix sigma_y = Matrix::Zero(n, n);
  sigma_y.selfadjointView<Eigen::Lower>().rankUpdate(d * c.cwiseSqrt().asDiagonal());
  sigma_y.diagonal().array() += var;
  const Llt llt = cholesky(std::move(sigma_y), "marginal covariance");
  const auto lower = llt.matrixL();
  Matrix e = lower.solve(d);
  Vector w = lower.solve(y);

  SampleResult out;
  out.loglik = -0.5 * (static_cast<double>(n) * kLog2Pi + 2.0 * half_logdet(llt) + w.squaredNorm());
  if (options.derivative) {
    // d/dsigma log N(y; 0, Sigma_y) = -sigma (tr Sigma_y^-1 - |Sigma_y^-1 y|^2)
    const Matrix linv = lower.solve(Matrix::Identity(n, n));
    const Vector a = llt.matrixU().solve(w);
    out.dloglik = -sigma * (linv.squaredNorm() - a.squaredNorm());
  }

  // Label block: [y; h] is jointly Gaussian; L21 = W c E^T, L22 L22^T = S22.
  Matrix e2;
  Vector w2;
  const bool has_label = label.w != nullptr;
  if (has_label) {
    const Matrix& wm = *label.w;
    if (wm.cols() != m || h.size() != wm.rows()) throw InvalidArgument("classifier does not match the dictionary");
    const Matrix l21 = wm * c.asDiagonal() * e.transpose();
    Matrix s22 = wm * c.asDiagonal() * wm.transpose() - l21 * l21.transpose();
    s22.diagonal().array() += label.beta * label.beta;
    s22 = 0.5 * (s22 + s22.transpose()).eval();
    const Llt llt2 = cholesky(std::move(s22), "label covariance");
    e2 = llt2.matrixL().solve(wm - l21 * e);
    w2 = llt2.matrixL().solve(h - l21 * w);
    out.label_loglik =
        -0.5 * (static_cast<double>(wm.rows()) * kLog2Pi + 2.0 * half_logdet(llt2) + w2.squaredNorm());
  }

  if (options.mode == PosteriorMode::exact) {
    Vector q = e.transpose() * w;
    Vector energy = e.colwise().squaredNorm().transpose();
    if (has_label) {
      q += e2.transpose() * w2;
      energy += e2.colwise().squaredNorm().transpose();
    }
    out.lifted_mean.resize(lifted);
    out.lifted_var.resize(lifted);
    for (Index g = 0; g < lifted; ++g) {
      const Index a = layout.atom[static_cast<std::size_t>(g)];
      out.lifted_mean(g) = gl(g) * q(a);
      out.lifted_var(g) = std::max(0.0, gl(g) - gl(g) * gl(g) * energy(a));
    }
    out.mean = c.cwiseProduct(q);
    if (options.covariance) {
      out.prior_var = c;
      out.factor.resize(e.rows() + e2.rows(), m);
      out.factor.topRows(e.rows()) = e * c.asDiagonal();
      if (has_label) out.factor.bottomRows(e2.rows()) = e2 * c.asDiagonal();
    }
    return out;
  }

  // Approximate posterior in the lifted space: CG for the mean, inverse
  // diagonal precision for the variances.
  const double inv_var = 1.0 / var;
  const double inv_beta = has_label ? 1.0 / (label.beta * label.beta) : 0.0;
  Vector atom_diag = inv_var * d.colwise().squaredNorm().transpose();
  Vector atom_rhs = inv_var * (d.transpose() * y);
  if (has_label) {
    atom_diag += inv_beta * label.w->colwise().squaredNorm().transpose();
    atom_rhs += inv_beta * (label.w->transpose() * h);
  }
  Vector diag(lifted);
  Vector rhs(lifted);
  for (Index g = 0; g < lifted; ++g) {
    const Index a = layout.atom[static_cast<std::size_t>(g)];
    diag(g) = atom_diag(a) + 1.0 / gl(g);
    rhs(g) = atom_rhs(a);
  }
  const auto apply = [&](const Vector& v) -> Vector {
    const Vector cv = collapse(layout, v);
    Vector back = inv_var * (d.transpose() * (d * cv));
    if (has_label) back += inv_beta * (label.w->transpose() * (*label.w * cv));
    Vector r(lifted);
    for (Index g = 0; g < lifted; ++g) r(g) = back(layout.atom[static_cast<std::size_t>(g)]) + v(g) / gl(g);
    return r;
  };
  const Index max_iter = options.cg_max_iter > 0 ? options.cg_max_iter : 10 * lifted;
  auto solved = jacobi_cg(apply, diag, rhs, options.cg_tol, max_iter);
  out.lifted_mean = std::move(solved.x);
  out.lifted_var = diag.cwiseInverse();
  out.mean = collapse(layout, out.lifted_mean);
  if (options.covariance) out.second_diag = collapse(layout, out.lifted_var);
  return out;
}

Matrix collapsed_covariance(const SampleResult& r) {
  if (r.factor.size() == 0 && r.prior_var.size() == 0) return r.second_diag.asDiagonal();
  Matrix s = -(r.factor.transpose() * r.factor);
  s.diagonal() += r.prior_var;
  return s;
}

}  // namespace msbdl::detail
