#pragma once

// Shared dense factorizations and the preconditioned CG used by the E-step.

#include "msbdl/error.hpp"
#include "msbdl/log.hpp"
#include "msbdl/model.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace msbdl::detail {

using Llt = Eigen::LLT<Matrix>;

// Cholesky of a symmetric positive definite matrix. On failure a jitter of
// 1e-10 * trace / n is added to the diagonal once, with a warning.
inline Llt cholesky(Matrix a, const char* what) {
  Llt llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-10 * std::abs(a.trace()) / static_cast<double>(std::max<Index>(a.rows(), 1));
  std::ostringstream msg;
  msg << what << ": factorization failed, adding jitter " << jitter;
  log::warn(msg.str());
  a.diagonal().array() += jitter;
  llt.compute(a);
  if (llt.info() != Eigen::Success || !std::isfinite(llt.matrixLLT().diagonal().sum())) {
    Eigen::LDLT<Matrix> ldlt(a);
    std::ostringstream err;
    err << what << " is not positive definite (reciprocal condition estimate " << ldlt.rcond() << ")";
    throw NumericalError(err.str());
  }
  return llt;
}

struct CgResult {
  Vector x;
  Index iterations = 0;
  double relative_residual = 0.0;
};

// Solves A x = b for SPD A given only through `apply`, with Jacobi
// preconditioner `diag`. Throws NumericalError if the tolerance
// ||b - A x|| <= tol ||b|| is not reached in max_iter steps.
template <class Apply>
CgResult jacobi_cg(const Apply& apply, const Vector& diag, const Vector& b, double tol, Index max_iter,
                   const Vector* x0 = nullptr) {
  CgResult out;
  const double bnorm = b.norm();
  out.x = x0 ? *x0 : Vector::Zero(b.size());
  if (bnorm == 0.0) {
    out.x.setZero();
    return out;
  }
  Vector r = x0 ? Vector(b - apply(out.x)) : b;
  double rnorm = r.norm();
  if (rnorm <= tol * bnorm) {
    out.relative_residual = rnorm / bnorm;
    return out;
  }
  const Vector inv_diag = diag.cwiseInverse();
  Vector z = inv_diag.cwiseProduct(r);
  Vector p = z;
  double rz = r.dot(z);
  for (Index it = 1; it <= max_iter; ++it) {
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) throw NumericalError("conjugate gradients: operator is not positive definite");
    const double alpha = rz / pap;
    out.x += alpha * p;
    r -= alpha * ap;
    rnorm = r.norm();
    out.iterations = it;
    if (rnorm <= tol * bnorm) {
      out.relative_residual = rnorm / bnorm;
      return out;
    }
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  std::ostringstream err;
  err << "conjugate gradients did not converge in " << max_iter << " iterations (relative residual "
      << rnorm / bnorm << ")";
  throw NumericalError(err.str());
}

}  // namespace msbdl::detail
