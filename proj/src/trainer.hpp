#pragma once

// The EM driver behind fit, fit_supervised and every fixed-dictionary
// inference call.

#include "engine.hpp"
#include "msbdl/em.hpp"

#include <vector>

namespace msbdl::detail {

struct SupervisedSetup {
  const Matrix* labels = nullptr;                   // C x L
  const MultimodalDataset* validation = nullptr;  // with labels
  double nu = 1e-4;
  Index validation_iterations = 50;
};

FitResult train(const MultimodalDataset& data, const PriorSpec& prior, const RunConfig& config,
                const SupervisedSetup* supervised);

struct FixedInference {
  Matrix gammas;
  std::vector<Matrix> codes;
  double loglik = 0.0;
  Index iterations = 0;
};

/// E-step / gamma-update iterations with dictionaries and sigmas fixed. The
/// i-th entry of dictionaries, sigmas and y belongs to layout.modalities[i].
FixedInference run_fixed(const std::vector<const Matrix*>& dictionaries, const PriorLayout& layout,
                         const std::vector<double>& sigmas, const std::vector<const Matrix*>& y, Index iterations,
                         double tol, Index threads);

/// Safe column normalization used after dictionary updates: columns whose
/// norm is zero or not finite keep their previous value.
Matrix normalize_or_keep(const Matrix& d, const Matrix& previous);

/// Y U^T A^-1 for symmetric positive definite A.
Matrix solve_right(const Matrix& yut, Matrix a, const char* what);

}  // namespace msbdl::detail
