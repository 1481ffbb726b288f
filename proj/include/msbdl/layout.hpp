#pragma once

// Coupling between per-sample hyperparameters and the (possibly lifted)
// coefficients of each modality.
//
// Every prior is described by two index maps per modality: lifted coordinate
// g draws its prior variance from shared hyperparameter hyper[g] and
// contributes to dictionary column atom[g]. The one-to-one and
// atom-to-subspace priors use no lifting (atom[g] == g); the hierarchical
// prior lifts modality j through the selector S_j.

#include "msbdl/model.hpp"

#include <vector>

namespace msbdl {

struct ModalityLayout {
  Index atoms = 0;
  std::vector<Index> hyper;
  std::vector<Index> atom;

  Index lifted() const { return static_cast<Index>(hyper.size()); }
  bool unlifted() const;
};

struct PriorLayout {
  Index hyper_dim = 0;
  std::vector<ModalityLayout> modalities;

  /// Keeps only the listed modalities (fixed-dictionary inference on a subset).
  PriorLayout restricted(const std::vector<Index>& keep) const;
};

PriorLayout make_layout(const PriorSpec& prior, Index modality_count);

/// Collapsed prior variances c[a] = sum over lifted g with atom[g] == a of
/// gamma[hyper[g]]; the diagonal of S^T Gamma S.
Vector collapsed_variances(const ModalityLayout& layout, const Eigen::Ref<const Vector>& gamma);

/// S^T v: sums lifted coordinates into their atoms.
Vector collapse(const ModalityLayout& layout, const Eigen::Ref<const Vector>& lifted);
Matrix collapse_rows(const ModalityLayout& layout, const Matrix& lifted);

/// Pools lifted second moments (variance + mean^2) into hyperparameters:
/// each hyperparameter becomes the average over every (modality, lifted
/// coordinate) attached to it, floored at kGammaFloor. Hyperparameters with
/// no attached coordinate keep `previous`.
Vector pool_hyperparameters(const PriorLayout& layout, const std::vector<const Vector*>& means,
                            const std::vector<const Vector*>& variances, const Eigen::Ref<const Vector>& previous);

}  // namespace msbdl
