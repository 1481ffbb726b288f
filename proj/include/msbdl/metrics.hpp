#pragma once

// Recovery, agreement, denoising and retrieval scores.

#include "msbdl/model.hpp"

#include <optional>
#include <vector>

namespace msbdl {

inline constexpr double kRecoveryThreshold = 0.99;

/// iota(d, D_hat) = max over columns of |d^T d_hat| / (|d| |d_hat|).
double atom_alignment(const Eigen::Ref<const Vector>& d, const Matrix& d_hat);

/// iota for every column of d_true.
Vector atom_alignments(const Matrix& d_true, const Matrix& d_hat);

/// Fraction of true atoms with iota above the threshold.
double recovery_probability(const Matrix& d_true, const Matrix& d_hat, double threshold = kRecoveryThreshold);

/// Orthonormal basis of the column span (rank-revealing thin QR).
Matrix orthonormal_basis(const Matrix& block);

/// sqrt |det(V1^T V2 V2^T V1)| for orthonormal bases V1, V2: the product of
/// the cosines of the principal angles (0 when V2 is smaller than V1).
double basis_alignment(const Matrix& v1, const Matrix& v2);

/// max over learned branches k' of the basis alignment between the span of
/// `block` and the span of D_hat[:, T_hat^k']. Throws on a rank-deficient
/// block.
double subspace_alignment(const Matrix& block, const Matrix& d_hat, const SupportTree& tree_hat);

/// Scores over singleton branches (first) and multi-leaf branches (second);
/// a score is absent when the tree has no branch of that kind.
struct ScorePair {
  std::optional<double> first;
  std::optional<double> second;
};

/// Subspace recovery of D_2 split by branch size.
ScorePair vartheta_scores(const Matrix& d2_true, const Matrix& d2_hat, const SupportTree& tree,
                          const SupportTree& tree_hat, double threshold = kRecoveryThreshold);

/// Atom recovery of D_2 split by branch size: fraction of leaves of singleton
/// branches (first) and of multi-leaf branches (second) with iota above the
/// threshold.
ScorePair varrho_scores(const Matrix& d2_true, const Matrix& d2_hat, const SupportTree& tree,
                        double threshold = kRecoveryThreshold);

/// True when the learned tree has the same multiset of branch sizes as the
/// true tree and every recovered root (iota above threshold on D_1) sits on
/// a learned branch of the same size as its true branch.
bool branch_sizes_agree(const Matrix& d1_true, const Matrix& d1_hat, const SupportTree& tree,
                        const SupportTree& tree_hat, double threshold = kRecoveryThreshold);

/// Per-sample support {m : |mu[m]| > rel * |mu|_inf}; returns the fraction of
/// samples whose supports coincide across all modalities.
double support_agreement(const std::vector<Matrix>& codes, double rel = 1e-3);

/// P = argmin |X_1 - P X_2|_F via the normal equations, minimal-norm
/// solution when X_2 X_2^T is singular.
Matrix cross_modal_map(const Matrix& x1, const Matrix& x2);

/// Y1_hat = D_1 P X_2 with X_2 from fixed-dictionary inference on modality 2.
Matrix denoise(const ModelState& model, const Matrix& p, const Matrix& y2, Index iterations = 50, Index threads = 1);

/// 10 log10(sum |clean|^2 / sum |estimate - clean|^2) over all samples.
double output_snr(const Matrix& clean, const Matrix& estimate);
Vector per_sample_snr(const Matrix& clean, const Matrix& estimate);

/// Fraction of the true tags of one sample among its k best scores (ties to
/// the lowest index).
double recall_at_k(const Eigen::Ref<const Vector>& h_true, const Eigen::Ref<const Vector>& scores, Index k);

}  // namespace msbdl
