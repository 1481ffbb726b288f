#pragma once

// Core domain types shared by every stage of multimodal sparse Bayesian
// dictionary learning: datasets, support trees, prior specifications,
// selector matrices, annealing schedules and the learned model state.
//
// Matrices are column-major with one sample per column.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msbdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Hyperparameters are clamped to this floor so that inverse prior
/// variances stay finite.
inline constexpr double kGammaFloor = 1e-12;

struct MultimodalDataset {
  std::vector<Matrix> modalities;  // Y_j, N_j x L
  std::optional<Matrix> labels;    // H, C x L

  Index modality_count() const { return static_cast<Index>(modalities.size()); }
  Index sample_count() const;
  std::vector<Index> modality_dims() const;

  /// Throws InvalidArgument when column counts disagree, data is not finite or
  /// labels are not binary.
  void validate() const;

  /// Labels present with exactly one tag per sample (classification).
  bool one_of_c() const;

  MultimodalDataset select(std::span<const Index> samples) const;
};

/// Assignment of modality-2 atoms (leaves) to modality-1 atoms (roots).
/// Branches are pairwise disjoint, nonempty and cover [0, leaf_count).
class SupportTree {
 public:
  SupportTree() = default;
  explicit SupportTree(std::vector<std::vector<Index>> leaf_sets);

  /// K branches with one leaf each, leaf k under root k.
  static SupportTree singleton(Index branches);

  /// Branch k holds {k, k + roots} when k + roots < leaves, else {k}.
  static SupportTree most_uniform(Index roots, Index leaves);

  Index branch_count() const { return static_cast<Index>(branches_.size()); }
  Index leaf_count() const { return static_cast<Index>(root_of_.size()); }
  const std::vector<Index>& leaves(Index k) const { return branches_.at(static_cast<std::size_t>(k)); }
  const std::vector<std::vector<Index>>& branches() const { return branches_; }
  Index root_of(Index leaf) const { return root_of_.at(static_cast<std::size_t>(leaf)); }
  Index branch_size(Index k) const { return static_cast<Index>(leaves(k).size()); }
  Index max_branch_size() const;
  bool balanced() const;
  std::vector<Index> branch_sizes() const;

  /// Removes `leaf` and renumbers every larger leaf index down by one.
  SupportTree without_leaf(Index leaf) const;

  bool operator==(const SupportTree&) const = default;

 private:
  std::vector<std::vector<Index>> branches_;
  std::vector<Index> root_of_;
};

enum class PriorKind { one_to_one, atom_to_subspace, hierarchical };

std::string to_string(PriorKind kind);
PriorKind parse_prior_kind(const std::string& name);

struct PriorSpec {
  PriorKind kind = PriorKind::one_to_one;
  Index atoms = 0;                  // one-to-one: shared M
  std::optional<SupportTree> tree;  // structured kinds

  static PriorSpec one_to_one(Index atoms);
  static PriorSpec atom_to_subspace(SupportTree tree);
  static PriorSpec hierarchical(SupportTree tree);

  bool structured() const { return kind != PriorKind::one_to_one; }

  /// Dictionary sizes M_j for a run with `modality_count` modalities.
  std::vector<Index> atom_counts(Index modality_count) const;

  /// Number of hyperparameters per sample.
  Index hyper_dim() const;

  void validate(Index modality_count) const;
};

struct SelectorMatrices {
  Matrix s1;  // M_2 x M_1, s1(m, k) = 1 iff m in branch k
  Matrix r1;  // M_1 x M_1 diagonal
  Matrix s2;  // 2 M_2 x M_2, two stacked identities
  Matrix r2;  // M_2 x M_2 diagonal, 0.5 I
};

SelectorMatrices build_selectors(const SupportTree& tree);

struct BalancedTree {
  SupportTree tree;
  Index padded_count = 0;
};

/// Pads every branch up to the largest branch size. New leaves get indices
/// after the existing ones and go to the smallest branches round-robin.
BalancedTree balance_tree(const SupportTree& tree);

/// Scales every column to unit l2 norm. Throws InvalidArgument naming the
/// first zero column.
Matrix normalize_columns(const Matrix& d);

struct AnnealSchedule {
  std::vector<double> sigma0;
  double sigma_inf = 0.0;
  double alpha_sigma = 0.0;
  std::vector<double> beta0;
  double beta_inf = 0.0;
  double alpha_beta = 0.0;
  Index validation_period = 0;

  /// Bimodal default (1, sqrt 10) and trimodal default (1, sqrt 1.5, sqrt 2)
  /// with alpha = sqrt 0.995 and sigma_inf = sqrt 1e-3.
  static AnnealSchedule defaults(Index modality_count);

  void validate(Index modality_count, bool supervised) const;
};

struct Classifier {
  std::vector<Matrix> weights;  // W_j, C x M_j
  std::vector<double> betas;
};

struct ModelState {
  std::vector<Matrix> dictionaries;
  Matrix gammas;  // hyper_dim x L
  std::vector<double> sigmas;
  PriorSpec prior;
  std::optional<Classifier> classifier;

  Index modality_count() const { return static_cast<Index>(dictionaries.size()); }
  void validate() const;
};

}  // namespace msbdl
