#include "msbdl/model.hpp"

#include "msbdl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msbdl {

Index MultimodalDataset::sample_count() const {
  return modalities.empty() ? 0 : modalities.front().cols();
}

std::vector<Index> MultimodalDataset::modality_dims() const {
  std::vector<Index> dims;
  dims.reserve(modalities.size());
  for (const auto& y : modalities) dims.push_back(y.rows());
  return dims;
}

void MultimodalDataset::validate() const {
  if (modalities.empty()) throw InvalidArgument("dataset has no modalities");
  const Index l = sample_count();
  if (l < 1) throw InvalidArgument("dataset has no samples");
  for (std::size_t j = 0; j < modalities.size(); ++j) {
    if (modalities[j].cols() != l)
      throw InvalidArgument("modality " + std::to_string(j + 1) + " has " +
                            std::to_string(modalities[j].cols()) + " samples, expected " + std::to_string(l));
    if (modalities[j].rows() < 1) throw InvalidArgument("modality " + std::to_string(j + 1) + " has no rows");
    if (!modalities[j].allFinite())
      throw InvalidArgument("modality " + std::to_string(j + 1) + " contains non-finite values");
  }
  if (labels) {
    if (labels->cols() != l) throw InvalidArgument("label matrix column count does not match the data");
    // binary only: all-zero and multi-tag columns are legal outside classification
    for (Index i = 0; i < l; ++i)
      for (Index c = 0; c < labels->rows(); ++c) {
        const double v = (*labels)(c, i);
        if (v != 1.0 && v != 0.0) throw InvalidArgument("label matrix is not binary at sample " + std::to_string(i));
      }
  }
}

bool MultimodalDataset::one_of_c() const {
  if (!labels) return false;
  return ((labels->colwise().sum().array() == 1.0)).all();
}

MultimodalDataset MultimodalDataset::select(std::span<const Index> samples) const {
  MultimodalDataset out;
  for (const auto& y : modalities) {
    Matrix sub(y.rows(), static_cast<Index>(samples.size()));
    for (std::size_t c = 0; c < samples.size(); ++c) sub.col(static_cast<Index>(c)) = y.col(samples[c]);
    out.modalities.push_back(std::move(sub));
  }
  if (labels) {
    Matrix sub(labels->rows(), static_cast<Index>(samples.size()));
    for (std::size_t c = 0; c < samples.size(); ++c) sub.col(static_cast<Index>(c)) = labels->col(samples[c]);
    out.labels = std::move(sub);
  }
  return out;
}

// ---------------------------------------------------------------------------

SupportTree::SupportTree(std::vector<std::vector<Index>> leaf_sets) : branches_(std::move(leaf_sets)) {
  Index total = 0;
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    if (branches_[k].empty()) throw InvalidArgument("branch " + std::to_string(k) + " has no leaves");
    std::sort(branches_[k].begin(), branches_[k].end());
    total += static_cast<Index>(branches_[k].size());
  }
  root_of_.assign(static_cast<std::size_t>(total), -1);
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    for (Index m : branches_[k]) {
      if (m < 0 || m >= total)
        throw InvalidArgument("leaf " + std::to_string(m) + " outside [0, " + std::to_string(total) + ")");
      auto& owner = root_of_[static_cast<std::size_t>(m)];
      if (owner != -1)
        throw InvalidArgument("leaf " + std::to_string(m) + " appears in branches " + std::to_string(owner) +
                              " and " + std::to_string(k));
      owner = static_cast<Index>(k);
    }
  }
}

SupportTree SupportTree::singleton(Index branches) {
  std::vector<std::vector<Index>> sets(static_cast<std::size_t>(branches));
  for (Index k = 0; k < branches; ++k) sets[static_cast<std::size_t>(k)] = {k};
  return SupportTree(std::move(sets));
}

SupportTree SupportTree::most_uniform(Index roots, Index leaves) {
  if (roots < 1 || leaves < roots || leaves > 2 * roots)
    throw InvalidArgument("most-uniform tree needs roots <= leaves <= 2 * roots");
  std::vector<std::vector<Index>> sets(static_cast<std::size_t>(roots));
  for (Index k = 0; k < roots; ++k) {
    sets[static_cast<std::size_t>(k)].push_back(k);
    if (k + roots < leaves) sets[static_cast<std::size_t>(k)].push_back(k + roots);
  }
  return SupportTree(std::move(sets));
}

Index SupportTree::max_branch_size() const {
  Index best = 0;
  for (const auto& b : branches_) best = std::max(best, static_cast<Index>(b.size()));
  return best;
}

bool SupportTree::balanced() const {
  const Index top = max_branch_size();
  return std::all_of(branches_.begin(), branches_.end(),
                     [top](const auto& b) { return static_cast<Index>(b.size()) == top; });
}

std::vector<Index> SupportTree::branch_sizes() const {
  std::vector<Index> sizes;
  sizes.reserve(branches_.size());
  for (const auto& b : branches_) sizes.push_back(static_cast<Index>(b.size()));
  return sizes;
}

SupportTree SupportTree::without_leaf(Index leaf) const {
  const Index k = root_of(leaf);
  if (branch_size(k) < 2) throw InvalidArgument("cannot remove the last leaf of branch " + std::to_string(k));
  auto sets = branches_;
  for (auto& b : sets) {
    b.erase(std::remove(b.begin(), b.end(), leaf), b.end());
    for (auto& m : b)
      if (m > leaf) --m;
  }
  return SupportTree(std::move(sets));
}

// ---------------------------------------------------------------------------

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::one_to_one: return "one-to-one";
    case PriorKind::atom_to_subspace: return "atom-to-subspace";
    case PriorKind::hierarchical: return "hierarchical";
  }
  return "unknown";
}

PriorKind parse_prior_kind(const std::string& name) {
  if (name == "one-to-one") return PriorKind::one_to_one;
  if (name == "atom-to-subspace") return PriorKind::atom_to_subspace;
  if (name == "hierarchical") return PriorKind::hierarchical;
  throw InvalidArgument("unknown prior kind '" + name + "'");
}

PriorSpec PriorSpec::one_to_one(Index atoms) {
  if (atoms < 1) throw InvalidArgument("one-to-one prior needs at least one atom");
  return PriorSpec{PriorKind::one_to_one, atoms, std::nullopt};
}

PriorSpec PriorSpec::atom_to_subspace(SupportTree tree) {
  const Index k = tree.branch_count();
  return PriorSpec{PriorKind::atom_to_subspace, k, std::move(tree)};
}

PriorSpec PriorSpec::hierarchical(SupportTree tree) {
  const Index k = tree.branch_count();
  return PriorSpec{PriorKind::hierarchical, k, std::move(tree)};
}

std::vector<Index> PriorSpec::atom_counts(Index modality_count) const {
  if (!structured()) return std::vector<Index>(static_cast<std::size_t>(modality_count), atoms);
  return {tree->branch_count(), tree->leaf_count()};
}

Index PriorSpec::hyper_dim() const {
  switch (kind) {
    case PriorKind::one_to_one: return atoms;
    case PriorKind::atom_to_subspace: return tree->branch_count();
    case PriorKind::hierarchical: return 2 * tree->leaf_count();
  }
  return 0;
}

void PriorSpec::validate(Index modality_count) const {
  if (modality_count < 1) throw InvalidArgument("at least one modality is required");
  if (!structured()) {
    if (atoms < 1) throw InvalidArgument("one-to-one prior needs at least one atom");
    return;
  }
  if (!tree) throw InvalidArgument(to_string(kind) + " prior requires a support tree");
  if (modality_count != 2)
    throw InvalidArgument(to_string(kind) + " prior supports exactly two modalities, got " +
                          std::to_string(modality_count));
}

// ---------------------------------------------------------------------------

SelectorMatrices build_selectors(const SupportTree& tree) {
  const Index k_count = tree.branch_count();
  const Index m2 = tree.leaf_count();
  if (k_count < 1) throw InvalidArgument("support tree has no branches");
  SelectorMatrices sel;
  sel.s1 = Matrix::Zero(m2, k_count);
  sel.r1 = Matrix::Zero(k_count, k_count);
  for (Index k = 0; k < k_count; ++k) {
    for (Index m : tree.leaves(k)) sel.s1(m, k) = 1.0;
    sel.r1(k, k) = 1.0 / static_cast<double>(tree.branch_size(k));
  }
  sel.s2.resize(2 * m2, m2);
  sel.s2 << Matrix::Identity(m2, m2), Matrix::Identity(m2, m2);
  sel.r2 = 0.5 * Matrix::Identity(m2, m2);
  return sel;
}

BalancedTree balance_tree(const SupportTree& tree) {
  const Index target = tree.max_branch_size();
  auto sets = tree.branches();
  Index next = tree.leaf_count();
  bool added = true;
  while (added) {
    added = false;
    for (auto& b : sets) {
      if (static_cast<Index>(b.size()) < target) {
        b.push_back(next++);
        added = true;
      }
    }
  }
  return BalancedTree{SupportTree(std::move(sets)), next - tree.leaf_count()};
}

Matrix normalize_columns(const Matrix& d) {
  Matrix out = d;
  for (Index m = 0; m < d.cols(); ++m) {
    const double norm = d.col(m).norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw InvalidArgument("cannot normalize column " + std::to_string(m) + " (norm " + std::to_string(norm) + ")");
    out.col(m) /= norm;
  }
  return out;
}

// ---------------------------------------------------------------------------

AnnealSchedule AnnealSchedule::defaults(Index modality_count) {
  AnnealSchedule s;
  if (modality_count == 2)
    s.sigma0 = {1.0, std::sqrt(10.0)};
  else if (modality_count == 3)
    s.sigma0 = {1.0, std::sqrt(1.5), std::sqrt(2.0)};
  else
    s.sigma0.assign(static_cast<std::size_t>(modality_count), 1.0);
  s.sigma_inf = std::sqrt(1e-3);
  s.alpha_sigma = std::sqrt(0.995);
  s.beta0.assign(static_cast<std::size_t>(modality_count), std::sqrt(100.0));
  s.beta_inf = std::sqrt(1e-2);
  s.alpha_beta = std::sqrt(0.995);
  s.validation_period = 10;
  return s;
}

void AnnealSchedule::validate(Index modality_count, bool supervised) const {
  if (static_cast<Index>(sigma0.size()) != modality_count)
    throw InvalidArgument("sigma0 needs one entry per modality");
  if (!(sigma_inf >= 0.0)) throw InvalidArgument("sigma_inf must be >= 0");
  if (!(alpha_sigma > 0.0 && alpha_sigma < 1.0)) throw InvalidArgument("alpha_sigma must lie in (0, 1)");
  for (double s : sigma0)
    if (!(s > sigma_inf)) throw InvalidArgument("every sigma0 must exceed sigma_inf");
  if (!supervised) return;
  if (static_cast<Index>(beta0.size()) != modality_count) throw InvalidArgument("beta0 needs one entry per modality");
  if (!(beta_inf >= 0.0)) throw InvalidArgument("beta_inf must be >= 0");
  if (!(alpha_beta > 0.0 && alpha_beta < 1.0)) throw InvalidArgument("alpha_beta must lie in (0, 1)");
  for (double b : beta0)
    if (!(b > beta_inf)) throw InvalidArgument("every beta0 must exceed beta_inf");
  if (validation_period < 1) throw InvalidArgument("validation_period must be >= 1");
}

void ModelState::validate() const {
  const Index j = modality_count();
  prior.validate(j);
  if (static_cast<Index>(sigmas.size()) != j) throw InvalidArgument("model needs one sigma per modality");
  const auto atoms = prior.atom_counts(j);
  for (Index m = 0; m < j; ++m) {
    if (dictionaries[static_cast<std::size_t>(m)].cols() != atoms[static_cast<std::size_t>(m)])
      throw InvalidArgument("dictionary " + std::to_string(m + 1) + " size does not match the prior");
    if (!(sigmas[static_cast<std::size_t>(m)] > 0.0)) throw InvalidArgument("sigma must be positive");
  }
  if ((gammas.array() < 0.0).any()) throw InvalidArgument("negative hyperparameter");
  if (classifier) {
    if (static_cast<Index>(classifier->weights.size()) != j || static_cast<Index>(classifier->betas.size()) != j)
      throw InvalidArgument("classifier needs one W and beta per modality");
    for (double b : classifier->betas)
      if (!(b > 0.0)) throw InvalidArgument("beta must be positive");
  }
}

}  // namespace msbdl
