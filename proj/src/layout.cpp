#include "msbdl/layout.hpp"

#include "msbdl/error.hpp"

#include <algorithm>

namespace msbdl {

bool ModalityLayout::unlifted() const {
  if (lifted() != atoms) return false;
  for (Index g = 0; g < lifted(); ++g)
    if (atom[static_cast<std::size_t>(g)] != g) return false;
  return true;
}

PriorLayout PriorLayout::restricted(const std::vector<Index>& keep) const {
  PriorLayout out;
  out.hyper_dim = hyper_dim;
  for (Index j : keep) out.modalities.push_back(modalities.at(static_cast<std::size_t>(j)));
  return out;
}

namespace {

ModalityLayout identity_layout(Index atoms) {
  ModalityLayout l;
  l.atoms = atoms;
  l.hyper.resize(static_cast<std::size_t>(atoms));
  l.atom.resize(static_cast<std::size_t>(atoms));
  for (Index m = 0; m < atoms; ++m) {
    l.hyper[static_cast<std::size_t>(m)] = m;
    l.atom[static_cast<std::size_t>(m)] = m;
  }
  return l;
}

}  // namespace

PriorLayout make_layout(const PriorSpec& prior, Index modality_count) {
  prior.validate(modality_count);
  PriorLayout layout;
  layout.hyper_dim = prior.hyper_dim();
  switch (prior.kind) {
    case PriorKind::one_to_one:
      for (Index j = 0; j < modality_count; ++j) layout.modalities.push_back(identity_layout(prior.atoms));
      break;
    case PriorKind::atom_to_subspace: {
      const auto& tree = *prior.tree;
      layout.modalities.push_back(identity_layout(tree.branch_count()));
      ModalityLayout leaves = identity_layout(tree.leaf_count());
      for (Index m = 0; m < tree.leaf_count(); ++m) leaves.hyper[static_cast<std::size_t>(m)] = tree.root_of(m);
      layout.modalities.push_back(std::move(leaves));
      break;
    }
    case PriorKind::hierarchical: {
      // x_hat_1 = S_1 R_1 x_1 in R^{M_2} with variances gamma_1;
      // x_hat_2 = S_2 R_2 x_2 in R^{2 M_2} with variances [gamma_1; gamma_2].
      const auto& tree = *prior.tree;
      const Index m2 = tree.leaf_count();
      ModalityLayout roots;
      roots.atoms = tree.branch_count();
      ModalityLayout leaves;
      leaves.atoms = m2;
      for (Index m = 0; m < m2; ++m) {
        roots.hyper.push_back(m);
        roots.atom.push_back(tree.root_of(m));
      }
      for (Index g = 0; g < 2 * m2; ++g) {
        leaves.hyper.push_back(g);
        leaves.atom.push_back(g % m2);
      }
      layout.modalities.push_back(std::move(roots));
      layout.modalities.push_back(std::move(leaves));
      break;
    }
  }
  return layout;
}

Vector collapsed_variances(const ModalityLayout& layout, const Eigen::Ref<const Vector>& gamma) {
  Vector c = Vector::Zero(layout.atoms);
  for (Index g = 0; g < layout.lifted(); ++g)
    c(layout.atom[static_cast<std::size_t>(g)]) += gamma(layout.hyper[static_cast<std::size_t>(g)]);
  return c;
}

Vector collapse(const ModalityLayout& layout, const Eigen::Ref<const Vector>& lifted) {
  if (lifted.size() != layout.lifted()) throw InvalidArgument("lifted vector has the wrong size");
  Vector out = Vector::Zero(layout.atoms);
  for (Index g = 0; g < layout.lifted(); ++g) out(layout.atom[static_cast<std::size_t>(g)]) += lifted(g);
  return out;
}

Matrix collapse_rows(const ModalityLayout& layout, const Matrix& lifted) {
  if (lifted.rows() != layout.lifted()) throw InvalidArgument("lifted matrix has the wrong row count");
  if (layout.unlifted()) return lifted;
  Matrix out = Matrix::Zero(layout.atoms, lifted.cols());
  for (Index g = 0; g < layout.lifted(); ++g) out.row(layout.atom[static_cast<std::size_t>(g)]) += lifted.row(g);
  return out;
}

Vector pool_hyperparameters(const PriorLayout& layout, const std::vector<const Vector*>& means,
                            const std::vector<const Vector*>& variances, const Eigen::Ref<const Vector>& previous) {
  const std::size_t j_count = layout.modalities.size();
  if (means.size() != j_count || variances.size() != j_count)
    throw InvalidArgument("posterior statistics missing for some modality");
  Vector sum = Vector::Zero(layout.hyper_dim);
  Vector count = Vector::Zero(layout.hyper_dim);
  for (std::size_t j = 0; j < j_count; ++j) {
    const auto& ml = layout.modalities[j];
    if (!means[j] || !variances[j] || means[j]->size() != ml.lifted() || variances[j]->size() != ml.lifted())
      throw InvalidArgument("posterior statistics for modality " + std::to_string(j + 1) + " have the wrong size");
    for (Index g = 0; g < ml.lifted(); ++g) {
      const Index h = ml.hyper[static_cast<std::size_t>(g)];
      const double mu = (*means[j])(g);
      sum(h) += (*variances[j])(g) + mu * mu;
      count(h) += 1.0;
    }
  }
  Vector out(layout.hyper_dim);
  for (Index h = 0; h < layout.hyper_dim; ++h)
    out(h) = count(h) > 0.0 ? std::max(sum(h) / count(h), kGammaFloor) : previous(h);
  return out;
}

}  // namespace msbdl
