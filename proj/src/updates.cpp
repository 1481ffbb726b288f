#include "factor.hpp"
#include "msbdl/em.hpp"
#include "msbdl/error.hpp"
#include "msbdl/log.hpp"
#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msbdl {

namespace {

double second_moment(const PosteriorStats& s, Index m, Index i) {
  const double mu = s.means(m, i);
  return s.variances(m, i) + mu * mu;
}

void check_sample(const PosteriorStats& s, Index sample, const char* what) {
  if (sample < 0 || sample >= s.samples())
    throw InvalidArgument(std::string(what) + ": sample " + std::to_string(sample) + " out of range");
  if (s.variances.rows() != s.means.rows() || s.variances.cols() != s.means.cols())
    throw InvalidArgument(std::string(what) + ": means and variances disagree in shape");
}

}  // namespace

Vector update_gamma_one_to_one(const std::vector<const PosteriorStats*>& stats, Index sample) {
  if (stats.empty()) throw InvalidArgument("gamma update needs statistics for at least one modality");
  for (const auto* s : stats) {
    if (!s) throw InvalidArgument("gamma update: missing modality statistics");
    check_sample(*s, sample, "gamma update");
    if (s->means.rows() != stats.front()->means.rows())
      throw InvalidArgument("gamma update: modalities have different atom counts");
  }
  const Index m_count = stats.front()->means.rows();
  Vector gamma = Vector::Zero(m_count);
  for (const auto* s : stats)
    for (Index m = 0; m < m_count; ++m) gamma(m) += second_moment(*s, m, sample);
  gamma /= static_cast<double>(stats.size());
  return gamma.cwiseMax(kGammaFloor);
}

Vector update_gamma_a2s(const PosteriorStats& roots, const PosteriorStats& leaves, const SupportTree& tree,
                        Index sample) {
  check_sample(roots, sample, "atom-to-subspace gamma update");
  check_sample(leaves, sample, "atom-to-subspace gamma update");
  if (roots.means.rows() != tree.branch_count() || leaves.means.rows() != tree.leaf_count())
    throw InvalidArgument("atom-to-subspace gamma update: statistics do not match the tree");
  Vector gamma(tree.branch_count());
  for (Index k = 0; k < tree.branch_count(); ++k) {
    double s = second_moment(roots, k, sample);
    for (Index m : tree.leaves(k)) s += second_moment(leaves, m, sample);
    gamma(k) = std::max(s / static_cast<double>(1 + tree.branch_size(k)), kGammaFloor);
  }
  return gamma;
}

Vector update_gamma_hier(const PosteriorStats& lifted1, const PosteriorStats& lifted2, Index leaf_count,
                         Index sample) {
  check_sample(lifted1, sample, "hierarchical gamma update");
  check_sample(lifted2, sample, "hierarchical gamma update");
  if (lifted1.means.rows() != leaf_count || lifted2.means.rows() != 2 * leaf_count)
    throw InvalidArgument("hierarchical gamma update: lifted statistics have the wrong size");
  Vector gamma(2 * leaf_count);
  for (Index m = 0; m < leaf_count; ++m) {
    gamma(m) = 0.5 * (second_moment(lifted1, m, sample) + second_moment(lifted2, m, sample));
    gamma(leaf_count + m) = second_moment(lifted2, leaf_count + m, sample);
  }
  return gamma.cwiseMax(kGammaFloor);
}

Matrix update_dictionary(const Matrix& y, const Matrix& u, const Matrix& sum_sigma) {
  if (u.cols() != y.cols()) throw InvalidArgument("dictionary update: U and Y disagree on the sample count");
  if (sum_sigma.rows() != u.rows() || sum_sigma.cols() != u.rows())
    throw InvalidArgument("dictionary update: summed covariance has the wrong shape");
  Matrix a = u * u.transpose() + sum_sigma;
  return normalize_columns(detail::solve_right(y * u.transpose(), std::move(a), "dictionary update"));
}

Matrix update_dictionary_hier(const Matrix& y, const Matrix& u_hat, const Matrix& sum_sigma_hat,
                              const SelectorMatrices& selectors, int modality) {
  if (modality != 1 && modality != 2) throw InvalidArgument("hierarchical modality must be 1 or 2");
  const Matrix& s = modality == 1 ? selectors.s1 : selectors.s2;
  if (u_hat.rows() != s.rows() || sum_sigma_hat.rows() != s.rows() || sum_sigma_hat.cols() != s.rows())
    throw InvalidArgument("hierarchical dictionary update: lifted statistics do not match the selectors");
  if (u_hat.cols() != y.cols()) throw InvalidArgument("dictionary update: U and Y disagree on the sample count");
  const Matrix u = s.transpose() * u_hat;
  Matrix a = s.transpose() * (u_hat * u_hat.transpose() + sum_sigma_hat) * s;
  return normalize_columns(detail::solve_right(y * u.transpose(), std::move(a), "dictionary update"));
}

double anneal_sigma(double sigma, double derivative, const AnnealSchedule& schedule) {
  if (derivative < 0.0) return std::max(schedule.sigma_inf, schedule.alpha_sigma * sigma);
  return sigma;
}

double anneal_sigma_likelihood(double sigma, const Matrix& d, const Matrix& y, const Matrix& gammas,
                               const AnnealSchedule& schedule) {
  const double proposal = std::max(schedule.sigma_inf, schedule.alpha_sigma * sigma);
  if (proposal == sigma) return sigma;
  const double current = log_marginal(d, y, gammas, sigma);
  const double proposed = log_marginal(d, y, gammas, proposal);
  return proposed > current ? proposal : sigma;
}

CleaningResult clean_dictionary(const Matrix& d, const Matrix& u, const Matrix& y, double coherence_threshold,
                                double energy_threshold) {
  const Index m_count = d.cols();
  if (u.rows() != m_count || u.cols() != y.cols() || y.rows() != d.rows())
    throw InvalidArgument("cleaning: dictionary, codes and data do not match");
  CleaningResult out;
  out.dictionary = d;
  if (m_count == 0) return out;

  const Vector norms = d.colwise().norm().transpose();
  const Vector energy = u.rowwise().squaredNorm();
  const double mean_energy = energy.mean();
  std::vector<bool> flagged(static_cast<std::size_t>(m_count), false);
  const Matrix gram = d.transpose() * d;
  for (Index a = 0; a < m_count; ++a) {
    for (Index b = a + 1; b < m_count; ++b) {
      if (flagged[static_cast<std::size_t>(a)] || flagged[static_cast<std::size_t>(b)]) continue;
      const double coherence = std::abs(gram(a, b)) / (norms(a) * norms(b));
      if (coherence > coherence_threshold) flagged[static_cast<std::size_t>(energy(a) < energy(b) ? a : b)] = true;
    }
  }
  for (Index a = 0; a < m_count; ++a)
    if (energy(a) < energy_threshold * mean_energy) flagged[static_cast<std::size_t>(a)] = true;

  std::vector<Index> victims;
  for (Index a = 0; a < m_count; ++a)
    if (flagged[static_cast<std::size_t>(a)]) victims.push_back(a);
  if (victims.empty()) return out;

  // worst-reconstructed data columns first, ties to the lower index
  const Vector residual = (y - d * u).colwise().norm().transpose();
  std::vector<Index> order(static_cast<std::size_t>(y.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index p, Index q) { return residual(p) > residual(q); });
  std::size_t next = 0;
  for (Index a : victims) {
    while (next < order.size() && !(y.col(order[next]).norm() > 0.0)) ++next;
    if (next == order.size()) {
      log::warn("cleaning ran out of usable data columns");
      break;
    }
    const Index col = order[next++];
    out.dictionary.col(a) = y.col(col) / y.col(col).norm();
    out.replaced.push_back(a);
    out.data_columns.push_back(col);
  }
  return out;
}

PruneResult prune(const Matrix& d, const Matrix& usage_codes, const SupportTree& tree, Index padded, double epsilon) {
  if (d.cols() != tree.leaf_count() || usage_codes.rows() != tree.leaf_count())
    throw InvalidArgument("prune: dictionary and codes must have one column/row per leaf");
  if (padded < 0) throw InvalidArgument("prune: negative column count");
  Index removable = 0;
  for (Index k = 0; k < tree.branch_count(); ++k) removable += tree.branch_size(k) - 1;
  if (padded > removable)
    throw InvalidArgument("prune: cannot remove " + std::to_string(padded) + " leaves, only " +
                          std::to_string(removable) + " are removable");

  PruneResult out;
  out.dictionary = d;
  out.tree = tree;
  std::vector<double> z(static_cast<std::size_t>(usage_codes.rows()));
  for (Index m = 0; m < usage_codes.rows(); ++m) z[static_cast<std::size_t>(m)] = usage_codes.row(m).squaredNorm();

  const auto remove = [&](Index m) {
    const Index cols = out.dictionary.cols();
    Matrix next(out.dictionary.rows(), cols - 1);
    next << out.dictionary.leftCols(m), out.dictionary.rightCols(cols - m - 1);
    out.dictionary = std::move(next);
    z.erase(z.begin() + m);
    out.tree = out.tree.without_leaf(m);
    out.removed.push_back(m);
    --padded;
  };

  // Phase 1: drop the least-used leaf of the most coherent branch.
  while (padded > 0) {
    Index best_k = -1;
    double best_v = epsilon;
    for (Index k = 0; k < out.tree.branch_count(); ++k) {
      const auto& leaves = out.tree.leaves(k);
      if (leaves.size() < 2) continue;
      double v = 0.0;
      for (std::size_t p = 0; p < leaves.size(); ++p)
        for (std::size_t q = p + 1; q < leaves.size(); ++q) {
          const auto a = out.dictionary.col(leaves[p]);
          const auto b = out.dictionary.col(leaves[q]);
          v = std::max(v, std::abs(a.dot(b)) / (a.norm() * b.norm()));
        }
      if (v > best_v) {
        best_v = v;
        best_k = k;
      }
    }
    if (best_k < 0) break;
    Index m = -1;
    for (Index leaf : out.tree.leaves(best_k))
      if (m < 0 || z[static_cast<std::size_t>(leaf)] < z[static_cast<std::size_t>(m)]) m = leaf;
    remove(m);
  }

  // Phase 2: globally least-used leaves among branches that can spare one.
  while (padded > 0) {
    Index m = -1;
    for (Index leaf = 0; leaf < out.tree.leaf_count(); ++leaf) {
      if (out.tree.branch_size(out.tree.root_of(leaf)) < 2) continue;
      if (m < 0 || z[static_cast<std::size_t>(leaf)] < z[static_cast<std::size_t>(m)]) m = leaf;
    }
    remove(m);
  }
  return out;
}

}  // namespace msbdl
