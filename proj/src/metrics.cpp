#include "msbdl/metrics.hpp"

#include "msbdl/em.hpp"
#include "msbdl/error.hpp"
#include "msbdl/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace msbdl {

double atom_alignment(const Eigen::Ref<const Vector>& d, const Matrix& d_hat) {
  const double dn = d.norm();
  if (!(dn > 0.0)) throw InvalidArgument("atom_alignment: zero reference atom");
  if (d_hat.rows() != d.size()) throw InvalidArgument("atom_alignment: dimension mismatch");
  double best = 0.0;
  for (Index m = 0; m < d_hat.cols(); ++m) {
    const double hn = d_hat.col(m).norm();
    if (!(hn > 0.0)) continue;
    best = std::max(best, std::abs(d.dot(d_hat.col(m))) / (dn * hn));
  }
  return std::min(best, 1.0);
}

Vector atom_alignments(const Matrix& d_true, const Matrix& d_hat) {
  Vector out(d_true.cols());
  for (Index m = 0; m < d_true.cols(); ++m) out(m) = atom_alignment(d_true.col(m), d_hat);
  return out;
}

double recovery_probability(const Matrix& d_true, const Matrix& d_hat, double threshold) {
  if (d_true.cols() == 0) return 0.0;
  const Vector iota = atom_alignments(d_true, d_hat);
  return static_cast<double>((iota.array() > threshold).count()) / static_cast<double>(d_true.cols());
}

Matrix orthonormal_basis(const Matrix& block) {
  Eigen::ColPivHouseholderQR<Matrix> qr(block);
  const Index rank = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(block.rows(), rank);
  return q;
}

double basis_alignment(const Matrix& v1, const Matrix& v2) {
  if (v1.rows() != v2.rows()) throw InvalidArgument("basis_alignment: dimension mismatch");
  if (v2.cols() < v1.cols()) return 0.0;
  const Matrix c = v1.transpose() * v2;
  const double det = (c * c.transpose()).determinant();
  return std::min(1.0, std::sqrt(std::abs(det)));
}

double subspace_alignment(const Matrix& block, const Matrix& d_hat, const SupportTree& tree_hat) {
  if (block.cols() < 1) throw InvalidArgument("subspace_alignment: empty block");
  if (block.cols() > block.rows()) throw InvalidArgument("subspace_alignment: block wider than the ambient space");
  if (d_hat.cols() != tree_hat.leaf_count()) throw InvalidArgument("subspace_alignment: D_hat does not match its tree");
  const Matrix v1 = orthonormal_basis(block);
  if (v1.cols() < block.cols()) throw InvalidArgument("subspace_alignment: rank-deficient block");
  double best = 0.0;
  for (Index k = 0; k < tree_hat.branch_count(); ++k) {
    Matrix sub(d_hat.rows(), tree_hat.branch_size(k));
    Index c = 0;
    for (Index m : tree_hat.leaves(k)) sub.col(c++) = d_hat.col(m);
    best = std::max(best, basis_alignment(v1, orthonormal_basis(sub)));
  }
  return best;
}

ScorePair vartheta_scores(const Matrix& d2_true, const Matrix& d2_hat, const SupportTree& tree,
                          const SupportTree& tree_hat, double threshold) {
  if (d2_true.cols() != tree.leaf_count()) throw InvalidArgument("vartheta: D_2 does not match its tree");
  Index n1 = 0, hit1 = 0, n2 = 0, hit2 = 0;
  for (Index k = 0; k < tree.branch_count(); ++k) {
    Matrix block(d2_true.rows(), tree.branch_size(k));
    Index c = 0;
    for (Index m : tree.leaves(k)) block.col(c++) = d2_true.col(m);
    const bool hit = subspace_alignment(block, d2_hat, tree_hat) > threshold;
    if (tree.branch_size(k) == 1) {
      ++n1;
      hit1 += hit;
    } else {
      ++n2;
      hit2 += hit;
    }
  }
  ScorePair out;
  if (n1 > 0) out.first = static_cast<double>(hit1) / static_cast<double>(n1);
  if (n2 > 0) out.second = static_cast<double>(hit2) / static_cast<double>(n2);
  return out;
}

ScorePair varrho_scores(const Matrix& d2_true, const Matrix& d2_hat, const SupportTree& tree, double threshold) {
  if (d2_true.cols() != tree.leaf_count()) throw InvalidArgument("varrho: D_2 does not match its tree");
  Index n1 = 0, hit1 = 0, n2 = 0, hit2 = 0;
  for (Index k = 0; k < tree.branch_count(); ++k) {
    for (Index m : tree.leaves(k)) {
      const bool hit = atom_alignment(d2_true.col(m), d2_hat) > threshold;
      if (tree.branch_size(k) == 1) {
        ++n1;
        hit1 += hit;
      } else {
        ++n2;
        hit2 += hit;
      }
    }
  }
  ScorePair out;
  if (n1 > 0) out.first = static_cast<double>(hit1) / static_cast<double>(n1);
  if (n2 > 0) out.second = static_cast<double>(hit2) / static_cast<double>(n2);
  return out;
}

bool branch_sizes_agree(const Matrix& d1_true, const Matrix& d1_hat, const SupportTree& tree,
                        const SupportTree& tree_hat, double threshold) {
  if (d1_true.cols() != tree.branch_count() || d1_hat.cols() != tree_hat.branch_count())
    throw InvalidArgument("branch_sizes_agree: D_1 does not match its tree");
  auto sizes = tree.branch_sizes();
  auto sizes_hat = tree_hat.branch_sizes();
  std::sort(sizes.begin(), sizes.end());
  std::sort(sizes_hat.begin(), sizes_hat.end());
  if (sizes != sizes_hat) return false;
  for (Index k = 0; k < tree.branch_count(); ++k) {
    const double dn = d1_true.col(k).norm();
    Index best = -1;
    double best_iota = -1.0;
    for (Index kh = 0; kh < d1_hat.cols(); ++kh) {
      const double iota = std::abs(d1_true.col(k).dot(d1_hat.col(kh))) / (dn * d1_hat.col(kh).norm());
      if (iota > best_iota) {
        best_iota = iota;
        best = kh;
      }
    }
    if (best_iota > threshold && tree_hat.branch_size(best) != tree.branch_size(k)) return false;
  }
  return true;
}

double support_agreement(const std::vector<Matrix>& codes, double rel) {
  if (codes.empty()) throw InvalidArgument("support_agreement: no modalities");
  const Index l = codes.front().cols();
  for (const auto& c : codes)
    if (c.cols() != l || c.rows() != codes.front().rows())
      throw InvalidArgument("support_agreement: code matrices differ in shape");
  if (l == 0) return 0.0;
  Index agree = 0;
  for (Index i = 0; i < l; ++i) {
    bool same = true;
    std::vector<bool> ref;
    for (std::size_t j = 0; j < codes.size() && same; ++j) {
      const auto col = codes[j].col(i);
      const double cut = rel * col.cwiseAbs().maxCoeff();
      std::vector<bool> s(static_cast<std::size_t>(col.size()));
      for (Index m = 0; m < col.size(); ++m) s[static_cast<std::size_t>(m)] = std::abs(col(m)) > cut;
      if (j == 0)
        ref = std::move(s);
      else
        same = s == ref;
    }
    agree += same;
  }
  return static_cast<double>(agree) / static_cast<double>(l);
}

Matrix cross_modal_map(const Matrix& x1, const Matrix& x2) {
  if (x1.cols() != x2.cols()) throw InvalidArgument("cross_modal_map: sample counts differ");
  const Matrix g = x2 * x2.transpose();
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) return llt.solve(x2 * x1.transpose()).transpose();
  log::info("cross_modal_map: X_2 X_2^T is singular, using the minimal-norm solution");
  const Matrix x2t = x2.transpose();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x2t);
  return cod.solve(Matrix(x1.transpose())).transpose();
}

Matrix denoise(const ModelState& model, const Matrix& p, const Matrix& y2, Index iterations, Index threads) {
  if (model.modality_count() < 2) throw InvalidArgument("denoise needs a model with two modalities");
  const Matrix& d1 = model.dictionaries[0];
  const Matrix& d2 = model.dictionaries[1];
  if (p.rows() != d1.cols() || p.cols() != d2.cols())
    throw InvalidArgument("denoise: P must be " + std::to_string(d1.cols()) + " x " + std::to_string(d2.cols()));
  if (y2.rows() != d2.rows()) throw InvalidArgument("denoise: data does not match dictionary 2");
  const auto inferred = infer_codes(model.dictionaries, model.prior, model.sigmas, {1}, {y2}, iterations, 1e-6, threads);
  return d1 * (p * inferred.codes.front());
}

double output_snr(const Matrix& clean, const Matrix& estimate) {
  if (clean.rows() != estimate.rows() || clean.cols() != estimate.cols())
    throw InvalidArgument("output_snr: shape mismatch");
  const double err = (estimate - clean).squaredNorm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(clean.squaredNorm() / err);
}

Vector per_sample_snr(const Matrix& clean, const Matrix& estimate) {
  if (clean.rows() != estimate.rows() || clean.cols() != estimate.cols())
    throw InvalidArgument("per_sample_snr: shape mismatch");
  Vector out(clean.cols());
  for (Index i = 0; i < clean.cols(); ++i) {
    const double err = (estimate.col(i) - clean.col(i)).squaredNorm();
    out(i) = err == 0.0 ? std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(clean.col(i).squaredNorm() / err);
  }
  return out;
}

double recall_at_k(const Eigen::Ref<const Vector>& h_true, const Eigen::Ref<const Vector>& scores, Index k) {
  if (h_true.size() != scores.size()) throw InvalidArgument("recall_at_k: length mismatch");
  if (k < 0 || k > scores.size()) throw InvalidArgument("recall_at_k: k must lie in [0, C]");
  const Index relevant = (h_true.array() != 0.0).count();
  if (relevant == 0) return 1.0;
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) > scores(b); });
  Index hits = 0;
  for (Index r = 0; r < k; ++r) hits += h_true(order[static_cast<std::size_t>(r)]) != 0.0;
  return static_cast<double>(hits) / static_cast<double>(relevant);
}

}  // namespace msbdl
