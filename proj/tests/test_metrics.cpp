#include <doctest.h>

#include "msbdl/error.hpp"
#include "msbdl/metrics.hpp"
#include "support.hpp"

#include <cmath>
#include <limits>

using namespace msbdl;
using msbdl::testing::gaussian;
using msbdl::testing::max_abs;

namespace {

// Columns of d permuted, sign-flipped and rescaled.
Matrix scrambled(const Matrix& d, std::mt19937_64& rng) {
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(d.cols());
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + d.cols(), rng);
  Matrix out = d * perm;
  for (Index m = 0; m < out.cols(); ++m) out.col(m) *= (m % 2 ? -1.0 : 1.0) * (1.0 + 0.1 * static_cast<double>(m));
  return out;
}

}  // namespace

TEST_CASE("atom recovery is invariant to order, sign and scale") {
  std::mt19937_64 rng(41);
  const Matrix d = normalize_columns(gaussian(20, 50, rng));
  CHECK(recovery_probability(d, scrambled(d, rng)) == 1.0);
  CHECK(atom_alignment(d.col(3), d) == doctest::Approx(1.0));
  // an unrelated dictionary in 20 dimensions essentially never matches
  CHECK(recovery_probability(d, normalize_columns(gaussian(20, 50, rng))) == 0.0);
  // half the atoms replaced
  Matrix half = d;
  half.rightCols(25) = normalize_columns(gaussian(20, 25, rng));
  CHECK(recovery_probability(d, half) == doctest::Approx(0.5));
  // threshold is strict
  Matrix tilted = d;
  tilted.col(0) = 0.99 * d.col(0) + std::sqrt(1 - 0.99 * 0.99) * (Matrix::Identity(20, 20) - d.col(0) * d.col(0).transpose()).col(1).normalized();
  CHECK(atom_alignment(d.col(0), tilted.col(0)) == doctest::Approx(0.99).epsilon(1e-9));
  CHECK_THROWS_AS(atom_alignment(Vector::Zero(20), d), InvalidArgument);
}

TEST_CASE("principal-angle alignment") {
  Matrix v1(3, 1), v2(3, 1);
  const double theta = 0.3;
  v1 << 1, 0, 0;
  v2 << std::cos(theta), std::sin(theta), 0;
  CHECK(basis_alignment(v1, v2) == doctest::Approx(std::cos(theta)).epsilon(1e-14));

  Matrix p1(4, 2), p2(4, 2);
  p1 << 1, 0, 0, 1, 0, 0, 0, 0;
  p2 << std::cos(0.2), 0, 0, std::cos(0.4), std::sin(0.2), 0, 0, std::sin(0.4);
  CHECK(basis_alignment(p1, p2) == doctest::Approx(std::cos(0.2) * std::cos(0.4)).epsilon(1e-14));
  CHECK(basis_alignment(p1, p1.col(0)) == 0.0);

  std::mt19937_64 rng(42);
  const Matrix block = gaussian(8, 3, rng);
  const Matrix q = orthonormal_basis(block);
  CHECK(max_abs(q.transpose() * q - Matrix::Identity(3, 3)) < 1e-13);
  // mixing the columns keeps the span
  const Matrix mixed = block * gaussian(3, 3, rng);
  CHECK(basis_alignment(q, orthonormal_basis(mixed)) == doctest::Approx(1.0).epsilon(1e-12));
  Matrix deficient(8, 2);
  deficient << block.col(0), 2.0 * block.col(0);
  CHECK_THROWS_AS(subspace_alignment(deficient, block, SupportTree::most_uniform(2, 3)), InvalidArgument);
}

TEST_CASE("branch scores") {
  std::mt19937_64 rng(43);
  const SupportTree tree({{0, 3}, {1}, {2, 4}});
  const Matrix d2 = normalize_columns(gaussian(10, 5, rng));
  SUBCASE("perfect recovery") {
    const auto v = vartheta_scores(d2, d2, tree, tree);
    CHECK(v.first == 1.0);
    CHECK(v.second == 1.0);
    const auto r = varrho_scores(d2, d2, tree);
    CHECK(r.first == 1.0);
    CHECK(r.second == 1.0);
  }
  SUBCASE("a learned branch spanning the same plane with other atoms") {
    Matrix learned = d2;
    const Matrix rot = (Matrix(2, 2) << 0.6, -0.8, 0.8, 0.6).finished();
    Matrix pair(10, 2);
    pair << d2.col(0), d2.col(3);
    const Matrix turned = pair * rot;
    learned.col(0) = turned.col(0);
    learned.col(3) = turned.col(1);
    const auto v = vartheta_scores(d2, learned, tree, tree);
    CHECK(v.second == 1.0);
    const auto r = varrho_scores(d2, learned, tree);
    CHECK(r.first == 1.0);
    CHECK(r.second == doctest::Approx(0.5));  // leaves 2 and 4 still match, 0 and 3 do not
  }
  SUBCASE("trees without multi-leaf branches report one score") {
    const auto single = SupportTree::singleton(5);
    const auto v = vartheta_scores(d2, d2, single, single);
    CHECK(v.first == 1.0);
    CHECK_FALSE(v.second.has_value());
  }
  SUBCASE("branch sizes") {
    const Matrix d1 = normalize_columns(gaussian(10, 3, rng));
    CHECK(branch_sizes_agree(d1, d1, tree, tree));
    const SupportTree swapped({{0}, {1, 3}, {2, 4}});
    CHECK_FALSE(branch_sizes_agree(d1, d1, tree, swapped));
    CHECK_FALSE(branch_sizes_agree(d1, d1, tree, SupportTree({{0, 1, 3}, {2}, {4}})));
    // roots learned in another order still match by alignment
    Matrix d1p(10, 3);
    d1p << d1.col(2), d1.col(1), d1.col(0);
    CHECK(branch_sizes_agree(d1, d1p, tree, SupportTree({{0, 4}, {1}, {2, 3}})));
  }
}

TEST_CASE("support agreement") {
  Matrix x1(4, 3), x2(4, 3);
  x1 << 1, 0, 1,
        0, 1, 0,
        2, 0, 1e-5,
        0, 0, 0;
  x2 << -3, 0, 1,
         0, 2, 1,
         1, 0, 0,
         1e-4, 0, 0;
  // sample 0 agrees (1e-4 is below 1e-3 of 3), sample 1 agrees, sample 2 differs
  CHECK(support_agreement({x1, x2}) == doctest::Approx(2.0 / 3.0));
  CHECK(support_agreement({x1}) == 1.0);
  CHECK_THROWS_AS(support_agreement({x1, Matrix::Zero(3, 3)}), InvalidArgument);
}

TEST_CASE("cross-modal map") {
  std::mt19937_64 rng(44);
  const Matrix p = gaussian(5, 7, rng);
  const Matrix x2 = gaussian(7, 40, rng);
  CHECK(max_abs(cross_modal_map(p * x2, x2) - p) < 1e-10);
  // singular X2: rows 5 and 6 never used; minimal-norm solution leaves them at zero
  Matrix sparse = x2;
  sparse.bottomRows(2).setZero();
  const Matrix est = cross_modal_map(p * sparse, sparse);
  CHECK(max_abs(est.leftCols(5) - p.leftCols(5)) < 1e-10);
  CHECK(max_abs(est.rightCols(2)) < 1e-12);
}

TEST_CASE("signal-to-noise ratios") {
  Matrix clean(2, 2), est(2, 2);
  clean << 3, 0, 4, 1;
  est << 3, 0, 4, 0;
  CHECK(output_snr(clean, est) == doctest::Approx(10.0 * std::log10(26.0)));
  const Vector per = per_sample_snr(clean, est);
  CHECK(std::isinf(per(0)));
  CHECK(per(1) == doctest::Approx(0.0));
  CHECK(std::isinf(output_snr(clean, clean)));
}

TEST_CASE("recall at k") {
  Vector h(5), s(5);
  h << 1, 0, 1, 0, 1;
  s << 0.9, 0.8, 0.1, 0.7, 0.95;
  CHECK(recall_at_k(h, s, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(recall_at_k(h, s, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(recall_at_k(h, s, 5) == 1.0);
  CHECK(recall_at_k(Vector::Zero(5), s, 2) == 1.0);
  Vector tie = Vector::Ones(5);
  Vector first(5);
  first << 1, 0, 0, 0, 0;
  CHECK(recall_at_k(first, tie, 1) == 1.0);
  CHECK_THROWS_AS(recall_at_k(h, s, 6), InvalidArgument);
}

TEST_CASE("denoising through the cross-modal map") {
  std::mt19937_64 rng(45);
  ModelState model;
  const Matrix d = normalize_columns(gaussian(12, 20, rng));
  model.dictionaries = {d, d};
  model.sigmas = {1e-3, 1e-3};
  model.prior = PriorSpec::one_to_one(20);
  model.gammas = Matrix::Ones(20, 1);
  Matrix x = Matrix::Zero(20, 30);
  std::uniform_int_distribution<Index> pick(0, 19);
  std::normal_distribution<double> n;
  for (Index i = 0; i < 30; ++i)
    for (int k = 0; k < 2; ++k) x(pick(rng), i) = 1.0 + std::abs(n(rng));
  const Matrix clean = d * x;
  const Matrix out = denoise(model, Matrix::Identity(20, 20), clean, 200);
  CHECK(output_snr(clean, out) > 40.0);
  CHECK_THROWS_AS(denoise(model, Matrix::Identity(19, 20), clean), InvalidArgument);
}
