#include <doctest.h>

#include "msbdl/error.hpp"
#include "msbdl/model.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>

using namespace msbdl;
using msbdl::testing::gaussian;

namespace {

// Random tree over m2 leaves with k nonempty branches.
SupportTree random_tree(Index k, Index m2, std::mt19937_64& rng) {
  std::vector<Index> leaves(static_cast<std::size_t>(m2));
  std::iota(leaves.begin(), leaves.end(), 0);
  std::shuffle(leaves.begin(), leaves.end(), rng);
  std::vector<std::vector<Index>> sets(static_cast<std::size_t>(k));
  for (Index i = 0; i < m2; ++i) {
    if (i < k)
      sets[static_cast<std::size_t>(i)].push_back(leaves[static_cast<std::size_t>(i)]);
    else
      sets[std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(k - 1))(rng)].push_back(
          leaves[static_cast<std::size_t>(i)]);
  }
  return SupportTree(sets);
}

}  // namespace

TEST_CASE("support tree rejects overlap, gaps and empty branches") {
  CHECK_THROWS_AS(SupportTree({{0, 1}, {1}}), InvalidArgument);
  CHECK_THROWS_AS(SupportTree({{0}, {}}), InvalidArgument);
  CHECK_THROWS_AS(SupportTree({{0}, {2}}), InvalidArgument);
  const SupportTree t({{2, 0}, {1}});
  CHECK(t.root_of(0) == 0);
  CHECK(t.root_of(1) == 1);
  CHECK(t.root_of(2) == 0);
}

TEST_CASE("most uniform tree pairs k with k + M1") {
  const auto t = SupportTree::most_uniform(50, 60);
  CHECK(t.branch_count() == 50);
  CHECK(t.leaf_count() == 60);
  for (Index k = 0; k < 50; ++k) {
    if (k < 10) {
      CHECK(t.leaves(k) == std::vector<Index>{k, k + 50});
    } else {
      CHECK(t.leaves(k) == std::vector<Index>{k});
    }
  }
  const auto full = SupportTree::most_uniform(50, 100);
  for (Index k = 0; k < 50; ++k) CHECK(full.branch_size(k) == 2);
}

TEST_CASE("selectors for singleton branches are identities") {
  const auto s = build_selectors(SupportTree::singleton(3));
  CHECK(s.s1 == Matrix::Identity(3, 3));
  CHECK(s.r1 == Matrix::Identity(3, 3));
  Matrix s2(6, 3);
  s2 << Matrix::Identity(3, 3), Matrix::Identity(3, 3);
  CHECK(s.s2 == s2);
  CHECK(s.r2 == 0.5 * Matrix::Identity(3, 3));
}

TEST_CASE("selectors for a two-branch tree") {
  const auto s = build_selectors(SupportTree({{0, 1}, {2}}));
  Matrix expected(3, 2);
  expected << 1, 0, 1, 0, 0, 1;
  CHECK(s.s1 == expected);
  CHECK(s.r1(0, 0) == 0.5);
  CHECK(s.r1(1, 1) == 1.0);
  CHECK(s.r1(0, 1) == 0.0);
}

TEST_CASE("selector identities hold on random trees") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto tree = random_tree(10, 25, rng);
    for (const SupportTree& t : {tree, balance_tree(tree).tree}) {
      const auto s = build_selectors(t);
      const Index k = t.branch_count(), m2 = t.leaf_count();
      CHECK(testing::max_abs(s.s1.transpose() * s.s1 * s.r1 - Matrix::Identity(k, k)) < 1e-12);
      CHECK(testing::max_abs(s.s2.transpose() * s.s2 * s.r2 - Matrix::Identity(m2, m2)) < 1e-12);
      for (Index m = 0; m < m2; ++m) CHECK(s.s1.row(m).sum() == 1.0);
      const Vector x1 = gaussian(k, 1, rng);
      CHECK((s.s1.transpose() * (s.s1 * s.r1 * x1) - x1).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("balance_tree") {
  SUBCASE("balanced tree is unchanged") {
    const SupportTree t({{0, 3}, {1, 2}});
    const auto b = balance_tree(t);
    CHECK(b.padded_count == 0);
    CHECK(b.tree == t);
  }
  SUBCASE("sizes {1, 2} become {2, 2}") {
    const auto b = balance_tree(SupportTree({{0}, {1, 2}}));
    CHECK(b.padded_count == 1);
    CHECK(b.tree.branch_size(0) == 2);
    CHECK(b.tree.branch_size(1) == 2);
    CHECK(b.tree.leaves(0) == std::vector<Index>{0, 3});
  }
  SUBCASE("50 roots over 60 leaves pad to 100") {
    const auto b = balance_tree(SupportTree::most_uniform(50, 60));
    CHECK(b.padded_count == 40);
    CHECK(b.tree.leaf_count() == 100);
    CHECK(b.tree.balanced());
    // padding goes after the original leaves
    for (Index k = 0; k < 50; ++k) CHECK(b.tree.leaves(k).front() == k);
  }
  SUBCASE("round robin over the smallest branches") {
    const auto b = balance_tree(SupportTree({{0, 1, 2}, {3}, {4}}));
    CHECK(b.padded_count == 4);
    CHECK(b.tree.leaves(1) == std::vector<Index>{3, 5, 7});
    CHECK(b.tree.leaves(2) == std::vector<Index>{4, 6, 8});
  }
}

TEST_CASE("without_leaf renumbers") {
  const SupportTree t({{0, 3}, {1, 2}});
  const auto r = t.without_leaf(1);
  CHECK(r.leaves(0) == std::vector<Index>{0, 2});
  CHECK(r.leaves(1) == std::vector<Index>{1});
  CHECK_THROWS_AS(SupportTree({{0}, {1}}).without_leaf(0), InvalidArgument);
}

TEST_CASE("normalize_columns") {
  Matrix d(2, 1);
  d << 3, 4;
  const Matrix n = normalize_columns(d);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(1, 0) == doctest::Approx(0.8).epsilon(1e-15));

  std::mt19937_64 rng(3);
  const Matrix r = normalize_columns(gaussian(20, 50, rng));
  CHECK((r.colwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(testing::max_abs(normalize_columns(r) - r) < 1e-15);

  Matrix z = Matrix::Ones(3, 3);
  z.col(1).setZero();
  try {
    normalize_columns(z);
    FAIL("expected an exception");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find('1') != std::string::npos);
  }
}

TEST_CASE("dataset validation") {
  MultimodalDataset ds;
  ds.modalities = {Matrix::Ones(3, 5), Matrix::Ones(2, 5)};
  CHECK_NOTHROW(ds.validate());
  CHECK(ds.sample_count() == 5);
  CHECK(ds.modality_dims() == std::vector<Index>{3, 2});
  ds.modalities[1] = Matrix::Ones(2, 4);
  CHECK_THROWS_AS(ds.validate(), InvalidArgument);
  ds.modalities[1] = Matrix::Ones(2, 5);
  Matrix h = Matrix::Zero(2, 5);
  h.row(0).setOnes();
  ds.labels = h;
  CHECK_NOTHROW(ds.validate());
  CHECK(ds.one_of_c());
  (*ds.labels)(1, 2) = 1.0;
  CHECK_NOTHROW(ds.validate());
  CHECK_FALSE(ds.one_of_c());
  (*ds.labels)(1, 2) = 0.5;
  CHECK_THROWS_AS(ds.validate(), InvalidArgument);
  (*ds.labels)(1, 2) = 0.0;
  ds.modalities[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(ds.validate(), InvalidArgument);
}

TEST_CASE("prior specs") {
  const auto tree = SupportTree::most_uniform(3, 5);
  CHECK(PriorSpec::one_to_one(7).hyper_dim() == 7);
  CHECK(PriorSpec::atom_to_subspace(tree).hyper_dim() == 3);
  CHECK(PriorSpec::hierarchical(tree).hyper_dim() == 10);
  CHECK(PriorSpec::hierarchical(tree).atom_counts(2) == std::vector<Index>{3, 5});
  CHECK_THROWS_AS(PriorSpec::hierarchical(tree).validate(3), InvalidArgument);
  CHECK(parse_prior_kind(to_string(PriorKind::hierarchical)) == PriorKind::hierarchical);
}

TEST_CASE("annealing defaults") {
  const auto two = AnnealSchedule::defaults(2);
  CHECK(two.sigma0[0] == 1.0);
  CHECK(two.sigma0[1] == doctest::Approx(std::sqrt(10.0)));
  CHECK(two.alpha_sigma == doctest::Approx(std::sqrt(0.995)));
  CHECK(two.sigma_inf == doctest::Approx(std::sqrt(1e-3)));
  const auto three = AnnealSchedule::defaults(3);
  CHECK(three.sigma0[1] == doctest::Approx(std::sqrt(1.5)));
  CHECK(three.sigma0[2] == doctest::Approx(std::sqrt(2.0)));
  AnnealSchedule bad = two;
  bad.alpha_sigma = 1.0;
  CHECK_THROWS_AS(bad.validate(2, false), InvalidArgument);
  bad = two;
  bad.sigma0[0] = bad.sigma_inf;
  CHECK_THROWS_AS(bad.validate(2, false), InvalidArgument);
}
