#include <doctest.h>

#include "msbdl/error.hpp"
#include "msbdl/synthetic.hpp"
#include "support.hpp"

#include <cmath>
#include <limits>
#include <set>

using namespace msbdl;
using msbdl::testing::max_abs;

namespace {

std::set<Index> support(const Matrix& x, Index i) {
  std::set<Index> s;
  for (Index m = 0; m < x.rows(); ++m)
    if (x(m, i) != 0.0) s.insert(m);
  return s;
}

double snr(const Vector& clean, const Vector& noisy) {
  return 10.0 * std::log10(clean.squaredNorm() / (noisy - clean).squaredNorm());
}

SyntheticSpec bimodal() {
  SyntheticSpec spec;
  spec.dims = {10, 14};
  spec.atoms = {20, 20};
  spec.sparsity = 3;
  spec.samples = 200;
  spec.snr_db = {30, 10};
  spec.seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("one-to-one data") {
  const auto spec = bimodal();
  const auto data = gen_one_to_one(spec);
  REQUIRE(data.dataset.modalities.size() == 2);
  CHECK(data.dataset.modalities[0].rows() == 10);
  CHECK(data.dataset.modalities[1].rows() == 14);
  CHECK(data.dataset.sample_count() == 200);
  for (const auto& d : data.truth.dictionaries) CHECK(((d.colwise().norm().array() - 1.0).abs() < 1e-12).all());
  for (Index i = 0; i < 200; ++i) {
    const auto s1 = support(data.truth.codes[0], i);
    CHECK(s1.size() == 3);
    CHECK(s1 == support(data.truth.codes[1], i));
    for (std::size_t j = 0; j < 2; ++j) {
      const Vector clean = data.truth.dictionaries[j] * data.truth.codes[j].col(i);
      CHECK(max_abs(clean - data.truth.clean[j].col(i)) < 1e-14);
      CHECK(snr(clean, data.dataset.modalities[j].col(i)) == doctest::Approx(spec.snr_db[j]).epsilon(1e-9));
    }
  }
  // coefficients are drawn per modality
  CHECK(data.truth.codes[0] != data.truth.codes[1]);
}

TEST_CASE("generation is a pure function of the spec") {
  const auto a = gen_one_to_one(bimodal());
  const auto b = gen_one_to_one(bimodal());
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(a.dataset.modalities[j] == b.dataset.modalities[j]);
    CHECK(a.truth.dictionaries[j] == b.truth.dictionaries[j]);
  }
  auto other = bimodal();
  other.seed = 43;
  CHECK(gen_one_to_one(other).dataset.modalities[0] != a.dataset.modalities[0]);
  // more samples extend the stream without changing the first ones
  auto longer = bimodal();
  longer.samples = 250;
  CHECK(gen_one_to_one(longer).dataset.modalities[1].leftCols(200) == a.dataset.modalities[1]);
}

TEST_CASE("noiseless modalities") {
  auto spec = bimodal();
  spec.snr_db = {std::numeric_limits<double>::infinity(), 20};
  const auto data = gen_one_to_one(spec);
  CHECK(data.dataset.modalities[0] == data.truth.clean[0]);
}

TEST_CASE("atom-to-subspace data activates whole branches") {
  SyntheticSpec spec;
  spec.kind = PriorKind::atom_to_subspace;
  spec.dims = {10, 12};
  spec.atoms = {8, 12};
  spec.sparsity = 2;
  spec.samples = 100;
  spec.snr_db = {30, 30};
  spec.seed = 3;
  const auto data = generate(spec);
  const SupportTree& tree = *data.truth.tree;
  CHECK(tree == SupportTree::most_uniform(8, 12));
  for (Index i = 0; i < 100; ++i) {
    std::set<Index> expected;
    for (Index k : support(data.truth.codes[0], i))
      for (Index m : tree.leaves(k)) expected.insert(m);
    CHECK(support(data.truth.codes[1], i) == expected);
  }
}

TEST_CASE("hierarchical data activates leaves of active roots") {
  SyntheticSpec spec;
  spec.kind = PriorKind::hierarchical;
  spec.dims = {10, 12};
  spec.atoms = {4, 12};
  spec.tree = SupportTree({{0, 4, 8}, {1, 5, 9}, {2, 6, 10}, {3, 7, 11}});
  spec.sparsity = 2;
  spec.samples = 2000;
  spec.snr_db = {30, 30};
  spec.seed = 5;
  const auto data = generate(spec);
  const SupportTree& tree = *data.truth.tree;
  Index active_leaves = 0, candidate_leaves = 0;
  for (Index i = 0; i < 2000; ++i) {
    std::set<Index> allowed;
    for (Index k : support(data.truth.codes[0], i))
      for (Index m : tree.leaves(k)) allowed.insert(m);
    const auto leaves = support(data.truth.codes[1], i);
    for (Index m : leaves) CHECK(allowed.count(m) == 1);
    active_leaves += static_cast<Index>(leaves.size());
    candidate_leaves += static_cast<Index>(allowed.size());
  }
  const double rate = static_cast<double>(active_leaves) / static_cast<double>(candidate_leaves);
  CHECK(std::abs(rate - 0.5) < 0.03);
}

TEST_CASE("labeled data") {
  LabeledSpec spec;
  spec.dims = {8, 9};
  spec.atoms = 12;
  spec.classes = 3;
  spec.sparsity = 3;
  spec.samples = 300;
  spec.snr_db = {30, 30};
  spec.seed = 8;
  const auto data = gen_labeled(spec);
  REQUIRE(data.dataset.labels);
  CHECK(data.dataset.one_of_c());
  std::vector<Index> counts(3, 0);
  for (Index i = 0; i < 300; ++i) {
    Index c = 0;
    data.dataset.labels->col(i).maxCoeff(&c);
    ++counts[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < 2; ++j) {
      const auto& x = data.truth.codes[j];
      CHECK(x(c, i) >= 2.0);
      // only the class atom is active among the first C
      for (Index k = 0; k < 3; ++k)
        if (k != c) CHECK(x(k, i) == 0.0);
      CHECK(support(x, i).size() == 3);
    }
  }
  for (Index n : counts) CHECK(n > 60);
  CHECK_THROWS_AS(gen_labeled(LabeledSpec{{8}, 4, 3, 3, 10, {30}, 1}), InvalidArgument);
}

TEST_CASE("paired denoising data") {
  PairedSpec spec;
  spec.dim = 10;
  spec.atoms = 20;
  spec.sparsity = 3;
  spec.train_samples = 100;
  spec.test_samples = 50;
  spec.seed = 12;
  const auto data = gen_paired(spec);
  CHECK(data.train.sample_count() == 100);
  CHECK(data.test.sample_count() == 50);
  for (const auto* ds : {&data.train, &data.test})
    for (Index i = 0; i < ds->sample_count(); ++i)
      CHECK(snr(ds->modalities[0].col(i), ds->modalities[1].col(i)) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(((data.dictionary.colwise().norm().array() - 1.0).abs() < 1e-12).all());
}

TEST_CASE("noise helpers") {
  Vector y(4);
  y << 1, 2, 3, 4;
  const Vector a = add_noise_at_snr(y, 15.0, 7, 3);
  CHECK(a == add_noise_at_snr(y, 15.0, 7, 3));
  CHECK(a != add_noise_at_snr(y, 15.0, 7, 4));
  CHECK(measured_snr_db(y, a) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(std::isinf(measured_snr_db(y, y)));
}

TEST_CASE("spec validation") {
  auto spec = bimodal();
  spec.sparsity = 21;
  CHECK_THROWS_AS(gen_one_to_one(spec), InvalidArgument);
  spec = bimodal();
  spec.snr_db = {30};
  CHECK_THROWS_AS(gen_one_to_one(spec), InvalidArgument);
  spec = bimodal();
  spec.atoms = {20, 30};
  CHECK_THROWS_AS(gen_one_to_one(spec), InvalidArgument);
  spec = bimodal();
  spec.snr_db = {30, std::nan("")};
  CHECK_THROWS_AS(gen_one_to_one(spec), InvalidArgument);
  CHECK_THROWS_AS(gen_a2s(bimodal()), InvalidArgument);
}
