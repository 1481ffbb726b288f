#include <doctest.h>

#include "engine.hpp"
#include "msbdl/em.hpp"
#include "msbdl/error.hpp"
#include "msbdl/layout.hpp"
#include "msbdl/metrics.hpp"
#include "msbdl/synthetic.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace msbdl;
using msbdl::testing::dense_inverse;
using msbdl::testing::gaussian;
using msbdl::testing::max_abs;
using msbdl::testing::positive;

namespace {

PosteriorStats stats_of(const Matrix& means, const Matrix& vars) {
  PosteriorStats s;
  s.means = means;
  s.variances = vars;
  return s;
}

PosteriorStats one_column(const Vector& mean, const Vector& var) { return stats_of(Matrix(mean), Matrix(var)); }

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.dims = {8, 8};
  spec.atoms = {12, 12};
  spec.sparsity = 2;
  spec.samples = 120;
  spec.snr_db = {30, 20};
  spec.seed = seed;
  return spec;
}

RunConfig short_run(std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.max_outer_iters = 25;
  cfg.record_inner = true;
  return cfg;
}

bool identical(const FitResult& a, const FitResult& b) {
  if (a.model.dictionaries.size() != b.model.dictionaries.size()) return false;
  for (std::size_t j = 0; j < a.model.dictionaries.size(); ++j) {
    if (a.model.dictionaries[j] != b.model.dictionaries[j]) return false;
    if (a.codes[j] != b.codes[j]) return false;
  }
  return a.model.gammas == b.model.gammas && a.model.sigmas == b.model.sigmas &&
         a.report.loglik_trace == b.report.loglik_trace;
}

}  // namespace

TEST_CASE("gamma update, one-to-one") {
  Vector m1(3), v1(3), m2(3), v2(3);
  m1 << 1.0, 0.0, -2.0;
  v1 << 0.5, 0.25, 0.0;
  m2 << 0.0, 0.0, 2.0;
  v2 << 0.5, 0.25, 1.0;
  const auto s1 = one_column(m1, v1), s2 = one_column(m2, v2);
  const Vector g = update_gamma_one_to_one({&s1, &s2}, 0);
  CHECK(g(0) == 1.0);   // (1.5 + 0.5) / 2
  CHECK(g(1) == 0.25);  // (0.25 + 0.25) / 2
  CHECK(g(2) == 4.5);   // (4 + 5) / 2
  const auto z = one_column(Vector::Zero(3), Vector::Zero(3));
  CHECK(update_gamma_one_to_one({&z}, 0) == Vector::Constant(3, kGammaFloor));
  CHECK_THROWS_AS(update_gamma_one_to_one({&s1}, 1), InvalidArgument);
}

TEST_CASE("gamma update, atom-to-subspace") {
  const SupportTree tree({{0, 2}, {1}});
  Vector r(2), rv(2), l(3), lv(3);
  r << 1.0, 2.0;
  rv << 0.0, 0.0;
  l << 1.0, 3.0, 2.0;
  lv << 1.0, 0.0, 0.0;
  const Vector g = update_gamma_a2s(one_column(r, rv), one_column(l, lv), tree, 0);
  CHECK(g(0) == doctest::Approx((1.0 + 2.0 + 4.0) / 3.0));
  CHECK(g(1) == doctest::Approx((4.0 + 9.0) / 2.0));
}

TEST_CASE("gamma update, hierarchical") {
  Vector a(2), av(2), b(4), bv(4);
  a << 1.0, 0.0;
  av << 0.0, 1.0;
  b << 3.0, 0.0, 2.0, 0.0;
  bv << 0.0, 1.0, 0.0, 0.0;
  const Vector g = update_gamma_hier(one_column(a, av), one_column(b, bv), 2, 0);
  CHECK(g(0) == 5.0);  // (1 + 9) / 2
  CHECK(g(1) == 1.0);  // (1 + 1) / 2
  CHECK(g(2) == 4.0);
  CHECK(g(3) == kGammaFloor);
}

TEST_CASE("trainer pooling matches the per-prior gamma updates") {
  std::mt19937_64 rng(21);
  SUBCASE("atom-to-subspace") {
    const SupportTree tree({{0, 3}, {1}, {2, 4}});
    const auto layout = make_layout(PriorSpec::atom_to_subspace(tree), 2);
    const Matrix d1 = gaussian(6, 3, rng), d2 = gaussian(6, 5, rng);
    const Vector y1 = gaussian(6, 1, rng), y2 = gaussian(6, 1, rng);
    const Vector g = positive(3, rng);
    const auto r1 = detail::infer_sample(d1, layout.modalities[0], g, 0.5, y1, detail::EngineOptions{});
    const auto r2 = detail::infer_sample(d2, layout.modalities[1], g, 0.5, y2, detail::EngineOptions{});
    const Vector pooled = pool_hyperparameters(layout, {&r1.lifted_mean, &r2.lifted_mean},
                                               {&r1.lifted_var, &r2.lifted_var}, g);
    // reference statistics straight from the dense posterior
    Vector c2(5);
    for (Index m = 0; m < 5; ++m) c2(m) = g(tree.root_of(m));
    const auto p1 = posterior_exact(d1, y1, g, 0.5);
    const auto p2 = posterior_exact(d2, y2, c2, 0.5);
    const Vector expected = update_gamma_a2s(one_column(p1.mean, p1.covariance.diagonal()),
                                             one_column(p2.mean, p2.covariance.diagonal()), tree, 0);
    CHECK(max_abs(pooled - expected) < 1e-10);
  }
  SUBCASE("hierarchical") {
    const SupportTree tree({{0, 2}, {1, 3}});
    const auto sel = build_selectors(tree);
    const auto layout = make_layout(PriorSpec::hierarchical(tree), 2);
    const Matrix d1 = gaussian(6, 2, rng), d2 = gaussian(6, 4, rng);
    const Vector y1 = gaussian(6, 1, rng), y2 = gaussian(6, 1, rng);
    const Vector g = positive(8, rng);
    const auto r1 = detail::infer_sample(d1, layout.modalities[0], g, 0.5, y1, detail::EngineOptions{});
    const auto r2 = detail::infer_sample(d2, layout.modalities[1], g, 0.5, y2, detail::EngineOptions{});
    const Vector pooled = pool_hyperparameters(layout, {&r1.lifted_mean, &r2.lifted_mean},
                                               {&r1.lifted_var, &r2.lifted_var}, g);
    const auto h1 = posterior_hier(d1, sel, 1, y1, g.head(4), 0.5);
    const auto h2 = posterior_hier(d2, sel, 2, y2, g, 0.5);
    const Vector expected = update_gamma_hier(one_column(h1.mean, h1.covariance.diagonal()),
                                              one_column(h2.mean, h2.covariance.diagonal()), 4, 0);
    CHECK(max_abs(pooled - expected) < 1e-10);
  }
}

TEST_CASE("dictionary update") {
  std::mt19937_64 rng(22);
  SUBCASE("explicit inverse oracle") {
    const Matrix y = gaussian(6, 40, rng), u = gaussian(9, 40, rng);
    const Matrix b = gaussian(9, 9, rng);
    const Matrix sum_sigma = b * b.transpose();
    Matrix expected = y * u.transpose() * dense_inverse(u * u.transpose() + sum_sigma);
    for (Index m = 0; m < expected.cols(); ++m) expected.col(m).normalize();
    CHECK(max_abs(update_dictionary(y, u, sum_sigma) - expected) < 1e-10);
  }
  SUBCASE("noiseless codes recover the generating dictionary") {
    const Matrix d = normalize_columns(gaussian(6, 9, rng));
    const Matrix u = gaussian(9, 40, rng);
    CHECK(max_abs(update_dictionary(d * u, u, Matrix::Zero(9, 9)) - d) < 1e-10);
  }
  SUBCASE("hierarchical form") {
    const SupportTree tree({{0, 2}, {1, 3}});
    const auto sel = build_selectors(tree);
    const Matrix y = gaussian(5, 30, rng), uh = gaussian(8, 30, rng);
    const Matrix b = gaussian(8, 8, rng);
    const Matrix ss = b * b.transpose();
    const Matrix u = sel.s2.transpose() * uh;
    const Matrix a = sel.s2.transpose() * (uh * uh.transpose() + ss) * sel.s2;
    Matrix expected = y * u.transpose() * dense_inverse(a);
    for (Index m = 0; m < expected.cols(); ++m) expected.col(m).normalize();
    CHECK(max_abs(update_dictionary_hier(y, uh, ss, sel, 2) - expected) < 1e-10);
    CHECK_THROWS_AS(update_dictionary_hier(y, uh, ss, sel, 3), InvalidArgument);
  }
}

TEST_CASE("sigma annealing") {
  const auto sched = AnnealSchedule::defaults(2);
  CHECK(anneal_sigma(1.0, -1.0, sched) == doctest::Approx(sched.alpha_sigma));
  CHECK(anneal_sigma(1.0, 0.0, sched) == 1.0);
  CHECK(anneal_sigma(1.0, 3.0, sched) == 1.0);
  CHECK(anneal_sigma(sched.sigma_inf * 1.0001, -1.0, sched) == sched.sigma_inf);
  CHECK(anneal_sigma(sched.sigma_inf, -1.0, sched) == sched.sigma_inf);

  SUBCASE("likelihood rule agrees with the derivative rule as alpha approaches 1") {
    std::mt19937_64 rng(23);
    AnnealSchedule near = sched;
    near.alpha_sigma = 1.0 - 1e-7;
    near.sigma_inf = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
      const Matrix d = gaussian(6, 10, rng);
      const Matrix y = gaussian(6, 4, rng);
      Matrix g(10, 4);
      for (Index i = 0; i < 4; ++i) g.col(i) = positive(10, rng, 0.01, 0.5);
      const double sigma = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
      std::vector<Posterior> posts;
      for (Index i = 0; i < 4; ++i) posts.push_back(posterior_exact(d, y.col(i), g.col(i), sigma));
      const double der = sigma_loglik_derivative(d, y, g, sigma, PosteriorStats::from(posts));
      if (std::abs(der) < 1e-3) continue;  // too flat to resolve the proposal difference
      CHECK(anneal_sigma(sigma, der, near) == anneal_sigma_likelihood(sigma, d, y, g, near));
    }
  }
}

TEST_CASE("dictionary cleaning") {
  std::mt19937_64 rng(24);
  const Matrix d = normalize_columns(gaussian(6, 5, rng));
  Matrix u = gaussian(5, 30, rng);
  const Matrix y = gaussian(6, 30, rng);
  SUBCASE("a clean dictionary is left alone") {
    const auto r = clean_dictionary(d, u, y, 0.99, 1e-3);
    CHECK(r.replaced.empty());
    CHECK(r.dictionary == d);
  }
  SUBCASE("duplicate atom: the less used copy is replaced by the worst-fit column") {
    Matrix dup = d;
    dup.col(3) = -d.col(1);
    u.row(3) *= 0.1;
    const auto r = clean_dictionary(dup, u, y, 0.99, 1e-3);
    REQUIRE(r.replaced == std::vector<Index>{3});
    const Vector residual = (y - dup * u).colwise().norm().transpose();
    Index worst = 0;
    residual.maxCoeff(&worst);
    CHECK(r.data_columns.front() == worst);
    CHECK(max_abs(r.dictionary.col(3) - y.col(worst).normalized()) < 1e-15);
  }
  SUBCASE("unused atom") {
    u.row(2).setZero();
    const auto r = clean_dictionary(d, u, y, 0.99, 1e-3);
    CHECK(r.replaced == std::vector<Index>{2});
    CHECK(std::abs(r.dictionary.col(2).norm() - 1.0) < 1e-14);
  }
}

TEST_CASE("pruning") {
  std::mt19937_64 rng(25);
  SUBCASE("coherent branch loses its less used leaf") {
    const SupportTree tree({{0, 2}, {1, 3}});
    Matrix d = normalize_columns(gaussian(6, 4, rng));
    d.col(2) = d.col(0);
    Matrix usage = Matrix::Ones(4, 10);
    usage.row(0) *= 0.5;  // leaf 0 is used less than its twin
    const auto r = prune(d, usage, tree, 1, 0.9);
    CHECK(r.removed == std::vector<Index>{0});
    CHECK(r.tree.branch_size(0) == 1);
    CHECK(r.tree.branch_size(1) == 2);
    CHECK(r.dictionary.cols() == 3);
  }
  SUBCASE("otherwise the globally least used removable leaf goes") {
    const SupportTree tree({{0, 2}, {1, 3}});
    const Matrix d = Matrix::Identity(4, 4);
    Matrix usage = Matrix::Ones(4, 10);
    usage.row(3) *= 0.1;
    usage.row(2) *= 0.2;
    const auto r = prune(d, usage, tree, 2, 0.9);
    CHECK(r.removed == std::vector<Index>{3, 2});
    CHECK(r.tree.branch_size(0) == 1);
    CHECK(r.tree.branch_size(1) == 1);
  }
  SUBCASE("never empties a branch") {
    const SupportTree tree({{0, 2}, {1, 3}});
    const Matrix d = Matrix::Identity(4, 4);
    Matrix usage = Matrix::Ones(4, 10);
    usage.row(0).setZero();
    usage.row(2).setZero();
    const auto r = prune(d, usage, tree, 2, 0.9);
    CHECK(r.tree.branch_size(0) == 1);
    CHECK(r.tree.branch_size(1) == 1);
    CHECK_THROWS_AS(prune(d, usage, tree, 3, 0.9), InvalidArgument);
  }
}

TEST_CASE("run configuration validation") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate(10, 2));
  cfg.batch_size = 11;
  CHECK_THROWS_AS(cfg.validate(10, 2), InvalidArgument);
  cfg = RunConfig{};
  cfg.inner_tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(10, 2), InvalidArgument);
  cfg = RunConfig{};
  cfg.anneal = AnnealSchedule::defaults(3);
  CHECK_THROWS_AS(cfg.validate(10, 2), InvalidArgument);
  CHECK(parse_variant("MSBDL-3") == Variant::v3);
  CHECK_THROWS_AS(parse_variant("MSBDL-5"), InvalidArgument);
}

TEST_CASE("training loop properties") {
  const auto data = gen_one_to_one(small_spec(5));
  const auto prior = PriorSpec::one_to_one(12);

  SUBCASE("inner loop is monotone at fixed sigma") {
    const auto res = fit(data.dataset, prior, short_run(5));
    CHECK(res.report.inner_trace.size() == 25);
    for (const auto& tr : res.report.inner_trace)
      for (std::size_t k = 1; k < tr.size(); ++k) CHECK(tr[k] >= tr[k - 1] - 1e-8 * std::abs(tr[k - 1]));
    CHECK(res.report.loglik_trace.back() > res.report.loglik_trace.front());
  }
  SUBCASE("deterministic across reruns and thread counts") {
    const auto a = fit(data.dataset, prior, short_run(5));
    const auto b = fit(data.dataset, prior, short_run(5));
    CHECK(identical(a, b));
    RunConfig threaded = short_run(5);
    threaded.threads = 3;
    CHECK(identical(a, fit(data.dataset, prior, threaded)));
  }
  SUBCASE("incremental EM with a full batch is the full algorithm") {
    RunConfig inc = short_run(5);
    inc.variant = Variant::v1;
    inc.batch_size = data.dataset.sample_count();
    CHECK(identical(fit(data.dataset, prior, short_run(5)), fit(data.dataset, prior, inc)));
  }
  SUBCASE("every variant runs with mini-batches") {
    for (Variant v : {Variant::v1, Variant::v2, Variant::v3, Variant::v4}) {
      RunConfig cfg = short_run(5);
      cfg.variant = v;
      cfg.batch_size = 40;
      cfg.max_outer_iters = 10;
      const auto res = fit(data.dataset, prior, cfg);
      CHECK(res.report.iterations_run == 10);
      for (const auto& d : res.model.dictionaries) CHECK(((d.colwise().norm().array() - 1.0).abs() < 1e-12).all());
    }
  }
  SUBCASE("sigma stays within the schedule") {
    const auto res = fit(data.dataset, prior, short_run(5));
    const auto sched = AnnealSchedule::defaults(2);
    for (const auto& s : res.report.sigma_trace)
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(s[j] <= sched.sigma0[j]);
        CHECK(s[j] >= sched.sigma_inf);
      }
  }
}

TEST_CASE("structured runs rebalance and prune back to the input tree") {
  SyntheticSpec spec;
  spec.dims = {8, 10};
  spec.atoms = {6, 8};
  spec.sparsity = 2;
  spec.samples = 100;
  spec.snr_db = {30, 30};
  spec.seed = 9;
  spec.kind = PriorKind::atom_to_subspace;
  const auto data = gen_a2s(spec);
  const SupportTree& tree = *data.truth.tree;
  REQUIRE_FALSE(tree.balanced());
  for (const auto& prior : {PriorSpec::atom_to_subspace(tree), PriorSpec::hierarchical(tree)}) {
    RunConfig cfg = short_run(9);
    cfg.max_outer_iters = 15;
    const auto res = fit(data.dataset, prior, cfg);
    CHECK(res.model.dictionaries[1].cols() == 8);
    CHECK(res.codes[1].rows() == 8);
    CHECK(res.report.prune_log.size() == 4);
    const auto& pruned = *res.model.prior.tree;
    CHECK(pruned.branch_count() == 6);
    CHECK(pruned.leaf_count() == 8);
    CHECK(res.model.gammas.rows() == (prior.kind == PriorKind::hierarchical ? 16 : 6));
  }
}

TEST_CASE("fixed-dictionary inference finds the true supports") {
  SyntheticSpec spec = small_spec(7);
  spec.snr_db = {40, 40};
  const auto data = gen_one_to_one(spec);
  const auto res = infer_codes(data.truth.dictionaries, PriorSpec::one_to_one(12), {0.01, 0.01}, {0, 1},
                               data.dataset.modalities, 200, 1e-8);
  Index hits = 0;
  for (Index i = 0; i < 120; ++i) {
    std::vector<Index> order(12);
    std::iota(order.begin(), order.end(), Index{0});
    const Vector mag = res.codes[0].col(i).cwiseAbs();
    std::partial_sort(order.begin(), order.begin() + 2, order.end(), [&](Index a, Index b) { return mag(a) > mag(b); });
    if (data.truth.codes[0](order[0], i) != 0.0 && data.truth.codes[0](order[1], i) != 0.0) ++hits;
  }
  CHECK(hits >= 110);
  // a single modality of the same prior
  const auto one = infer_codes(data.truth.dictionaries, PriorSpec::one_to_one(12), {0.01, 0.01}, {1},
                               {data.dataset.modalities[1]}, 50);
  CHECK(one.codes.size() == 1);
  CHECK(one.codes[0].cols() == 120);
}
