#include "msbdl/synthetic.hpp"

#include "msbdl/error.hpp"
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msbdl {

namespace {

Matrix random_dictionary(Index n, Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix d(n, m);
  for (Index c = 0; c < m; ++c)
    for (Index r = 0; r < n; ++r) d(r, c) = normal(rng);
  return normalize_columns(d);
}

// s distinct indices from [lo, hi), sorted.
std::vector<Index> choose(Index lo, Index hi, Index s, std::mt19937_64& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(hi - lo));
  std::iota(pool.begin(), pool.end(), lo);
  for (Index k = 0; k < s; ++k) {
    std::uniform_int_distribution<Index> pick(k, static_cast<Index>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(s));
  std::sort(pool.begin(), pool.end());
  return pool;
}

Vector with_noise(const Vector& clean, double snr, std::mt19937_64& rng) {
  if (std::isinf(snr) && snr > 0.0) return clean;
  std::normal_distribution<double> normal;
  Vector v(clean.size());
  for (Index r = 0; r < v.size(); ++r) v(r) = normal(rng);
  const double scale = clean.norm() / (v.norm() * std::pow(10.0, snr / 20.0));
  return clean + scale * v;
}

void check_snr(double snr) {
  if (std::isnan(snr) || (std::isinf(snr) && snr < 0.0)) throw InvalidArgument("SNR must be a number or +infinity");
}

enum class Law { shared, subspace, tree };

SyntheticData generate_impl(const SyntheticSpec& spec, Law law) {
  spec.validate();
  const std::size_t j_count = spec.dims.size();
  std::optional<SupportTree> tree;
  if (law != Law::shared) tree = spec.support_tree();

  SyntheticData out;
  auto dict_rng = detail::make_rng(spec.seed, detail::kStreamDictionaries);
  for (std::size_t j = 0; j < j_count; ++j) {
    out.truth.dictionaries.push_back(random_dictionary(spec.dims[j], spec.atoms[j], dict_rng));
    out.truth.codes.push_back(Matrix::Zero(spec.atoms[j], spec.samples));
    out.truth.clean.emplace_back(spec.dims[j], spec.samples);
    out.dataset.modalities.emplace_back(spec.dims[j], spec.samples);
  }
  out.truth.tree = tree;

  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index i = 0; i < spec.samples; ++i) {
    auto rng = detail::make_rng(spec.seed, detail::kStreamSamples, static_cast<std::uint64_t>(i));
    const auto roots = choose(0, spec.atoms[0], spec.sparsity, rng);
    std::vector<std::vector<Index>> supports(j_count, roots);
    if (law == Law::subspace || law == Law::tree) {
      std::vector<Index> leaves;
      for (Index k : roots)
        for (Index m : tree->leaves(k))
          if (law == Law::subspace || unit(rng) < spec.leaf_probability) leaves.push_back(m);
      std::sort(leaves.begin(), leaves.end());
      supports[1] = std::move(leaves);
    }
    for (std::size_t j = 0; j < j_count; ++j) {
      for (Index m : supports[j]) out.truth.codes[j](m, i) = normal(rng);
      const Vector clean = out.truth.dictionaries[j] * out.truth.codes[j].col(i);
      out.truth.clean[j].col(i) = clean;
      out.dataset.modalities[j].col(i) = with_noise(clean, spec.snr_db[j], rng);
    }
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  const std::size_t j_count = dims.size();
  if (j_count == 0) throw InvalidArgument("synthetic spec needs at least one modality");
  if (atoms.size() != j_count || snr_db.size() != j_count)
    throw InvalidArgument("synthetic spec: dims, atoms and snr_db need one entry per modality");
  for (std::size_t j = 0; j < j_count; ++j) {
    if (dims[j] < 1 || atoms[j] < 1) throw InvalidArgument("synthetic spec: dimensions must be positive");
    check_snr(snr_db[j]);
  }
  if (samples < 1) throw InvalidArgument("synthetic spec: samples must be >= 1");
  if (sparsity < 1 || sparsity >= atoms[0]) throw InvalidArgument("synthetic spec: need 1 <= s < M");
  if (kind == PriorKind::one_to_one) {
    for (Index m : atoms)
      if (m != atoms[0]) throw InvalidArgument("one-to-one data needs equal atom counts");
    return;
  }
  if (j_count != 2) throw InvalidArgument("structured synthetic data has exactly two modalities");
  if (!(leaf_probability >= 0.0 && leaf_probability <= 1.0))
    throw InvalidArgument("leaf_probability must lie in [0, 1]");
  const SupportTree t = support_tree();
  if (t.branch_count() != atoms[0] || t.leaf_count() != atoms[1])
    throw InvalidArgument("support tree does not match the atom counts");
}

SupportTree SyntheticSpec::support_tree() const {
  if (tree) return *tree;
  if (atoms.size() != 2) throw InvalidArgument("a support tree needs two modalities");
  return SupportTree::most_uniform(atoms[0], atoms[1]);
}

SyntheticData gen_one_to_one(const SyntheticSpec& spec) {
  if (spec.kind != PriorKind::one_to_one) throw InvalidArgument("gen_one_to_one needs a one-to-one spec");
  return generate_impl(spec, Law::shared);
}

SyntheticData gen_a2s(const SyntheticSpec& spec) {
  if (spec.kind != PriorKind::atom_to_subspace) throw InvalidArgument("gen_a2s needs an atom-to-subspace spec");
  return generate_impl(spec, Law::subspace);
}

SyntheticData gen_hier(const SyntheticSpec& spec) {
  if (spec.kind != PriorKind::hierarchical) throw InvalidArgument("gen_hier needs a hierarchical spec");
  return generate_impl(spec, Law::tree);
}

SyntheticData generate(const SyntheticSpec& spec) {
  switch (spec.kind) {
    case PriorKind::one_to_one: return gen_one_to_one(spec);
    case PriorKind::atom_to_subspace: return gen_a2s(spec);
    case PriorKind::hierarchical: return gen_hier(spec);
  }
  throw InvalidArgument("unknown prior kind");
}

SyntheticData gen_labeled(const LabeledSpec& spec) {
  const std::size_t j_count = spec.dims.size();
  if (j_count == 0 || spec.snr_db.size() != j_count)
    throw InvalidArgument("labeled spec needs one dim and one SNR per modality");
  if (spec.classes < 2 || spec.sparsity < 1 || spec.sparsity - 1 > spec.atoms - spec.classes)
    throw InvalidArgument("labeled spec: need C >= 2 and s - 1 <= M - C");
  if (spec.samples < 1) throw InvalidArgument("labeled spec: samples must be >= 1");
  for (double s : spec.snr_db) check_snr(s);

  SyntheticData out;
  auto dict_rng = detail::make_rng(spec.seed, detail::kStreamDictionaries);
  for (std::size_t j = 0; j < j_count; ++j) {
    out.truth.dictionaries.push_back(random_dictionary(spec.dims[j], spec.atoms, dict_rng));
    out.truth.codes.push_back(Matrix::Zero(spec.atoms, spec.samples));
    out.truth.clean.emplace_back(spec.dims[j], spec.samples);
    out.dataset.modalities.emplace_back(spec.dims[j], spec.samples);
  }
  Matrix labels = Matrix::Zero(spec.classes, spec.samples);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < spec.samples; ++i) {
    auto rng = detail::make_rng(spec.seed, detail::kStreamSamples, static_cast<std::uint64_t>(i));
    std::uniform_int_distribution<Index> pick(0, spec.classes - 1);
    const Index c = pick(rng);
    labels(c, i) = 1.0;
    const auto others = choose(spec.classes, spec.atoms, spec.sparsity - 1, rng);
    for (std::size_t j = 0; j < j_count; ++j) {
      auto& x = out.truth.codes[j];
      x(c, i) = 2.0 + std::abs(normal(rng));
      for (Index m : others) x(m, i) = normal(rng);
      const Vector clean = out.truth.dictionaries[j] * x.col(i);
      out.truth.clean[j].col(i) = clean;
      out.dataset.modalities[j].col(i) = with_noise(clean, spec.snr_db[j], rng);
    }
  }
  out.dataset.labels = std::move(labels);
  return out;
}

PairedData gen_paired(const PairedSpec& spec) {
  if (spec.dim < 1 || spec.atoms < 1 || spec.sparsity < 1 || spec.sparsity >= spec.atoms)
    throw InvalidArgument("paired spec: need positive dims and 1 <= s < M");
  if (spec.train_samples < 1 || spec.test_samples < 1) throw InvalidArgument("paired spec: empty split");
  check_snr(spec.clean_snr_db);
  check_snr(spec.noisy_snr_db);
  PairedData out;
  auto dict_rng = detail::make_rng(spec.seed, detail::kStreamDictionaries);
  out.dictionary = random_dictionary(spec.dim, spec.atoms, dict_rng);
  std::normal_distribution<double> normal;
  const auto fill = [&](MultimodalDataset& ds, Index count, Index offset) {
    ds.modalities.assign(2, Matrix(spec.dim, count));
    for (Index i = 0; i < count; ++i) {
      auto rng = detail::make_rng(spec.seed, detail::kStreamSamples, static_cast<std::uint64_t>(offset + i));
      Vector x = Vector::Zero(spec.atoms);
      for (Index m : choose(0, spec.atoms, spec.sparsity, rng)) x(m) = normal(rng);
      const Vector y1 = with_noise(out.dictionary * x, spec.clean_snr_db, rng);
      ds.modalities[0].col(i) = y1;
      ds.modalities[1].col(i) = with_noise(y1, spec.noisy_snr_db, rng);
    }
  };
  fill(out.train, spec.train_samples, 0);
  fill(out.test, spec.test_samples, spec.train_samples);
  return out;
}

Vector add_noise_at_snr(const Vector& y, double snr_db, std::uint64_t seed, std::uint64_t index) {
  check_snr(snr_db);
  auto rng = detail::make_rng(seed, detail::kStreamSamples, index);
  return with_noise(y, snr_db, rng);
}

double measured_snr_db(const Eigen::Ref<const Vector>& clean, const Eigen::Ref<const Vector>& noisy) {
  const double err = (noisy - clean).squaredNorm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(clean.squaredNorm() / err);
}

}  // namespace msbdl
