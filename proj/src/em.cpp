#include "msbdl/em.hpp"

#include "msbdl/error.hpp"
#include "msbdl/layout.hpp"
#include "trainer.hpp"

namespace msbdl {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "MSBDL";
    case Variant::v1: return "MSBDL-1";
    case Variant::v2: return "MSBDL-2";
    case Variant::v3: return "MSBDL-3";
    case Variant::v4: return "MSBDL-4";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::full, Variant::v1, Variant::v2, Variant::v3, Variant::v4})
    if (to_string(v) == name) return v;
  throw InvalidArgument("unknown variant '" + name + "' (expected MSBDL or MSBDL-1 .. MSBDL-4)");
}

bool is_incremental(Variant v) { return v == Variant::v1 || v == Variant::v2; }
bool is_batch(Variant v) { return v == Variant::v3 || v == Variant::v4; }
bool is_approximate(Variant v) { return v == Variant::v2 || v == Variant::v4; }

void RunConfig::validate(Index sample_count, Index modality_count) const {
  if (batch_size < 0 || batch_size > sample_count)
    throw InvalidArgument("batch_size must lie in [1, " + std::to_string(sample_count) + "] (0 selects all)");
  if (max_outer_iters < 1) throw InvalidArgument("max_outer_iters must be >= 1");
  if (max_inner_iters < 1) throw InvalidArgument("max_inner_iters must be >= 1");
  if (!(inner_tol > 0.0)) throw InvalidArgument("inner_tol must be positive");
  if (!(cg_tol > 0.0)) throw InvalidArgument("cg_tol must be positive");
  if (sigma_patience < 1) throw InvalidArgument("sigma_patience must be >= 1");
  if (cleaning.enabled) {
    if (cleaning.period < 1) throw InvalidArgument("cleaning period must be >= 1");
    if (!(cleaning.coherence > 0.0 && cleaning.coherence <= 1.0))
      throw InvalidArgument("cleaning coherence threshold must lie in (0, 1]");
    if (!(cleaning.energy >= 0.0)) throw InvalidArgument("cleaning energy threshold must be >= 0");
  }
  if (!(prune_epsilon >= 0.0 && prune_epsilon <= 1.0)) throw InvalidArgument("prune_epsilon must lie in [0, 1]");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
  if (!anneal.sigma0.empty() && static_cast<Index>(anneal.sigma0.size()) != modality_count)
    throw InvalidArgument("sigma0 needs one entry per modality");
}

FitResult fit(const MultimodalDataset& data, const PriorSpec& prior, const RunConfig& config) {
  return detail::train(data, prior, config, nullptr);
}

InferenceResult infer_codes(const std::vector<Matrix>& dictionaries, const PriorSpec& prior,
                            const std::vector<double>& sigmas, const std::vector<Index>& modalities,
                            const std::vector<Matrix>& y, Index iterations, double tol, Index threads) {
  const Index j_count = static_cast<Index>(dictionaries.size());
  if (static_cast<Index>(sigmas.size()) != j_count) throw InvalidArgument("need one sigma per dictionary");
  if (modalities.size() != y.size() || y.empty()) throw InvalidArgument("need one data matrix per selected modality");
  const PriorLayout layout = make_layout(prior, j_count).restricted(modalities);
  std::vector<const Matrix*> dicts;
  std::vector<double> s;
  std::vector<const Matrix*> ys;
  for (std::size_t k = 0; k < modalities.size(); ++k) {
    const Index j = modalities[k];
    if (j < 0 || j >= j_count) throw InvalidArgument("modality index " + std::to_string(j) + " out of range");
    if (layout.modalities[k].atoms != dictionaries[static_cast<std::size_t>(j)].cols())
      throw InvalidArgument("dictionary " + std::to_string(j + 1) + " does not match the prior");
    dicts.push_back(&dictionaries[static_cast<std::size_t>(j)]);
    s.push_back(sigmas[static_cast<std::size_t>(j)]);
    ys.push_back(&y[k]);
  }
  auto fixed = detail::run_fixed(dicts, layout, s, ys, iterations, tol, threads);
  InferenceResult out;
  out.gammas = std::move(fixed.gammas);
  out.codes = std::move(fixed.codes);
  out.loglik = fixed.loglik;
  out.iterations = fixed.iterations;
  return out;
}

}  // namespace msbdl
