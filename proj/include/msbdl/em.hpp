#pragma once

// M-step updates, noise annealing, dictionary cleaning, pruning and the EM
// training loop for the five learning variants.

#include "msbdl/model.hpp"
#include "msbdl/posterior.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace msbdl {

// full    : every sample, exact posterior
// v1 / v2 : incremental EM, exact / approximate posterior
// v3 / v4 : batch EM, exact / approximate posterior
enum class Variant { full, v1, v2, v3, v4 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);  // "MSBDL", "MSBDL-1", ..., "MSBDL-4"
bool is_incremental(Variant v);
bool is_batch(Variant v);
bool is_approximate(Variant v);

struct CleaningConfig {
  bool enabled = true;
  Index period = 50;
  double coherence = 0.99;
  double energy = 1e-3;  // fraction of the mean row energy of U
};

struct RunConfig {
  Variant variant = Variant::full;
  Index batch_size = 0;  // L_0; 0 means every sample
  Index max_outer_iters = 3000;
  Index max_inner_iters = 200;
  double inner_tol = 1e-6;
  AnnealSchedule anneal;  // empty sigma0 selects AnnealSchedule::defaults
  CleaningConfig cleaning;
  double prune_epsilon = 0.9;
  Index sigma_patience = 3;  // consecutive rejected proposals before sigma is converged
  double cg_tol = 1e-8;
  Index cg_max_iter = 0;
  std::uint64_t seed = 0;
  Index threads = 1;
  bool record_inner = false;  // keep the per-outer-iteration inner log-likelihood traces

  void validate(Index sample_count, Index modality_count) const;
};

struct CleaningEvent {
  Index iteration = 0;
  Index modality = 0;
  Index atom = 0;
  Index data_column = 0;
};

struct FitReport {
  std::vector<double> loglik_trace;              // per outer iteration
  std::vector<std::vector<double>> sigma_trace;  // per outer iteration, one entry per modality
  std::vector<std::vector<double>> inner_trace;  // per outer iteration, when recorded
  Index iterations_run = 0;
  bool converged = false;
  std::vector<Index> prune_log;  // removed leaves, in the numbering current at removal time
  std::vector<CleaningEvent> cleaning_log;
  // supervised runs only
  std::vector<std::vector<double>> beta_trace;
  std::vector<double> validation_trace;
};

struct FitResult {
  ModelState model;
  FitReport report;
  std::vector<Matrix> codes;  // posterior means S_j^T mu_hat_j, M_j x L
};

// ---------------------------------------------------------------------------
// M-step building blocks.

/// gamma^i[m] = mean over modalities of Sigma_j[m, m] + mu_j[m]^2, floored.
Vector update_gamma_one_to_one(const std::vector<const PosteriorStats*>& stats, Index sample);

/// gamma_B[k] = (s_1[k] + sum_{m in T^k} s_2[m]) / (1 + |T^k|).
Vector update_gamma_a2s(const PosteriorStats& roots, const PosteriorStats& leaves, const SupportTree& tree,
                        Index sample);

/// Lifted statistics: modality 1 of size M_2, modality 2 of size 2 M_2.
Vector update_gamma_hier(const PosteriorStats& lifted1, const PosteriorStats& lifted2, Index leaf_count,
                         Index sample);

/// D = Y U^T (U U^T + sum Sigma)^-1 followed by column normalization.
Matrix update_dictionary(const Matrix& y, const Matrix& u, const Matrix& sum_sigma);

/// D = Y U_hat^T S (S^T (U_hat U_hat^T + sum Sigma_hat) S)^-1, normalized.
Matrix update_dictionary_hier(const Matrix& y, const Matrix& u_hat, const Matrix& sum_sigma_hat,
                              const SelectorMatrices& selectors, int modality);

/// Derivative rule: shrink when the log-likelihood decreases with sigma.
double anneal_sigma(double sigma, double derivative, const AnnealSchedule& schedule);

/// Reference rule: accept the proposal iff it increases log p(Y | theta, sigma).
double anneal_sigma_likelihood(double sigma, const Matrix& d, const Matrix& y, const Matrix& gammas,
                               const AnnealSchedule& schedule);

struct CleaningResult {
  Matrix dictionary;
  std::vector<Index> replaced;      // atom indices
  std::vector<Index> data_columns;  // source column of each replacement
};

/// Replaces near-duplicate atoms (the lower-usage one of each pair) and
/// rarely used atoms by the worst-reconstructed data columns.
CleaningResult clean_dictionary(const Matrix& d, const Matrix& u, const Matrix& y, double coherence_threshold,
                                double energy_threshold);

struct PruneResult {
  Matrix dictionary;
  SupportTree tree;
  std::vector<Index> removed;  // leaves, numbered as at removal time
};

/// Removes `padded` leaves from a balanced tree: first from branches whose
/// intra-branch coherence exceeds epsilon, then by global minimal usage.
/// `usage_codes` holds S^T U (one row per leaf).
PruneResult prune(const Matrix& d, const Matrix& usage_codes, const SupportTree& tree, Index padded, double epsilon);

// ---------------------------------------------------------------------------

FitResult fit(const MultimodalDataset& data, const PriorSpec& prior, const RunConfig& config);

struct InferenceResult {
  Matrix gammas;              // hyper_dim x L
  std::vector<Matrix> codes;  // per modality, M_j x L
  double loglik = 0.0;
  Index iterations = 0;
};

/// Fixed-dictionary inference: alternates the E-step with gamma updates
/// for `iterations` rounds (or until the relative likelihood change is below
/// tol). `modalities` selects which entries of `dictionaries`/`sigmas` the
/// matrices in `y` belong to.
InferenceResult infer_codes(const std::vector<Matrix>& dictionaries, const PriorSpec& prior,
                            const std::vector<double>& sigmas, const std::vector<Index>& modalities,
                            const std::vector<Matrix>& y, Index iterations = 50, double tol = 1e-6,
                            Index threads = 1);

}  // namespace msbdl
