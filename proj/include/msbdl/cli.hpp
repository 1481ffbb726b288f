#pragma once

// Batch experiment runner behind the `msbdl` executable.
//
// Every command is a pure function of its configuration, its input files and
// the seed; numeric outputs are written at full precision so reruns are
// byte-identical. The configuration schema is documented in README.md.

#include "msbdl/em.hpp"
#include "msbdl/synthetic.hpp"
#include "msbdl/task_driven.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msbdl::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kNumericalFailure = 2, kPartialFailure = 3 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<Index> threads;
};

// "one_to_one", "atom_to_subspace", "hierarchical", "labeled" or "paired".
struct DataConfig {
  std::string kind;
  std::vector<Index> dims;
  std::vector<Index> atoms;
  Index sparsity = 5;
  Index samples = 1000;
  Index test_samples = 500;  // paired
  Index classes = 2;         // labeled
  std::vector<double> snr_db;
  std::optional<SupportTree> tree;
  double leaf_probability = 0.5;
};

struct ModelConfig {
  std::optional<PriorKind> prior;  // default: the data kind (one-to-one for labeled and paired data)
  std::optional<Index> atoms;      // one-to-one M; default: the atom count recorded with the data
  std::optional<SupportTree> tree;  // default: the tree stored with the data, else the most uniform tree
};

// Unset entries fall back to AnnealSchedule::defaults for the modality count.
struct AnnealConfig {
  std::optional<std::vector<double>> sigma0;
  std::optional<double> sigma_inf;
  std::optional<double> alpha_sigma;
  std::optional<std::vector<double>> beta0;
  std::optional<double> beta_inf;
  std::optional<double> alpha_beta;
  std::optional<Index> validation_period;

  AnnealSchedule resolve(Index modality_count) const;
};

struct SupervisedConfig {
  TdConfig td;
  double validation_fraction = 0.2;  // trailing share of the samples held out for beta annealing
};

struct Config {
  std::uint64_t seed = 0;
  std::optional<DataConfig> data;
  ModelConfig model;
  RunConfig run;  // run.anneal is filled from `anneal` when the modality count is known
  AnnealConfig anneal;
  std::optional<SupervisedConfig> supervised;
  Index inference_iterations = 50;
  double inference_tol = 1e-6;
  Index trials = 1;
  std::string canonical;  // the parsed document after overrides, keys sorted, run.threads dropped

  std::string hash() const;  // FNV-1a of `canonical`, hex
};

/// Parses a JSON configuration. Unknown keys, wrong types and missing
/// required fields raise ConfigError naming the field; syntax errors carry
/// the line and column.
Config parse_config(std::string_view text, const Overrides& overrides = {}, std::string_view origin = "config");
Config load_config(const fs::path& path, const Overrides& overrides = {});

// ---------------------------------------------------------------------------
// Data and model directories.

// A data directory holds Y1.mat ... YJ.mat, an optional H.mat (binary
// labels) and manifest.json; synthetic data adds truth/ with D<j>.mat,
// X<j>.mat and support<j>.mat.
struct DataDir {
  MultimodalDataset dataset;
  std::string kind;           // generator kind, empty for foreign data
  std::vector<Index> atoms;   // generating atom counts, when known
  std::optional<SupportTree> tree;
  std::string dataset_id;     // FNV-1a over the matrix files and the tree
};

DataDir read_data_dir(const fs::path& dir);

// A model directory holds D<j>.mat, W<j>.mat (supervised), gammas.mat,
// X<j>.mat (training codes), scalars.csv (sigma_j, beta_j), trace.csv,
// report.json and manifest.json.
struct ModelDir {
  ModelState model;
  std::vector<Matrix> codes;  // training codes, when stored
  std::string dataset_id;
  std::string config_hash;
};

void write_model_dir(const fs::path& dir, const FitResult& result, const std::string& dataset_id,
                     const Config& config);
ModelDir read_model_dir(const fs::path& dir);

// ---------------------------------------------------------------------------
// Commands.

void cmd_synth(const Config& config, const fs::path& out_dir);
void cmd_fit(const Config& config, const fs::path& data_dir, const fs::path& out_dir);
void cmd_eval(const fs::path& model_dir, const fs::path& truth_dir, const fs::path& out_dir);
void cmd_denoise(const Config& config, const fs::path& model_dir, const fs::path& data_dir, const fs::path& out_dir);
void cmd_classify(const Config& config, const fs::path& model_dir, const fs::path& data_dir, const fs::path& out_dir,
                  bool require_accuracy);
/// Returns kSuccess, or kPartialFailure when at least one trial failed.
int cmd_experiment(const Config& config, const fs::path& out_dir);

/// Seed of trial t of an experiment with master seed `seed`.
std::uint64_t trial_seed(std::uint64_t seed, Index trial);

/// Entry point of the executable; maps exceptions to exit codes.
int run(int argc, char** argv);

}  // namespace msbdl::cli
