#pragma once

// Synthetic multimodal data with known dictionaries and supports.
//
// Dictionaries have iid N(0, 1) entries scaled to unit columns; every sample
// activates s atoms (roots for the structured priors) with N(0, 1)
// coefficients drawn independently per modality; noise is white and scaled
// per sample so that 10 log10(|D x|^2 / |v|^2) equals the requested SNR.

#include "msbdl/model.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace msbdl {

struct SyntheticSpec {
  PriorKind kind = PriorKind::one_to_one;
  std::vector<Index> dims;    // N_j
  std::vector<Index> atoms;   // M_j; structured kinds: {M_1, M_2}
  Index sparsity = 5;         // s
  Index samples = 1000;       // L
  std::vector<double> snr_db; // per modality; +infinity gives noiseless data
  std::optional<SupportTree> tree;  // structured kinds; default is the most uniform tree
  double leaf_probability = 0.5;    // hierarchical: chance that a leaf of an active root is active
  std::uint64_t seed = 0;

  void validate() const;
  SupportTree support_tree() const;
};

struct SyntheticTruth {
  std::vector<Matrix> dictionaries;
  std::vector<Matrix> codes;  // X_j
  std::vector<Matrix> clean;  // D_j X_j
  std::optional<SupportTree> tree;
};

struct SyntheticData {
  MultimodalDataset dataset;
  SyntheticTruth truth;
};

SyntheticData gen_one_to_one(const SyntheticSpec& spec);
SyntheticData gen_a2s(const SyntheticSpec& spec);
SyntheticData gen_hier(const SyntheticSpec& spec);
SyntheticData generate(const SyntheticSpec& spec);  // dispatches on spec.kind

/// Labeled one-to-one data: sample i belongs to class c_i (uniform over C),
/// activates atom c_i with coefficient 2 + |n| in every modality and s - 1
/// further atoms from [C, M).
struct LabeledSpec {
  std::vector<Index> dims;
  Index atoms = 20;
  Index classes = 2;
  Index sparsity = 3;
  Index samples = 200;
  std::vector<double> snr_db;
  std::uint64_t seed = 0;
};

SyntheticData gen_labeled(const LabeledSpec& spec);

/// Paired denoising data: modality 1 is D x + v at clean_snr_db, modality 2
/// is modality 1 plus white noise at noisy_snr_db relative to it. The test
/// split shares the dictionary.
struct PairedSpec {
  Index dim = 20;
  Index atoms = 50;
  Index sparsity = 5;
  Index train_samples = 1000;
  Index test_samples = 500;
  double clean_snr_db = 30.0;
  double noisy_snr_db = 10.0;
  std::uint64_t seed = 0;
};

struct PairedData {
  MultimodalDataset train;
  MultimodalDataset test;  // modality 1 is the clean reference
  Matrix dictionary;
};

PairedData gen_paired(const PairedSpec& spec);

/// Adds white noise to y, scaled to the requested SNR relative to y itself.
Vector add_noise_at_snr(const Vector& y, double snr_db, std::uint64_t seed, std::uint64_t index);

/// 10 log10(|clean|^2 / |noisy - clean|^2).
double measured_snr_db(const Eigen::Ref<const Vector>& clean, const Eigen::Ref<const Vector>& noisy);

}  // namespace msbdl
