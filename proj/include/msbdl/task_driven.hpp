#pragma once

// Supervised learning: a linear classifier h = W_j x_j + e, e ~ N(0, beta_j^2 I)
// trained jointly with the dictionaries.

#include "msbdl/em.hpp"

namespace msbdl {

struct SupervisedSplit {
  MultimodalDataset train;
  MultimodalDataset validation;

  void validate() const;
};

struct TdConfig {
  double nu = 1e-4;                  // ridge weight on ||W||_F^2
  Index validation_iterations = 50;  // fixed-dictionary inference rounds per beta check
};

/// W = H U^T (U U^T + sum Sigma + nu I)^-1.
Matrix update_classifier(const Matrix& h, const Matrix& u_td, const Matrix& sum_sigma_td, double nu);

/// sum_i log N(h_i; 0, beta^2 I + W diag(gammas_i) W^T); gammas holds one
/// column of prior variances (over the columns of W) per validation sample.
double validation_label_loglik(const Matrix& w, const Matrix& gammas, double beta, const Matrix& h);

/// Accept beta' = max(beta_inf, alpha_beta beta) iff proposed > current.
double anneal_beta(double beta, double current, double proposed, const AnnealSchedule& schedule);

FitResult fit_supervised(const SupervisedSplit& split, const PriorSpec& prior, const RunConfig& config,
                         const TdConfig& td = {});

/// Class scores W_j mu_j for test data of one modality; codes come from
/// fixed-dictionary inference with sigma_j at its trained value.
Matrix classifier_scores(const ModelState& model, const Matrix& y, Index modality, Index iterations = 50,
                         Index threads = 1);

/// argmax of the scores per sample; ties go to the lowest class index.
std::vector<Index> argmax_classes(const Matrix& scores);

std::vector<Index> classify(const ModelState& model, const Matrix& y, Index modality, Index iterations = 50,
                            Index threads = 1);

}  // namespace msbdl
