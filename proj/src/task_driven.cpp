#include "msbdl/task_driven.hpp"

#include "factor.hpp"
#include "msbdl/error.hpp"
#include "trainer.hpp"

#include <algorithm>
#include <cmath>

namespace msbdl {

void SupervisedSplit::validate() const {
  train.validate();
  validation.validate();
  if (!train.labels || !validation.labels) throw InvalidArgument("supervised training needs labels on both splits");
  if (train.modality_dims() != validation.modality_dims())
    throw InvalidArgument("training and validation splits have different modality dimensions");
  if (train.labels->rows() != validation.labels->rows())
    throw InvalidArgument("training and validation splits have different class counts");
}

Matrix update_classifier(const Matrix& h, const Matrix& u_td, const Matrix& sum_sigma_td, double nu) {
  if (h.cols() != u_td.cols()) throw InvalidArgument("classifier update: labels and codes disagree on sample count");
  if (sum_sigma_td.rows() != u_td.rows() || sum_sigma_td.cols() != u_td.rows())
    throw InvalidArgument("classifier update: summed covariance has the wrong shape");
  if (!(nu >= 0.0)) throw InvalidArgument("classifier update: nu must be >= 0");
  Matrix a = u_td * u_td.transpose() + sum_sigma_td;
  a.diagonal().array() += nu;
  return detail::solve_right(h * u_td.transpose(), std::move(a), "classifier update");
}

double validation_label_loglik(const Matrix& w, const Matrix& gammas, double beta, const Matrix& h) {
  if (gammas.rows() != w.cols() || h.rows() != w.rows() || h.cols() != gammas.cols())
    throw InvalidArgument("validation likelihood: dimension mismatch");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  const Index c = w.rows();
  const double log2pi = std::log(2.0 * 3.14159265358979323846);
  double total = 0.0;
  for (Index i = 0; i < h.cols(); ++i) {
    Matrix s = w * gammas.col(i).asDiagonal() * w.transpose();
    s.diagonal().array() += beta * beta;
    const auto llt = detail::cholesky(std::move(s), "label covariance");
    const Vector z = llt.matrixL().solve(h.col(i));
    total += -0.5 * (static_cast<double>(c) * log2pi + 2.0 * llt.matrixLLT().diagonal().array().log().sum() +
                     z.squaredNorm());
  }
  return total;
}

double anneal_beta(double beta, double current, double proposed, const AnnealSchedule& schedule) {
  if (proposed > current) return std::max(schedule.beta_inf, schedule.alpha_beta * beta);
  return beta;
}

FitResult fit_supervised(const SupervisedSplit& split, const PriorSpec& prior, const RunConfig& config,
                         const TdConfig& td) {
  split.validate();
  if (td.validation_iterations < 1) throw InvalidArgument("validation_iterations must be >= 1");
  detail::SupervisedSetup setup;
  setup.labels = &*split.train.labels;
  setup.validation = &split.validation;
  setup.nu = td.nu;
  setup.validation_iterations = td.validation_iterations;
  return detail::train(split.train, prior, config, &setup);
}

Matrix classifier_scores(const ModelState& model, const Matrix& y, Index modality, Index iterations,
                         Index threads) {
  if (!model.classifier) throw InvalidArgument("model has no classifier");
  if (modality < 0 || modality >= model.modality_count())
    throw InvalidArgument("modality index " + std::to_string(modality) + " out of range");
  const auto codes =
      infer_codes(model.dictionaries, model.prior, model.sigmas, {modality}, {y}, iterations, 1e-6, threads);
  return model.classifier->weights[static_cast<std::size_t>(modality)] * codes.codes.front();
}

std::vector<Index> argmax_classes(const Matrix& scores) {
  std::vector<Index> out(static_cast<std::size_t>(scores.cols()), 0);
  for (Index i = 0; i < scores.cols(); ++i) {
    Index best = 0;
    for (Index c = 1; c < scores.rows(); ++c)
      if (scores(c, i) > scores(best, i)) best = c;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::vector<Index> classify(const ModelState& model, const Matrix& y, Index modality, Index iterations,
                            Index threads) {
  return argmax_classes(classifier_scores(model, y, modality, iterations, threads));
}

}  // namespace msbdl
