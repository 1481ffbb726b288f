#include "trainer.hpp"

#include "factor.hpp"
#include "msbdl/error.hpp"
#include "msbdl/layout.hpp"
#include "msbdl/log.hpp"
#include "msbdl/task_driven.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace msbdl::detail {

Matrix normalize_or_keep(const Matrix& d, const Matrix& previous) {
  Matrix out = d;
  for (Index m = 0; m < d.cols(); ++m) {
    const double norm = d.col(m).norm();
    if (norm > 0.0 && std::isfinite(norm)) {
      out.col(m) /= norm;
    } else {
      log::debug("atom " + std::to_string(m) + " vanished in the dictionary update; keeping the previous atom");
      out.col(m) = previous.col(m);
    }
  }
  return out;
}

Matrix solve_right(const Matrix& yut, Matrix a, const char* what) {
  a = 0.5 * (a + a.transpose()).eval();
  const Llt llt = cholesky(std::move(a), what);
  return llt.solve(yut.transpose()).transpose();
}

namespace {

std::vector<Index> all_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

// Sampling without replacement within an epoch; a batch never straddles two
// epochs. Batches are returned sorted so sums run in sample order.
class BatchSampler {
 public:
  BatchSampler(Index samples, Index batch, std::uint64_t seed)
      : samples_(samples), batch_(batch), perm_(all_indices(samples)), pos_(samples),
        rng_(make_rng(seed, kStreamBatches)) {}

  std::vector<Index> next() {
    if (batch_ >= samples_) return all_indices(samples_);
    if (pos_ + batch_ > samples_) {
      std::shuffle(perm_.begin(), perm_.end(), rng_);
      pos_ = 0;
    }
    std::vector<Index> out(perm_.begin() + pos_, perm_.begin() + pos_ + batch_);
    pos_ += batch_;
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  Index samples_;
  Index batch_;
  std::vector<Index> perm_;
  Index pos_;
  std::mt19937_64 rng_;
};

// Atoms start as normalized data columns; every modality draws from the same
// randomly chosen sample indices.
std::vector<Matrix> initial_dictionaries(const MultimodalDataset& data, const std::vector<Index>& atoms,
                                         std::uint64_t seed) {
  auto rng = make_rng(seed, kStreamInit);
  const Index l = data.sample_count();
  std::vector<Index> perm = all_indices(l);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::normal_distribution<double> normal;
  std::vector<Matrix> out;
  for (std::size_t j = 0; j < data.modalities.size(); ++j) {
    const Matrix& y = data.modalities[j];
    Matrix d(y.rows(), atoms[j]);
    for (Index m = 0; m < atoms[j]; ++m) {
      Vector col = y.col(perm[static_cast<std::size_t>(m % l)]);
      if (m >= l || !(col.norm() > 0.0)) {
        // more atoms than samples, or an all-zero sample: random direction
        for (Index r = 0; r < col.size(); ++r) col(r) += normal(rng);
      }
      d.col(m) = col / col.norm();
    }
    out.push_back(std::move(d));
  }
  return out;
}

class Trainer {
 public:
  Trainer(const MultimodalDataset& data, const PriorSpec& prior, const RunConfig& config,
          const SupervisedSetup* supervised)
      : data_(data),
        config_(config),
        sup_(supervised),
        prior_(prior),
        j_count_(data.modality_count()),
        l_count_(data.sample_count()),
        sampler_(data.sample_count(), config.batch_size > 0 ? config.batch_size : data.sample_count(), config.seed) {
    data.validate();
    prior.validate(j_count_);
    config.validate(l_count_, j_count_);
    sched_ = config.anneal.sigma0.empty() ? AnnealSchedule::defaults(j_count_) : config.anneal;
    sched_.validate(j_count_, sup_ != nullptr);
    if (sup_) {
      if (!sup_->labels || sup_->labels->cols() != l_count_)
        throw InvalidArgument("training labels must have one column per sample");
      if (!(sup_->nu >= 0.0)) throw InvalidArgument("ridge parameter nu must be >= 0");
    }

    if (prior_.structured() && !prior_.tree->balanced()) {
      auto balanced = balance_tree(*prior_.tree);
      padded_ = balanced.padded_count;
      prior_.tree = std::move(balanced.tree);
      log::info("balanced the support tree with " + std::to_string(padded_) + " padding leaves");
    }
    layout_ = make_layout(prior_, j_count_);
    const auto atoms = prior_.atom_counts(j_count_);
    for (std::size_t j = 0; j < atoms.size(); ++j)
      if (atoms[j] > l_count_)
        log::warn("modality " + std::to_string(j + 1) + " has more atoms (" + std::to_string(atoms[j]) +
                  ") than samples (" + std::to_string(l_count_) + ")");

    d_ = initial_dictionaries(data, atoms, config.seed);
    gamma_ = Matrix::Ones(layout_.hyper_dim, l_count_);
    sigma_ = sched_.sigma0;
    frozen_.assign(static_cast<std::size_t>(j_count_), false);
    rejections_.assign(static_cast<std::size_t>(j_count_), 0);
    if (sup_) {
      for (std::size_t j = 0; j < atoms.size(); ++j) w_.push_back(Matrix::Zero(sup_->labels->rows(), atoms[j]));
      beta_ = sched_.beta0;
    }
    stats_.assign(static_cast<std::size_t>(j_count_), std::vector<SampleResult>(static_cast<std::size_t>(l_count_)));
    opts_.mode = is_approximate(config.variant) ? PosteriorMode::approximate : PosteriorMode::exact;
    opts_.cg_tol = config.cg_tol;
    opts_.cg_max_iter = config.cg_max_iter;
    all_ = all_indices(l_count_);
  }

  FitResult run() {
    bool first = true;
    Index t = 0;
    for (; t < config_.max_outer_iters; ++t) {
      std::vector<double> inner;
      double total = 0.0;
      double prev = 0.0;
      try {
        for (Index it = 0;; ++it) {
          const bool full = first || config_.variant == Variant::full;
          const std::vector<Index> batch = full ? all_ : sampler_.next();
          first = false;
          estep(batch);
          total = joint_loglik();
          if (!std::isfinite(total)) throw NumericalError("log-likelihood is not finite");
          inner.push_back(total);
          // the label term changes the objective but not the scale of the test
          if ((it > 0 && std::abs(total - prev) <= config_.inner_tol * std::abs(data_loglik())) ||
              it >= config_.max_inner_iters)
            break;
          mstep(batch);
          prev = total;
        }
      } catch (const NumericalError& e) {
        throw NumericalError("outer iteration " + std::to_string(t) + ": " + e.what());
      }

      report_.loglik_trace.push_back(data_loglik());
      report_.sigma_trace.push_back(sigma_);
      if (config_.record_inner) report_.inner_trace.push_back(std::move(inner));
      if ((t + 1) % 50 == 0 || t == 0) {
        std::ostringstream msg;
        msg << "outer " << t + 1 << " loglik " << report_.loglik_trace.back() << " sigma";
        for (double s : sigma_) msg << ' ' << s;
        log::info(msg.str());
      }

      anneal();
      if (config_.cleaning.enabled && (t + 1) % config_.cleaning.period == 0) clean(t);
      if (sup_ && (t + 1) % sched_.validation_period == 0) check_beta();
      if (std::all_of(frozen_.begin(), frozen_.end(), [](bool f) { return f; })) {
        report_.converged = true;
        ++t;
        break;
      }
    }
    report_.iterations_run = t;
    if (padded_ > 0) prune_padding();
    return result();
  }

 private:
  void estep(const std::vector<Index>& batch) {
    const Vector no_label;
    parallel_for(static_cast<Index>(batch.size()), config_.threads, [&](Index k) {
      const Index i = batch[static_cast<std::size_t>(k)];
      for (Index j = 0; j < j_count_; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        auto& slot = stats_[ju][static_cast<std::size_t>(i)];
        if (sup_) {
          slot = infer_sample(d_[ju], layout_.modalities[ju], gamma_.col(i), sigma_[ju], data_.modalities[ju].col(i),
                              LabelTerm{&w_[ju], beta_[ju]}, sup_->labels->col(i), opts_);
        } else {
          slot = infer_sample(d_[ju], layout_.modalities[ju], gamma_.col(i), sigma_[ju], data_.modalities[ju].col(i),
                              LabelTerm{}, no_label, opts_);
        }
      }
    });
  }

  double data_loglik() const {
    double s = 0.0;
    for (const auto& per_j : stats_)
      for (const auto& r : per_j) s += r.loglik;
    return s;
  }

  double joint_loglik() const {
    double s = 0.0;
    for (const auto& per_j : stats_)
      for (const auto& r : per_j) s += r.loglik + r.label_loglik;
    return s;
  }

  void mstep(const std::vector<Index>& batch) {
    parallel_for(static_cast<Index>(batch.size()), config_.threads, [&](Index k) {
      const Index i = batch[static_cast<std::size_t>(k)];
      std::vector<const Vector*> means;
      std::vector<const Vector*> vars;
      for (Index j = 0; j < j_count_; ++j) {
        const auto& r = stats_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        means.push_back(&r.lifted_mean);
        vars.push_back(&r.lifted_var);
      }
      gamma_.col(i) = pool_hyperparameters(layout_, means, vars, gamma_.col(i));
    });

    const std::vector<Index>& samples = is_batch(config_.variant) ? batch : all_;
    const Index count = static_cast<Index>(samples.size());
    for (Index j = 0; j < j_count_; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (frozen_[ju] && !sup_) continue;
      const Index m = d_[ju].cols();
      Matrix u(m, count);
      Matrix ys(data_.modalities[ju].rows(), count);
      Matrix a = Matrix::Zero(m, m);
      Index factor_rows = 0;
      for (Index k = 0; k < count; ++k) {
        const Index i = samples[static_cast<std::size_t>(k)];
        const auto& r = stats_[ju][static_cast<std::size_t>(i)];
        u.col(k) = r.mean;
        ys.col(k) = data_.modalities[ju].col(i);
        if (r.factor.size() > 0) {
          a.diagonal() += r.prior_var;
          factor_rows += r.factor.rows();
        } else {
          a.diagonal() += r.second_diag;
        }
      }
      // sum of posterior covariances diag(c_i) - F_i^T F_i as one stacked rank update
      auto lower = a.selfadjointView<Eigen::Lower>();
      lower.rankUpdate(u);
      if (factor_rows > 0) {
        Matrix stacked(factor_rows, m);
        Index row = 0;
        for (Index i : samples) {
          const auto& f = stats_[ju][static_cast<std::size_t>(i)].factor;
          stacked.middleRows(row, f.rows()) = f;
          row += f.rows();
        }
        lower.rankUpdate(stacked.transpose(), -1.0);
      }
      a = Matrix(lower);
      if (!frozen_[ju]) d_[ju] = normalize_or_keep(solve_right(ys * u.transpose(), a, "dictionary update"), d_[ju]);
      if (sup_) {
        Matrix hs(sup_->labels->rows(), count);
        for (Index k = 0; k < count; ++k) hs.col(k) = sup_->labels->col(samples[static_cast<std::size_t>(k)]);
        a.diagonal().array() += sup_->nu;
        w_[ju] = solve_right(hs * u.transpose(), a, "classifier update");
      }
    }
  }

  void anneal() {
    for (Index j = 0; j < j_count_; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (frozen_[ju]) continue;
      double derivative = 0.0;
      for (const auto& r : stats_[ju]) derivative += r.dloglik;
      const double next = anneal_sigma(sigma_[ju], derivative, sched_);
      if (next == sigma_[ju]) {
        if (++rejections_[ju] >= config_.sigma_patience) {
          frozen_[ju] = true;
          log::info("sigma_" + std::to_string(j + 1) + " converged at " + std::to_string(sigma_[ju]));
        }
      } else {
        rejections_[ju] = 0;
      }
      sigma_[ju] = next;
    }
  }

  Matrix codes(Index j) const {
    const auto& per = stats_[static_cast<std::size_t>(j)];
    Matrix u(d_[static_cast<std::size_t>(j)].cols(), l_count_);
    for (Index i = 0; i < l_count_; ++i) u.col(i) = per[static_cast<std::size_t>(i)].mean;
    return u;
  }

  void clean(Index iteration) {
    for (Index j = 0; j < j_count_; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (frozen_[ju]) continue;
      auto cleaned = clean_dictionary(d_[ju], codes(j), data_.modalities[ju], config_.cleaning.coherence,
                                      config_.cleaning.energy);
      if (cleaned.replaced.empty()) continue;
      d_[ju] = std::move(cleaned.dictionary);
      const auto& ml = layout_.modalities[ju];
      for (std::size_t r = 0; r < cleaned.replaced.size(); ++r) {
        const Index atom = cleaned.replaced[r];
        // a fresh atom needs a non-degenerate prior variance to be picked up again
        for (Index g = 0; g < ml.lifted(); ++g)
          if (ml.atom[static_cast<std::size_t>(g)] == atom) gamma_.row(ml.hyper[static_cast<std::size_t>(g)]).setOnes();
        report_.cleaning_log.push_back(CleaningEvent{iteration, j, atom, cleaned.data_columns[r]});
      }
      log::info("cleaning replaced " + std::to_string(cleaned.replaced.size()) + " atoms of modality " +
                std::to_string(j + 1));
    }
  }

  void check_beta() {
    const auto& val = *sup_->validation;
    std::vector<const Matrix*> dicts;
    std::vector<const Matrix*> ys;
    for (Index j = 0; j < j_count_; ++j) {
      dicts.push_back(&d_[static_cast<std::size_t>(j)]);
      ys.push_back(&val.modalities[static_cast<std::size_t>(j)]);
    }
    const auto fixed =
        run_fixed(dicts, layout_, sigma_, ys, sup_->validation_iterations, config_.inner_tol, config_.threads);
    double current_total = 0.0;
    for (Index j = 0; j < j_count_; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      Matrix c(d_[ju].cols(), val.sample_count());
      for (Index i = 0; i < val.sample_count(); ++i)
        c.col(i) = collapsed_variances(layout_.modalities[ju], fixed.gammas.col(i));
      const double current = validation_label_loglik(w_[ju], c, beta_[ju], *val.labels);
      const double proposal = std::max(sched_.beta_inf, sched_.alpha_beta * beta_[ju]);
      const double proposed = validation_label_loglik(w_[ju], c, proposal, *val.labels);
      beta_[ju] = anneal_beta(beta_[ju], current, proposed, sched_);
      current_total += current;
    }
    report_.validation_trace.push_back(current_total);
    report_.beta_trace.push_back(beta_);
  }

  void prune_padding() {
    const Matrix leaf_codes = codes(1);
    auto pruned = prune(d_[1], leaf_codes, *prior_.tree, padded_, config_.prune_epsilon);
    Matrix u2 = leaf_codes;
    for (Index leaf : pruned.removed) {
      const Index m2 = u2.rows();
      Matrix next(m2 - 1, u2.cols());
      next << u2.topRows(leaf), u2.bottomRows(m2 - leaf - 1);
      u2 = std::move(next);
      if (sup_) {
        Matrix& w = w_[1];
        Matrix wn(w.rows(), m2 - 1);
        wn << w.leftCols(leaf), w.rightCols(m2 - leaf - 1);
        w = std::move(wn);
      }
      if (prior_.kind == PriorKind::hierarchical) {
        // [gamma_1; gamma_2] both indexed by leaf
        Matrix g(2 * (m2 - 1), gamma_.cols());
        g << gamma_.topRows(leaf), gamma_.middleRows(leaf + 1, m2 - leaf - 1), gamma_.middleRows(m2, leaf),
            gamma_.bottomRows(m2 - leaf - 1);
        gamma_ = std::move(g);
      }
    }
    pruned_codes_ = std::move(u2);
    d_[1] = std::move(pruned.dictionary);
    prior_.tree = std::move(pruned.tree);
    report_.prune_log = std::move(pruned.removed);
  }

  FitResult result() {
    FitResult out;
    for (Index j = 0; j < j_count_; ++j)
      out.codes.push_back(j == 1 && pruned_codes_.size() > 0 ? pruned_codes_ : codes(j));
    out.model.dictionaries = d_;
    out.model.gammas = gamma_;
    out.model.sigmas = sigma_;
    out.model.prior = prior_;
    if (sup_) out.model.classifier = Classifier{w_, beta_};
    out.report = std::move(report_);
    return out;
  }

  const MultimodalDataset& data_;
  RunConfig config_;
  AnnealSchedule sched_;
  const SupervisedSetup* sup_;
  PriorSpec prior_;
  Index padded_ = 0;
  PriorLayout layout_;
  Index j_count_;
  Index l_count_;
  std::vector<Matrix> d_;
  Matrix gamma_;
  std::vector<double> sigma_;
  std::vector<Matrix> w_;
  std::vector<double> beta_;
  std::vector<bool> frozen_;
  std::vector<Index> rejections_;
  std::vector<std::vector<SampleResult>> stats_;
  EngineOptions opts_;
  BatchSampler sampler_;
  std::vector<Index> all_;
  Matrix pruned_codes_;
  FitReport report_;
};

}  // namespace

FitResult train(const MultimodalDataset& data, const PriorSpec& prior, const RunConfig& config,
                const SupervisedSetup* supervised) {
  Trainer trainer(data, prior, config, supervised);
  return trainer.run();
}

FixedInference run_fixed(const std::vector<const Matrix*>& dictionaries, const PriorLayout& layout,
                         const std::vector<double>& sigmas, const std::vector<const Matrix*>& y, Index iterations,
                         double tol, Index threads) {
  const std::size_t j_count = layout.modalities.size();
  if (dictionaries.size() != j_count || sigmas.size() != j_count || y.size() != j_count || j_count == 0)
    throw InvalidArgument("fixed-dictionary inference needs one dictionary, sigma and data matrix per modality");
  const Index l = y.front()->cols();
  for (std::size_t j = 0; j < j_count; ++j) {
    if (y[j]->cols() != l) throw InvalidArgument("modalities disagree on the sample count");
    if (y[j]->rows() != dictionaries[j]->rows())
      throw InvalidArgument("data for modality " + std::to_string(j + 1) + " does not match its dictionary");
    if (!(sigmas[j] > 0.0)) throw InvalidArgument("sigma must be positive");
  }
  EngineOptions opts;
  opts.covariance = false;
  opts.derivative = false;

  FixedInference out;
  out.gammas = Matrix::Ones(layout.hyper_dim, l);
  std::vector<std::vector<SampleResult>> st(j_count, std::vector<SampleResult>(static_cast<std::size_t>(l)));
  double prev = 0.0;
  for (Index it = 0;; ++it) {
    parallel_for(l, threads, [&](Index i) {
      for (std::size_t j = 0; j < j_count; ++j)
        st[j][static_cast<std::size_t>(i)] =
            infer_sample(*dictionaries[j], layout.modalities[j], out.gammas.col(i), sigmas[j], y[j]->col(i), opts);
    });
    double ll = 0.0;
    for (const auto& per : st)
      for (const auto& r : per) ll += r.loglik;
    out.loglik = ll;
    out.iterations = it;
    if ((it > 0 && std::abs(ll - prev) <= tol * std::abs(ll)) || it >= iterations) break;
    parallel_for(l, threads, [&](Index i) {
      std::vector<const Vector*> means;
      std::vector<const Vector*> vars;
      for (std::size_t j = 0; j < j_count; ++j) {
        means.push_back(&st[j][static_cast<std::size_t>(i)].lifted_mean);
        vars.push_back(&st[j][static_cast<std::size_t>(i)].lifted_var);
      }
      out.gammas.col(i) = pool_hyperparameters(layout, means, vars, out.gammas.col(i));
    });
    prev = ll;
  }
  for (std::size_t j = 0; j < j_count; ++j) {
    Matrix u(dictionaries[j]->cols(), l);
    for (Index i = 0; i < l; ++i) u.col(i) = st[j][static_cast<std::size_t>(i)].mean;
    out.codes.push_back(std::move(u));
  }
  return out;
}

}  // namespace msbdl::detail
