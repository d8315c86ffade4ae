#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fmdroid/feature_model.hpp"
#include "fmdroid/fm_core.hpp"

namespace fmdroid {

/// First-order transfer h(x) = w0 + w.x.
struct LinearModel {
  std::size_t dim = 0;
  double w0 = 0.0;
  std::vector<double> w;

  std::size_t parameter_count() const noexcept { return 1 + dim; }
  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

double predict_raw(const LinearModel& model, const SparseVector& x);
double predict_proba(const LinearModel& model, const SparseVector& x);

/// Logistic regression trained with the same seeded mini-batch Adam loop,
/// loss and regularization as the FM trainer (cfg.k and cfg.init_scale are
/// unused).
LinearModel train_logistic(const LabeledDataset& ds, const TrainConfig& cfg);

/// Bernoulli naive Bayes. Class slot 0 is clean, slot 1 is malware.
struct BernoulliNbModel {
  std::size_t dim = 0;
  double alpha = 1.0;
  std::array<double, 2> log_prior{};
  std::array<std::vector<double>, 2> log_theta;
  std::array<std::vector<double>, 2> log_one_minus_theta;

  friend bool operator==(const BernoulliNbModel&, const BernoulliNbModel&) = default;
};

/// theta_{c,i} = (count of x_i = 1 in class c + alpha) / (class count + 2 alpha).
BernoulliNbModel train_bernoulli_nb(const LabeledDataset& ds, double alpha = 1.0);

/// Class posteriors {P(clean | x), P(malware | x)}; inactive features
/// contribute their log(1 - theta) terms.
std::array<double, 2> posterior(const BernoulliNbModel& model, const SparseVector& x);

/// P(malware | x).
double predict_proba(const BernoulliNbModel& model, const SparseVector& x);

}  // namespace fmdroid
