#include "fmdroid/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fmdroid/detail/optim.hpp"

namespace fmdroid {

namespace {

void check_dim(std::size_t model_dim, const SparseVector& x) {
  if (x.dim() != model_dim) {
    throw Error(ErrorKind::DimensionMismatch, "input dim " + std::to_string(x.dim()) +
                                                  " does not match model dim " +
                                                  std::to_string(model_dim));
  }
}

}  // namespace

double predict_raw(const LinearModel& model, const SparseVector& x) {
  check_dim(model.dim, x);
  double h = model.w0;
  for (auto i : x.indices()) h += model.w[i];
  return h;
}

double predict_proba(const LinearModel& model, const SparseVector& x) {
  return sigmoid(predict_raw(model, x));
}

LinearModel train_logistic(const LabeledDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (ds.empty()) throw Error(ErrorKind::InvalidArgument, "cannot train on an empty dataset");
  require_both_classes(ds.labels);

  LinearModel model;
  model.dim = ds.dim;
  model.w.assign(ds.dim, 0.0);

  double grad_w0 = 0.0, m_w0 = 0.0, s_w0 = 0.0;
  std::vector<double> grad_w(ds.dim, 0.0), m_w(ds.dim, 0.0), s_w(ds.dim, 0.0);

  detail::Adam adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  std::mt19937_64 rng(detail::mix_seed(cfg.seed, detail::kShuffleStream));

  detail::for_each_minibatch(ds.size(), cfg.epochs, cfg.batch_size, rng, [&](auto batch) {
    grad_w0 = 0.0;
    for (std::size_t i = 0; i < ds.dim; ++i) grad_w[i] = cfg.l2_w * model.w[i];

    const double scale = 1.0 / static_cast<double>(batch.size());
    for (auto row : batch) {
      const auto& x = ds.vectors[row];
      const double y = static_cast<double>(to_int(ds.labels[row]));
      const double dl_dh = -y * sigmoid(-y * predict_raw(model, x));
      grad_w0 += scale * dl_dh;
      for (auto i : x.indices()) grad_w[i] += scale * dl_dh;
    }

    adam.next_step();
    adam.update(model.w0, grad_w0, m_w0, s_w0);
    adam.update(model.w, grad_w, m_w, s_w);
  });
  return model;
}

BernoulliNbModel train_bernoulli_nb(const LabeledDataset& ds, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorKind::InvalidArgument, "alpha must be positive");
  }
  ds.validate();
  require_both_classes(ds.labels);

  const auto slot = [](Label y) { return y == Label::Malware ? 1 : 0; };
  std::array<double, 2> class_count{};
  std::array<std::vector<double>, 2> feature_count;
  feature_count[0].assign(ds.dim, 0.0);
  feature_count[1].assign(ds.dim, 0.0);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const int c = slot(ds.labels[r]);
    class_count[c] += 1.0;
    for (auto i : ds.vectors[r].indices()) feature_count[c][i] += 1.0;
  }

  BernoulliNbModel m;
  m.dim = ds.dim;
  m.alpha = alpha;
  const double total = class_count[0] + class_count[1];
  for (int c = 0; c < 2; ++c) {
    m.log_prior[c] = std::log(class_count[c] / total);
    m.log_theta[c].resize(ds.dim);
    m.log_one_minus_theta[c].resize(ds.dim);
    const double denom = class_count[c] + 2.0 * alpha;
    for (std::size_t i = 0; i < ds.dim; ++i) {
      const double theta = (feature_count[c][i] + alpha) / denom;
      m.log_theta[c][i] = std::log(theta);
      // 1 - theta computed from the complementary count keeps precision near 1.
      m.log_one_minus_theta[c][i] = std::log((class_count[c] - feature_count[c][i] + alpha) / denom);
    }
  }
  return m;
}

std::array<double, 2> posterior(const BernoulliNbModel& model, const SparseVector& x) {
  check_dim(model.dim, x);
  std::array<double, 2> joint{};
  for (int c = 0; c < 2; ++c) {
    double acc = model.log_prior[c];
    std::size_t a = 0;
    const auto idx = x.indices();
    for (std::size_t i = 0; i < model.dim; ++i) {
      if (a < idx.size() && idx[a] == i) {
        acc += model.log_theta[c][i];
        ++a;
      } else {
        acc += model.log_one_minus_theta[c][i];
      }
    }
    joint[c] = acc;
  }
  const double top = std::max(joint[0], joint[1]);
  const double e0 = std::exp(joint[0] - top);
  const double e1 = std::exp(joint[1] - top);
  const double p1 = e1 / (e0 + e1);
  return {1.0 - p1, p1};
}

double predict_proba(const BernoulliNbModel& model, const SparseVector& x) {
  return posterior(model, x)[1];
}

}  // namespace fmdroid
