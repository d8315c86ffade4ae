#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fmdroid/feature_model.hpp"

namespace fmdroid {

enum class MaskMode : std::uint8_t {
  Full = 0,               // every pair i<j interacts
  PartialByCategory = 1,  // only pairs whose categories form an allowed pair
  FirstOrder = 2,         // no pair interacts; h reduces to the linear model
};

using CategoryPair = std::pair<FeatureCategory, FeatureCategory>;

/// Selects which feature pairs contribute to the second-order term.
class InteractionMask {
 public:
  InteractionMask() = default;

  static InteractionMask full() { return {}; }
  static InteractionMask first_order();
  /// `allowed` must be nonempty; `category_of_index` has one entry per
  /// feature (typically Vocabulary::categories()).
  static InteractionMask partial(std::span<const CategoryPair> allowed,
                                 std::vector<FeatureCategory> category_of_index);

  MaskMode mode() const noexcept { return mode_; }
  bool allows(FeatureCategory a, FeatureCategory b) const;
  /// Whether features i and j interact.
  bool allows_indices(std::uint32_t i, std::uint32_t j) const;
  /// Allowed unordered pairs with first <= second, in category order.
  std::vector<CategoryPair> allowed_pairs() const;
  const std::vector<FeatureCategory>& category_of_index() const { return category_of_index_; }

  /// Throws unless the mask can be applied to a model of dimension `dim`.
  void check_dim(std::size_t dim) const;

  friend bool operator==(const InteractionMask&, const InteractionMask&) = default;

 private:
  MaskMode mode_ = MaskMode::Full;
  std::array<std::array<bool, kCategoryCount>, kCategoryCount> allowed_{};
  std::vector<FeatureCategory> category_of_index_;
};

/// Factorization machine parameters:
///   h(x) = w0 + sum_i w_i x_i + sum_{i<j, allowed} <v_i, v_j> x_i x_j
/// with V stored row-major (row i is the latent vector of feature i).
struct FmModel {
  std::size_t dim = 0;
  std::size_t k = 0;
  double w0 = 0.0;
  std::vector<double> w;
  std::vector<double> v;
  InteractionMask mask;

  std::span<const double> latent(std::size_t i) const { return {v.data() + i * k, k}; }
  std::span<double> latent(std::size_t i) { return {v.data() + i * k, k}; }

  /// 1 + n + n*k.
  std::size_t parameter_count() const noexcept { return 1 + dim + dim * k; }

  /// Checks shapes, finiteness and the mask/dimension agreement.
  void validate() const;

  friend bool operator==(const FmModel&, const FmModel&) = default;
};

/// w0 = 0, w = 0, V ~ N(0, init_scale^2) drawn from mt19937_64(seed).
FmModel init_model(std::size_t n, std::size_t k, std::uint64_t seed, double init_scale);

/// Linear-time score using the factorized pairwise identity.
double predict_raw(const FmModel& model, const SparseVector& x);

/// Reference score: explicit loop over every active pair i<j.
double predict_bruteforce(const FmModel& model, const SparseVector& x);

double sigmoid(double h);
double predict_proba(const FmModel& model, const SparseVector& x);

/// Malware iff probability > threshold; an exact tie is clean.
Label classify(double probability, double threshold = 0.5);

/// Explicit pairwise-weight model h = w0 + w.x + sum_{i<j} W_ij x_i x_j.
/// Only practical for small n; used to cross-check the factorized scorer.
struct CrossingOracle {
  std::size_t dim = 0;
  double w0 = 0.0;
  std::vector<double> w;
  std::vector<double> weights;  // dim x dim, symmetric, zero diagonal

  /// W = V V^T with masked-out pairs zeroed.
  static CrossingOracle from_model(const FmModel& model);
  double pair_weight(std::size_t i, std::size_t j) const { return weights[i * dim + j]; }
  double predict(const SparseVector& x) const;
};

/// Gradient restricted to the parameters an input touches. `rows` lists the
/// active feature indices; w[r] and v[r*k .. r*k+k) hold the partials for
/// feature rows[r].
struct FmGradient {
  double w0 = 0.0;
  std::vector<std::uint32_t> rows;
  std::vector<double> w;
  std::vector<double> v;
};

struct LossGradient {
  double loss = 0.0;
  FmGradient grad;
};

/// Logistic loss ln(1 + exp(-y h(x))) plus
/// 0.5 * (l2_w * sum_active w_i^2 + l2_v * sum_active |v_i|^2).
double loss(const FmModel& model, const SparseVector& x, Label y, double l2_w = 0.0,
            double l2_v = 0.0);
LossGradient loss_and_gradient(const FmModel& model, const SparseVector& x, Label y,
                               double l2_w = 0.0, double l2_v = 0.0);

struct TrainConfig {
  std::size_t k = 10;
  std::size_t epochs = 200;
  std::size_t batch_size = 200;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double init_scale = 0.01;
  std::uint64_t seed = 0;
  double l2_w = 1e-6;
  double l2_v = 1e-6;

  void validate() const;
};

/// Seeded mini-batch Adam on the mean batch logistic loss plus
/// 0.5 * (l2_w * |w|^2 + l2_v * |V|^2) over all parameters. Deterministic
/// given (dataset, config, mask). Throws "degenerate labels" for
/// single-class data.
FmModel train(const LabeledDataset& ds, const TrainConfig& cfg,
              const InteractionMask& mask = InteractionMask::full());

/// Throws unless both classes occur in `labels`.
void require_both_classes(std::span<const Label> labels);

}  // namespace fmdroid
