#include "fmdroid/fm_core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fmdroid/detail/optim.hpp"

namespace fmdroid {

namespace {

std::size_t cat_index(FeatureCategory c) { return static_cast<std::size_t>(c); }

void check_input(const FmModel& model, const SparseVector& x) {
  if (x.dim() != model.dim) {
    throw Error(ErrorKind::DimensionMismatch, "input dim " + std::to_string(x.dim()) +
                                                  " does not match model dim " +
                                                  std::to_string(model.dim));
  }
}

double softplus(double z) {
  // ln(1 + e^z) without overflow.
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Per-input sums used by both scoring and differentiation. For Full masks a
// single bucket holds every active row; for partial masks rows are bucketed
// by category.
struct LatentSums {
  std::size_t k = 0;
  std::array<std::vector<double>, kCategoryCount> sum{};  // S_c,f
  std::array<double, kCategoryCount> sq{};                // sum_{i in c} |v_i|^2
  std::array<bool, kCategoryCount> present{};
};

LatentSums latent_sums(const FmModel& model, const SparseVector& x) {
  LatentSums s;
  s.k = model.k;
  const bool partial = model.mask.mode() == MaskMode::PartialByCategory;
  const auto& cats = model.mask.category_of_index();
  for (auto i : x.indices()) {
    const auto c = partial ? cat_index(cats[i]) : 0;
    auto& bucket = s.sum[c];
    if (!s.present[c]) {
      bucket.assign(model.k, 0.0);
      s.present[c] = true;
    }
    const auto vi = model.latent(i);
    for (std::size_t f = 0; f < model.k; ++f) {
      bucket[f] += vi[f];
      s.sq[c] += vi[f] * vi[f];
    }
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) acc += a[f] * b[f];
  return acc;
}

double pairwise_term(const FmModel& model, const LatentSums& s) {
  switch (model.mask.mode()) {
    case MaskMode::FirstOrder:
      return 0.0;
    case MaskMode::Full:
      if (!s.present[0]) return 0.0;
      return 0.5 * (dot(s.sum[0], s.sum[0]) - s.sq[0]);
    case MaskMode::PartialByCategory:
      break;
  }
  double acc = 0.0;
  for (std::size_t a = 0; a < kCategoryCount; ++a) {
    if (!s.present[a]) continue;
    const auto ca = kAllCategories[a];
    if (model.mask.allows(ca, ca)) acc += 0.5 * (dot(s.sum[a], s.sum[a]) - s.sq[a]);
    for (std::size_t b = a + 1; b < kCategoryCount; ++b) {
      if (s.present[b] && model.mask.allows(ca, kAllCategories[b])) {
        acc += dot(s.sum[a], s.sum[b]);
      }
    }
  }
  return acc;
}

// Writes dh/dv_i into `out` (length k) for active row i.
void latent_partial(const FmModel& model, const LatentSums& s, std::uint32_t i,
                    std::span<double> out) {
  const auto vi = model.latent(i);
  std::fill(out.begin(), out.end(), 0.0);
  switch (model.mask.mode()) {
    case MaskMode::FirstOrder:
      return;
    case MaskMode::Full:
      for (std::size_t f = 0; f < model.k; ++f) out[f] = s.sum[0][f] - vi[f];
      return;
    case MaskMode::PartialByCategory:
      break;
  }
  const auto ca = model.mask.category_of_index()[i];
  for (std::size_t b = 0; b < kCategoryCount; ++b) {
    if (!s.present[b] || !model.mask.allows(ca, kAllCategories[b])) continue;
    for (std::size_t f = 0; f < model.k; ++f) out[f] += s.sum[b][f];
  }
  if (model.mask.allows(ca, ca)) {
    for (std::size_t f = 0; f < model.k; ++f) out[f] -= vi[f];
  }
}

double linear_term(const FmModel& model, const SparseVector& x) {
  double acc = model.w0;
  for (auto i : x.indices()) acc += model.w[i];
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// InteractionMask

InteractionMask InteractionMask::first_order() {
  InteractionMask m;
  m.mode_ = MaskMode::FirstOrder;
  return m;
}

InteractionMask InteractionMask::partial(std::span<const CategoryPair> allowed,
                                         std::vector<FeatureCategory> category_of_index) {
  if (allowed.empty()) {
    throw Error(ErrorKind::InvalidArgument, "partial mask needs at least one allowed pair");
  }
  InteractionMask m;
  m.mode_ = MaskMode::PartialByCategory;
  for (const auto& [a, b] : allowed) {
    m.allowed_[cat_index(a)][cat_index(b)] = true;
    m.allowed_[cat_index(b)][cat_index(a)] = true;
  }
  m.category_of_index_ = std::move(category_of_index);
  return m;
}

bool InteractionMask::allows(FeatureCategory a, FeatureCategory b) const {
  switch (mode_) {
    case MaskMode::Full: return true;
    case MaskMode::FirstOrder: return false;
    case MaskMode::PartialByCategory: return allowed_[cat_index(a)][cat_index(b)];
  }
  return false;
}

bool InteractionMask::allows_indices(std::uint32_t i, std::uint32_t j) const {
  if (mode_ != MaskMode::PartialByCategory) return mode_ == MaskMode::Full;
  return allows(category_of_index_.at(i), category_of_index_.at(j));
}

std::vector<CategoryPair> InteractionMask::allowed_pairs() const {
  std::vector<CategoryPair> out;
  for (std::size_t a = 0; a < kCategoryCount; ++a) {
    for (std::size_t b = a; b < kCategoryCount; ++b) {
      if (allows(kAllCategories[a], kAllCategories[b])) {
        out.emplace_back(kAllCategories[a], kAllCategories[b]);
      }
    }
  }
  return out;
}

void InteractionMask::check_dim(std::size_t dim) const {
  if (mode_ == MaskMode::PartialByCategory && category_of_index_.size() != dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "partial mask covers " + std::to_string(category_of_index_.size()) +
                    " features but the model has " + std::to_string(dim));
  }
}

// ---------------------------------------------------------------------------
// FmModel

void FmModel::validate() const {
  if (dim == 0 || k == 0) throw Error(ErrorKind::InvalidArgument, "model needs n >= 1 and k >= 1");
  if (w.size() != dim || v.size() != dim * k) {
    throw Error(ErrorKind::Format, "model parameter arrays do not match (dim, k)");
  }
  const auto finite = [](double x) { return std::isfinite(x); };
  if (!std::isfinite(w0) || !std::all_of(w.begin(), w.end(), finite) ||
      !std::all_of(v.begin(), v.end(), finite)) {
    throw Error(ErrorKind::Format, "model contains non-finite parameters");
  }
  mask.check_dim(dim);
}

FmModel init_model(std::size_t n, std::size_t k, std::uint64_t seed, double init_scale) {
  if (n == 0 || k == 0) throw Error(ErrorKind::InvalidArgument, "init_model needs n >= 1 and k >= 1");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
    throw Error(ErrorKind::InvalidArgument, "init_scale must be finite and nonnegative");
  }
  FmModel m;
  m.dim = n;
  m.k = k;
  m.w.assign(n, 0.0);
  m.v.resize(n * k);
  std::mt19937_64 rng(detail::mix_seed(seed, detail::kInitStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& x : m.v) x = init_scale * normal(rng);
  return m;
}

double predict_raw(const FmModel& model, const SparseVector& x) {
  check_input(model, x);
  return linear_term(model, x) + pairwise_term(model, latent_sums(model, x));
}

double predict_bruteforce(const FmModel& model, const SparseVector& x) {
  check_input(model, x);
  const auto idx = x.indices();
  double acc = linear_term(model, x);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      if (model.mask.allows_indices(idx[a], idx[b])) {
        acc += dot(model.latent(idx[a]), model.latent(idx[b]));
      }
    }
  }
  return acc;
}

double sigmoid(double h) {
  if (h >= 0.0) return 1.0 / (1.0 + std::exp(-h));
  const double e = std::exp(h);
  return e / (1.0 + e);
}

double predict_proba(const FmModel& model, const SparseVector& x) {
  return sigmoid(predict_raw(model, x));
}

Label classify(double probability, double threshold) {
  return probability > threshold ? Label::Malware : Label::Clean;
}

// ---------------------------------------------------------------------------
// CrossingOracle

CrossingOracle CrossingOracle::from_model(const FmModel& model) {
  CrossingOracle o;
  o.dim = model.dim;
  o.w0 = model.w0;
  o.w = model.w;
  o.weights.assign(model.dim * model.dim, 0.0);
  for (std::size_t i = 0; i < model.dim; ++i) {
    for (std::size_t j = i + 1; j < model.dim; ++j) {
      if (!model.mask.allows_indices(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j))) {
        continue;
      }
      const double wij = dot(model.latent(i), model.latent(j));
      o.weights[i * model.dim + j] = wij;
      o.weights[j * model.dim + i] = wij;
    }
  }
  return o;
}

double CrossingOracle::predict(const SparseVector& x) const {
  if (x.dim() != dim) throw Error(ErrorKind::DimensionMismatch, "input dim mismatch");
  double acc = w0;
  const auto idx = x.indices();
  for (std::size_t a = 0; a < idx.size(); ++a) {
    acc += w[idx[a]];
    for (std::size_t b = a + 1; b < idx.size(); ++b) acc += pair_weight(idx[a], idx[b]);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Loss and gradient

namespace {

double regularizer(const FmModel& model, const SparseVector& x, double l2_w, double l2_v) {
  double acc = 0.0;
  for (auto i : x.indices()) {
    acc += l2_w * model.w[i] * model.w[i];
    const auto vi = model.latent(i);
    acc += l2_v * dot(vi, vi);
  }
  return 0.5 * acc;
}

double margin_of(Label y, double h) { return static_cast<double>(to_int(y)) * h; }

}  // namespace

double loss(const FmModel& model, const SparseVector& x, Label y, double l2_w, double l2_v) {
  const double h = predict_raw(model, x);
  return softplus(-margin_of(y, h)) + regularizer(model, x, l2_w, l2_v);
}

LossGradient loss_and_gradient(const FmModel& model, const SparseVector& x, Label y,
                               double l2_w, double l2_v) {
  if (y != Label::Malware && y != Label::Clean) {
    throw Error(ErrorKind::InvalidArgument, "label must be +1 or -1");
  }
  check_input(model, x);
  const auto sums = latent_sums(model, x);
  const double h = linear_term(model, x) + pairwise_term(model, sums);
  const double yv = static_cast<double>(to_int(y));
  // d/dh ln(1 + exp(-y h)) = -y * sigmoid(-y h)
  const double dl_dh = -yv * sigmoid(-yv * h);

  LossGradient out;
  out.loss = softplus(-yv * h) + regularizer(model, x, l2_w, l2_v);
  auto& g = out.grad;
  g.w0 = dl_dh;
  const auto idx = x.indices();
  g.rows.assign(idx.begin(), idx.end());
  g.w.resize(idx.size());
  g.v.resize(idx.size() * model.k);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto i = idx[r];
    g.w[r] = dl_dh + l2_w * model.w[i];
    std::span<double> gv(g.v.data() + r * model.k, model.k);
    latent_partial(model, sums, i, gv);
    const auto vi = model.latent(i);
    for (std::size_t f = 0; f < model.k; ++f) gv[f] = dl_dh * gv[f] + l2_v * vi[f];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  if (epochs == 0) throw Error(ErrorKind::InvalidArgument, "epochs must be positive");
  if (batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch_size must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "Adam epsilon must be positive");
  if (!(init_scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "init_scale must be positive");
  if (!(l2_w >= 0.0) || !(l2_v >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "regularization strengths must be nonnegative");
  }
}

void require_both_classes(std::span<const Label> labels) {
  const bool pos = std::find(labels.begin(), labels.end(), Label::Malware) != labels.end();
  const bool neg = std::find(labels.begin(), labels.end(), Label::Clean) != labels.end();
  if (!pos || !neg) throw Error(ErrorKind::DegenerateLabels, "degenerate labels");
}

FmModel train(const LabeledDataset& ds, const TrainConfig& cfg, const InteractionMask& mask) {
  cfg.validate();
  ds.validate();
  if (ds.empty()) throw Error(ErrorKind::InvalidArgument, "cannot train on an empty dataset");
  require_both_classes(ds.labels);
  mask.check_dim(ds.dim);

  FmModel model = init_model(ds.dim, cfg.k, cfg.seed, cfg.init_scale);
  model.mask = mask;

  const std::size_t n = ds.dim;
  const std::size_t k = cfg.k;
  double grad_w0 = 0.0;
  std::vector<double> grad_w(n, 0.0), grad_v(n * k, 0.0);
  double m_w0 = 0.0, s_w0 = 0.0;
  std::vector<double> m_w(n, 0.0), s_w(n, 0.0), m_v(n * k, 0.0), s_v(n * k, 0.0);
  detail::Adam adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  std::mt19937_64 rng(detail::mix_seed(cfg.seed, detail::kShuffleStream));

  detail::for_each_minibatch(ds.size(), cfg.epochs, cfg.batch_size, rng, [&](auto batch) {
    grad_w0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) grad_w[i] = cfg.l2_w * model.w[i];
    for (std::size_t j = 0; j < n * k; ++j) grad_v[j] = cfg.l2_v * model.v[j];

    const double scale = 1.0 / static_cast<double>(batch.size());
    for (auto row : batch) {
      const auto lg = loss_and_gradient(model, ds.vectors[row], ds.labels[row], 0.0, 0.0);
      grad_w0 += scale * lg.grad.w0;
      for (std::size_t r = 0; r < lg.grad.rows.size(); ++r) {
        const auto i = lg.grad.rows[r];
        grad_w[i] += scale * lg.grad.w[r];
        for (std::size_t f = 0; f < k; ++f) grad_v[i * k + f] += scale * lg.grad.v[r * k + f];
      }
    }

    adam.next_step();
    adam.update(model.w0, grad_w0, m_w0, s_w0);
    adam.update(model.w, grad_w, m_w, s_w);
    adam.update(model.v, grad_v, m_v, s_v);
  });
  return model;
}

}  // namespace fmdroid
