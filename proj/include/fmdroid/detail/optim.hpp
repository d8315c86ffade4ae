#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace fmdroid::detail {

// splitmix64 finalizer; derives independent stream seeds from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream ids used by the trainers.
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kShuffleStream = 1;

// Adam with bias correction. One instance drives any number of parameter
// blocks that share a step counter; each block owns its moment buffers.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon)
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void next_step() {
    ++t_;
    correction1_ = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    correction2_ = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  }

  void update(std::span<double> params, std::span<const double> grad, std::span<double> m,
              std::span<double> v) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = m[i] / correction1_;
      const double v_hat = v[i] / correction2_;
      params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }

  void update(double& param, double grad, double& m, double& v) const {
    update(std::span<double>(&param, 1), std::span<const double>(&grad, 1),
           std::span<double>(&m, 1), std::span<double>(&v, 1));
  }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::uint64_t t_ = 0;
  double correction1_ = 1.0;
  double correction2_ = 1.0;
};

// Runs `epochs` passes; each pass reshuffles the sample order with `rng`
// and hands consecutive slices of at most `batch_size` rows to `fn`.
template <typename Fn>
void for_each_minibatch(std::size_t n, std::size_t epochs, std::size_t batch_size,
                        std::mt19937_64& rng, Fn&& fn) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const auto len = std::min(batch_size, n - start);
      fn(std::span<const std::size_t>(order.data() + start, len));
    }
  }
}

}  // namespace fmdroid::detail
