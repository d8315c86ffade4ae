#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "fmdroid/feature_model.hpp"
#include "fmdroid/fm_core.hpp"

namespace fmdroid::test {

inline SparseVector random_vector(std::mt19937_64& rng, std::size_t n, double density = 0.3) {
  std::bernoulli_distribution on(density);
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (on(rng)) idx.push_back(i);
  }
  return SparseVector(std::move(idx), n);
}

inline FmModel random_model(std::mt19937_64& rng, std::size_t n, std::size_t k, double scale = 0.5) {
  std::normal_distribution<double> g(0.0, scale);
  FmModel m;
  m.dim = n;
  m.k = k;
  m.w0 = g(rng);
  m.w.resize(n);
  m.v.resize(n * k);
  for (auto& x : m.w) x = g(rng);
  for (auto& x : m.v) x = g(rng);
  return m;
}

inline std::vector<FeatureCategory> random_categories(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, kCategoryCount - 1);
  std::vector<FeatureCategory> out(n);
  for (auto& c : out) c = kAllCategories[pick(rng)];
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fmdroid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fmdroid::test
