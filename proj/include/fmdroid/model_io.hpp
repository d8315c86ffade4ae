#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>

#include "fmdroid/baselines.hpp"
#include "fmdroid/fm_core.hpp"

namespace fmdroid {

// Binary model container, little-endian:
//   magic "FMDROID\0" | u32 format_version | u8 model type
//   | type-specific header | u64 parameter count | f64 parameters ...
// FM parameters are w0, w[0..n), then V row-major.

inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class ModelType : std::uint8_t {
  FactorizationMachine = 1,
  Logistic = 2,
  BernoulliNb = 3,
};

struct ModelFileInfo {
  std::uint32_t format_version = 0;
  ModelType type{};
  std::size_t dim = 0;
  std::size_t k = 0;  // 0 for models without latent factors
  MaskMode mask_mode = MaskMode::Full;
  std::size_t parameter_count = 0;  // number of f64 values actually stored
};

void save_model(const FmModel& model, std::ostream& out);
void save_model(const FmModel& model, const std::filesystem::path& path);
FmModel load_model(std::istream& in);
FmModel load_model(const std::filesystem::path& path);

void save_model(const LinearModel& model, const std::filesystem::path& path);
void save_model(const BernoulliNbModel& model, const std::filesystem::path& path);

using AnyModel = std::variant<FmModel, LinearModel, BernoulliNbModel>;

AnyModel load_any_model(std::istream& in);
AnyModel load_any_model(const std::filesystem::path& path);
void save_any_model(const AnyModel& model, const std::filesystem::path& path);

/// Reads the container header and counts the stored parameters.
ModelFileInfo inspect_model(const std::filesystem::path& path);

std::size_t model_dim(const AnyModel& model);

/// Raw score h(x) for FM/logistic models; log-odds for naive Bayes.
double score_raw(const AnyModel& model, const SparseVector& x);
/// Probability that x is malware.
double score_proba(const AnyModel& model, const SparseVector& x);

}  // namespace fmdroid
