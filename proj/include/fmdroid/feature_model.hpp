#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fmdroid/error.hpp"

namespace fmdroid {

// The seven kinds of static features pulled out of an app: four from the
// manifest and three from the decompiled code.
enum class FeatureCategory : std::uint8_t {
  Component = 0,
  Hardware,
  Permission,
  IntentFilter,
  RestrictedApi,
  SuspiciousApi,
  UsedPermission,
};

inline constexpr std::size_t kCategoryCount = 7;

inline constexpr std::array<FeatureCategory, kCategoryCount> kAllCategories = {
    FeatureCategory::Component,     FeatureCategory::Hardware,
    FeatureCategory::Permission,    FeatureCategory::IntentFilter,
    FeatureCategory::RestrictedApi, FeatureCategory::SuspiciousApi,
    FeatureCategory::UsedPermission,
};

/// Short tag used in canonical token renderings ("perm", "api_susp", ...).
std::string_view category_tag(FeatureCategory category);

/// Inverse of category_tag. Also accepts "api_restr_noperm", which maps to
/// RestrictedApi.
std::optional<FeatureCategory> category_from_tag(std::string_view tag);

/// A namespaced string feature, rendered as "<tag>::<value>".
///
/// Restricted-API tokens come in two flavours: plain usage ("api_restr::")
/// and usage without the required permission declared
/// ("api_restr_noperm::"). Both belong to the RestrictedApi category.
struct FeatureToken {
  FeatureCategory category{};
  std::string value;
  bool missing_permission = false;

  /// Builds a token, rejecting empty values, whitespace and "::".
  static FeatureToken make(FeatureCategory category, std::string value,
                           bool missing_permission = false);

  /// Parses a canonical rendering such as "perm::android.permission.SEND_SMS".
  static FeatureToken parse(std::string_view canonical);

  std::string_view tag() const;
  std::string canonical() const;

  friend bool operator==(const FeatureToken&, const FeatureToken&) = default;
};

/// Lexicographic order on the canonical rendering, computed without
/// materializing the rendered strings.
struct CanonicalLess {
  bool operator()(const FeatureToken& a, const FeatureToken& b) const;
};

using TokenSet = std::set<FeatureToken, CanonicalLess>;

/// True iff `value` can serve as a token value.
bool is_valid_token_value(std::string_view value);

/// Bijection between tokens and the dense index range [0, n), ordered
/// lexicographically by canonical rendering.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Union of all token sets. Throws "empty feature space" when the union is
  /// empty.
  static Vocabulary build(std::span<const TokenSet> token_sets);

  /// Adopts an already sorted, duplicate-free token list.
  static Vocabulary from_sorted(std::vector<FeatureToken> tokens);

  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  void write(std::ostream& out) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  const std::vector<FeatureToken>& tokens() const noexcept { return tokens_; }
  const FeatureToken& token(std::size_t index) const { return tokens_.at(index); }
  std::optional<std::uint32_t> index_of(const FeatureToken& token) const;

  /// Category of each index, in index order.
  std::vector<FeatureCategory> categories() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<FeatureToken> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Binary vector x in {0,1}^dim stored as its strictly increasing support.
class SparseVector {
 public:
  SparseVector() = default;
  /// Validates strict monotonicity and bounds.
  SparseVector(std::vector<std::uint32_t> indices, std::size_t dim);

  std::span<const std::uint32_t> indices() const noexcept { return indices_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return indices_.size(); }
  bool contains(std::uint32_t index) const;

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::vector<std::uint32_t> indices_;
  std::size_t dim_ = 0;
};

struct EncodeResult {
  SparseVector vector;
  std::size_t dropped = 0;  // tokens not present in the vocabulary
};

EncodeResult encode(const TokenSet& tokens, const Vocabulary& vocab);

/// Maps active indices back to their tokens.
TokenSet decode(const SparseVector& x, const Vocabulary& vocab);

enum class Label : std::int8_t { Clean = -1, Malware = 1 };

inline int to_int(Label label) { return static_cast<int>(label); }
Label label_from_int(int value);

/// Samples sharing one dimension. `families` is either empty or holds one
/// (possibly empty) family name per sample.
struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<SparseVector> vectors;
  std::vector<Label> labels;
  std::vector<std::string> families;

  std::size_t size() const noexcept { return vectors.size(); }
  bool empty() const noexcept { return vectors.empty(); }
  bool has_families() const noexcept { return !families.empty(); }

  /// Throws on length or dimension inconsistencies.
  void validate() const;

  /// Samples at `rows`, in the given order.
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// Plain-text sparse dataset: a "dim <n>" header, then one sample per line
// "<+1|-1> [fam:<name>] <idx>:1 <idx>:1 ...".
void write_dataset(const LabeledDataset& ds, std::ostream& out);
void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset read_dataset(std::istream& in);
LabeledDataset read_dataset(const std::filesystem::path& path);

// Token list files: one canonical token per line.
void write_tokens(const TokenSet& tokens, const std::filesystem::path& path);
TokenSet read_tokens(const std::filesystem::path& path);

}  // namespace fmdroid
