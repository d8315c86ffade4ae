#include "fmdroid/feature_model.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

namespace fmdroid {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
    case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    case ErrorKind::MissingDictionary: return "missing_dictionary";
    case ErrorKind::DegenerateLabels: return "degenerate_labels";
    case ErrorKind::Format: return "format";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kNoPermTag = "api_restr_noperm";

// Lexicographic compare of the concatenations a0+a1+a2 and b0+b1+b2.
int compare_concat(std::span<const std::string_view, 3> a,
                   std::span<const std::string_view, 3> b) {
  std::size_t ai = 0, bi = 0, ao = 0, bo = 0;
  while (true) {
    while (ai < 3 && ao == a[ai].size()) { ++ai; ao = 0; }
    while (bi < 3 && bo == b[bi].size()) { ++bi; bo = 0; }
    if (ai == 3 && bi == 3) return 0;
    if (ai == 3) return -1;
    if (bi == 3) return 1;
    const auto ca = static_cast<unsigned char>(a[ai][ao]);
    const auto cb = static_cast<unsigned char>(b[bi][bo]);
    if (ca != cb) return ca < cb ? -1 : 1;
    ++ao;
    ++bo;
  }
}

}  // namespace

std::string_view category_tag(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::Component: return "comp";
    case FeatureCategory::Hardware: return "hw";
    case FeatureCategory::Permission: return "perm";
    case FeatureCategory::IntentFilter: return "intent";
    case FeatureCategory::RestrictedApi: return "api_restr";
    case FeatureCategory::SuspiciousApi: return "api_susp";
    case FeatureCategory::UsedPermission: return "used_perm";
  }
  throw Error(ErrorKind::InvalidArgument, "unknown feature category");
}

std::optional<FeatureCategory> category_from_tag(std::string_view tag) {
  if (tag == kNoPermTag) return FeatureCategory::RestrictedApi;
  for (auto c : kAllCategories) {
    if (category_tag(c) == tag) return c;
  }
  return std::nullopt;
}

bool is_valid_token_value(std::string_view value) {
  if (value.empty() || value.find("::") != std::string_view::npos) return false;
  return std::none_of(value.begin(), value.end(), [](char ch) {
    return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' ||
           ch == '\f';
  });
}

FeatureToken FeatureToken::make(FeatureCategory category, std::string value,
                                bool missing_permission) {
  if (!is_valid_token_value(value)) {
    throw Error(ErrorKind::InvalidArgument, "invalid token value '" + value + "'");
  }
  if (missing_permission && category != FeatureCategory::RestrictedApi) {
    throw Error(ErrorKind::InvalidArgument,
                "missing-permission flag is only valid on restricted API tokens");
  }
  return FeatureToken{category, std::move(value), missing_permission};
}

FeatureToken FeatureToken::parse(std::string_view canonical) {
  const auto sep = canonical.find("::");
  if (sep == std::string_view::npos) {
    throw Error(ErrorKind::Parse, "token without '::' separator: '" +
                                      std::string(canonical) + "'");
  }
  const auto tag = canonical.substr(0, sep);
  const auto category = category_from_tag(tag);
  if (!category) {
    throw Error(ErrorKind::Parse, "unknown token category '" + std::string(tag) + "'");
  }
  return make(*category, std::string(canonical.substr(sep + 2)), tag == kNoPermTag);
}

std::string_view FeatureToken::tag() const {
  return missing_permission ? kNoPermTag : category_tag(category);
}

std::string FeatureToken::canonical() const {
  std::string out(tag());
  out += "::";
  out += value;
  return out;
}

bool CanonicalLess::operator()(const FeatureToken& a, const FeatureToken& b) const {
  const std::array<std::string_view, 3> ra{a.tag(), "::", a.value};
  const std::array<std::string_view, 3> rb{b.tag(), "::", b.value};
  return compare_concat(ra, rb) < 0;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(std::span<const TokenSet> token_sets) {
  TokenSet all;
  for (const auto& set : token_sets) all.insert(set.begin(), set.end());
  if (all.empty()) throw Error(ErrorKind::InvalidArgument, "empty feature space");
  return from_sorted(std::vector<FeatureToken>(all.begin(), all.end()));
}

Vocabulary Vocabulary::from_sorted(std::vector<FeatureToken> tokens) {
  Vocabulary vocab;
  vocab.index_.reserve(tokens.size());
  CanonicalLess less;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !less(tokens[i - 1], tokens[i])) {
      throw Error(ErrorKind::Format, "vocabulary tokens must be strictly increasing (" +
                                         tokens[i].canonical() + ")");
    }
    vocab.index_.emplace(tokens[i].canonical(), static_cast<std::uint32_t>(i));
  }
  vocab.tokens_ = std::move(tokens);
  return vocab;
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::vector<FeatureToken> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      tokens.push_back(FeatureToken::parse(line));
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse,
                  "vocabulary line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return from_sorted(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open vocabulary " + path.string());
  return read(in);
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& t : tokens_) out << t.canonical() << '\n';
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write vocabulary " + path.string());
  write(out);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::optional<std::uint32_t> Vocabulary::index_of(const FeatureToken& token) const {
  const auto it = index_.find(token.canonical());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<FeatureCategory> Vocabulary::categories() const {
  std::vector<FeatureCategory> out;
  out.reserve(tokens_.size());
  for (const auto& t : tokens_) out.push_back(t.category);
  return out;
}

// ---------------------------------------------------------------------------
// SparseVector / encoding

SparseVector::SparseVector(std::vector<std::uint32_t> indices, std::size_t dim)
    : indices_(std::move(indices)), dim_(dim) {
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] >= dim_) {
      throw Error(ErrorKind::DimensionMismatch,
                  "index " + std::to_string(indices_[i]) + " out of range for dim " +
                      std::to_string(dim_));
    }
    if (i > 0 && indices_[i - 1] >= indices_[i]) {
      throw Error(ErrorKind::InvalidArgument, "sparse indices must be strictly increasing");
    }
  }
}

bool SparseVector::contains(std::uint32_t index) const {
  return std::binary_search(indices_.begin(), indices_.end(), index);
}

EncodeResult encode(const TokenSet& tokens, const Vocabulary& vocab) {
  if (vocab.empty()) throw Error(ErrorKind::InvalidArgument, "empty vocabulary");
  std::vector<std::uint32_t> indices;
  indices.reserve(tokens.size());
  std::size_t dropped = 0;
  for (const auto& t : tokens) {
    if (auto idx = vocab.index_of(t)) {
      indices.push_back(*idx);
    } else {
      ++dropped;
    }
  }
  // TokenSet and the vocabulary share one order, so indices are already sorted.
  return {SparseVector(std::move(indices), vocab.size()), dropped};
}

TokenSet decode(const SparseVector& x, const Vocabulary& vocab) {
  if (x.dim() != vocab.size()) {
    throw Error(ErrorKind::DimensionMismatch, "vector dim does not match vocabulary size");
  }
  TokenSet out;
  for (auto i : x.indices()) out.insert(vocab.token(i));
  return out;
}

Label label_from_int(int value) {
  if (value == 1) return Label::Malware;
  if (value == -1) return Label::Clean;
  throw Error(ErrorKind::InvalidArgument, "label must be +1 or -1, got " + std::to_string(value));
}

// ---------------------------------------------------------------------------
// LabeledDataset

void LabeledDataset::validate() const {
  if (labels.size() != vectors.size()) {
    throw Error(ErrorKind::InvalidArgument, "labels and vectors differ in length");
  }
  if (!families.empty() && families.size() != vectors.size()) {
    throw Error(ErrorKind::InvalidArgument, "families and vectors differ in length");
  }
  for (const auto& v : vectors) {
    if (v.dim() != dim) {
      throw Error(ErrorKind::DimensionMismatch, "sample dim " + std::to_string(v.dim()) +
                                                    " differs from dataset dim " +
                                                    std::to_string(dim));
    }
  }
  for (const auto& f : families) {
    if (!f.empty() && !is_valid_token_value(f)) {
      throw Error(ErrorKind::InvalidArgument, "invalid family name '" + f + "'");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.dim = dim;
  out.vectors.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (auto r : rows) {
    out.vectors.push_back(vectors.at(r));
    out.labels.push_back(labels.at(r));
    if (has_families()) out.families.push_back(families.at(r));
  }
  return out;
}

void write_tokens(const TokenSet& tokens, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& t : tokens) out << t.canonical() << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

TokenSet read_tokens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  TokenSet out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.insert(FeatureToken::parse(line));
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " +
                                        e.what());
    }
  }
  return out;
}

}  // namespace fmdroid
