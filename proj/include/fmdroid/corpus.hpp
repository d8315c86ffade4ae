#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fmdroid/extraction.hpp"
#include "fmdroid/feature_model.hpp"

namespace fmdroid {

/// Number of synthetic names generated per primitive pool.
struct PoolSizes {
  std::size_t component = 200;
  std::size_t hardware = 50;
  std::size_t permission = 150;
  std::size_t intent = 150;
  std::size_t restricted_api = 120;
  std::size_t suspicious_api = 120;
  std::size_t mapped_api = 40;          // permission-mapped APIs on neither list
  std::size_t mapped_permission = 60;   // the first permissions of the pool carry API mappings

  friend bool operator==(const PoolSizes&, const PoolSizes&) = default;
};

/// An app is malware when both tokens of a rule are present and the rule
/// fires. Tokens must be manifest tokens (comp, hw, perm, intent) or
/// suspicious API calls.
struct MaliceRule {
  FeatureToken first;
  FeatureToken second;
  std::string family;
  double fire_probability = 1.0;

  friend bool operator==(const MaliceRule&, const MaliceRule&) = default;
};

struct CorpusSpec {
  std::size_t n_apps = 2000;
  double malware_fraction = 0.5;
  PoolSizes pools;
  std::vector<MaliceRule> rules;
  // Background primitive of popularity rank r (1-based, seeded permutation)
  // is active with probability min(1, base_activation * r^-popularity_exponent).
  // With exponent 0 every primitive shares the probability base_activation.
  // Calibrated from target_active_mean when unset.
  std::optional<double> base_activation;
  double popularity_exponent = 1.5;
  double noise_rate = 0.01;
  double target_active_mean = 73.0;
  // Probability that a malware app carries one token of a non-matching rule
  // (each of the two singletons). Clean apps get the rate that equalizes the
  // class marginals.
  double decoy_rate = 0.0;
  // Allowed difference between the class-conditional marginals of any rule token.
  double marginal_margin = 0.05;
  std::uint64_t seed = 42;

  void validate() const;

  static CorpusSpec from_json(const std::string& text);
  static CorpusSpec load(const std::filesystem::path& path);
  std::string to_json() const;

  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

/// 2,000 apps, three pairwise rules (families FamilyA..C), 1% label noise.
CorpusSpec default_desk_spec();

/// Name of the i-th synthetic token of a pool ("com.synth.permission.P0007",
/// "Lcom/synth/suspicious/S0003;->call", ...).
std::string pool_name(FeatureCategory category, std::size_t i);
std::string mapped_api_name(std::size_t i);

/// Dictionaries matching the corpus pools (rule APIs included).
Dictionaries synthetic_dictionaries(const CorpusSpec& spec);

/// Expected active-token count per app for a background activation scale.
double expected_active_count(const CorpusSpec& spec, double scale);
/// Solves expected_active_count(spec, scale) == target_active_mean.
double calibrate_activation(const CorpusSpec& spec);

struct AppTruth {
  std::string app_id;
  Label true_label = Label::Clean;
  Label label = Label::Clean;  // after noise
  bool flipped = false;
  std::string family;          // "clean" for clean apps
  std::vector<std::size_t> fired_rules;
};

struct GroundTruth {
  std::vector<AppTruth> apps;
  double activation = 0.0;  // background activation scale used
};

struct GeneratedApp {
  std::string app_id;
  TokenSet manifest;  // comp, hw, perm and intent tokens
  ApiCallSet calls;
  TokenSet tokens;    // everything extraction recovers
};

struct GeneratedCorpus {
  CorpusSpec spec;
  Dictionaries dicts;
  std::vector<GeneratedApp> apps;
  GroundTruth truth;
  Vocabulary vocab;
  LabeledDataset dataset;  // families are the generating family names
};

GeneratedCorpus generate_dataset(const CorpusSpec& spec);

/// Writes `<out_dir>/<app_id>/{AndroidManifest.xml,smali/...}`, labels.csv
/// and dicts/, and returns the in-memory corpus.
GeneratedCorpus generate_bundles(const CorpusSpec& spec, const std::filesystem::path& out_dir);

std::string render_manifest(const GeneratedApp& app);
std::string render_smali(const GeneratedApp& app);

struct LabelRow {
  std::string app_id;
  Label label = Label::Clean;
  std::string family;
};

std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::vector<LabelRow>& rows, const std::filesystem::path& path);

}  // namespace fmdroid
