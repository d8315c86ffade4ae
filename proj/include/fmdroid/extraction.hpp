#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fmdroid/feature_model.hpp"

namespace fmdroid {

/// A method reference "Lpkg/Cls;->method" taken from an invoke instruction.
struct ApiCall {
  std::string class_descriptor;  // "Lpkg/Cls;"
  std::string method_name;

  /// Parses "Lpkg/Cls;->method", optionally followed by a "(args)ret"
  /// signature which is ignored.
  static std::optional<ApiCall> parse(std::string_view text);

  std::string canonical() const { return class_descriptor + "->" + method_name; }

  friend auto operator<=>(const ApiCall&, const ApiCall&) = default;
};

using ApiCallSet = std::set<ApiCall>;

/// A decompiled app: decoded manifest text plus its smali sources.
struct AppBundle {
  std::string manifest_text;
  std::vector<std::pair<std::string, std::string>> smali_files;  // (relative path, text)

  /// Reads `<dir>/AndroidManifest.xml` and `<dir>/smali/**/*.smali`, with
  /// smali files sorted by relative path.
  static AppBundle load(const std::filesystem::path& dir);
};

/// API -> required permissions. File format: "Lcls;->method<TAB>PERM_A[,PERM_B...]".
class ApiPermissionMap {
 public:
  static ApiPermissionMap read(std::istream& in);
  static ApiPermissionMap load(const std::filesystem::path& path);
  void write(std::ostream& out) const;

  void add(const std::string& api, std::set<std::string> permissions);
  const std::set<std::string>* find(const std::string& api) const;
  bool contains(const std::string& api) const { return find(api) != nullptr; }
  const std::map<std::string, std::set<std::string>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::set<std::string>> entries_;
};

/// Restricted (permission-gated) and suspicious API lists, keyed by the
/// canonical ApiCall rendering.
struct ApiLists {
  std::set<std::string> restricted;
  std::set<std::string> suspicious;

  /// Every restricted API must have a permission entry.
  void validate(const ApiPermissionMap& perm_map) const;
};

/// Reads one canonical ApiCall per line.
std::set<std::string> read_api_list(std::istream& in);
std::set<std::string> load_api_list(const std::filesystem::path& path);
void write_api_list(const std::set<std::string>& list, std::ostream& out);

struct Dictionaries {
  ApiPermissionMap perm_map;
  ApiLists lists;

  static constexpr std::string_view kPermMapFile = "api_permissions.tsv";
  static constexpr std::string_view kRestrictedFile = "restricted_apis.txt";
  static constexpr std::string_view kSuspiciousFile = "suspicious_apis.txt";

  /// Loads the three dictionary files from `dir`; a missing file raises
  /// ErrorKind::MissingDictionary.
  static Dictionaries load_dir(const std::filesystem::path& dir);
  void save_dir(const std::filesystem::path& dir) const;
};

struct ManifestFeatures {
  TokenSet components;
  TokenSet hardware;
  TokenSet permissions;
  TokenSet intent_filters;
  std::size_t warnings = 0;  // elements skipped for lacking a usable android:name
};

ManifestFeatures parse_manifest(std::string_view manifest_text);

struct SmaliScan {
  ApiCallSet calls;
  std::size_t warnings = 0;  // invoke lines whose method reference did not parse
};

SmaliScan parse_smali_calls(std::string_view smali_text);

struct CodeFeatures {
  TokenSet restricted;
  TokenSet suspicious;
  TokenSet used_permissions;
};

CodeFeatures derive_code_features(const ApiCallSet& calls, const TokenSet& declared_permissions,
                                  const ApiPermissionMap& perm_map, const ApiLists& lists);

struct BundleFeatures {
  TokenSet tokens;
  std::size_t manifest_warnings = 0;
  std::size_t smali_warnings = 0;
};

BundleFeatures extract_bundle(const AppBundle& bundle, const Dictionaries& dicts);

}  // namespace fmdroid
