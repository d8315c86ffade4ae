#include "fmdroid/extraction.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fmdroid/xml.hpp"

namespace fmdroid {

namespace fs = std::filesystem;

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool valid_class_descriptor(std::string_view d) {
  if (d.size() < 3 || d.front() != 'L' || d.back() != ';') return false;
  return std::none_of(d.begin(), d.end() - 1, [](char c) { return c == ';' || is_ws(c); });
}

bool valid_method_name(std::string_view m) {
  if (m.empty()) return false;
  if (m == "<init>" || m == "<clinit>") return true;
  return std::none_of(m.begin(), m.end(), [](char c) {
    return is_ws(c) || c == '(' || c == ')' || c == ';' || c == '>' || c == ',';
  });
}

// Smali invoke opcodes carrying a plain method reference.
bool is_method_invoke(std::string_view opcode) {
  static constexpr std::string_view kKinds[] = {"virtual", "direct", "static", "interface",
                                                "super"};
  auto kind = opcode.substr(7);  // after "invoke-"
  if (kind.ends_with("/range")) kind.remove_suffix(6);
  return std::find(std::begin(kKinds), std::end(kKinds), kind) != std::end(kKinds);
}

// "(args)ret", optionally followed by whitespace and a '#' comment.
bool valid_signature(std::string_view sig) {
  if (sig.empty() || sig.front() != '(') return false;
  const auto close = sig.find(')');
  if (close == std::string_view::npos) return false;
  auto rest = sig.substr(close + 1);
  const auto comment = rest.find('#');
  if (comment != std::string_view::npos) rest = rest.substr(0, comment);
  rest = trim(rest);
  return !rest.empty() && std::none_of(rest.begin(), rest.end(), is_ws);
}

// `line` is "invoke-kind {regs}, Lcls;->method(args)ret"; `opcode_end` is
// the offset just past the opcode.
std::optional<ApiCall> parse_invoke(std::string_view line, std::size_t opcode_end) {
  const auto open = line.find('{');
  const auto close = line.find('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open ||
      open < opcode_end || !trim(line.substr(opcode_end, open - opcode_end)).empty()) {
    return std::nullopt;
  }
  auto rest = trim(line.substr(close + 1));
  if (rest.empty() || rest.front() != ',') return std::nullopt;
  rest = trim(rest.substr(1));
  const auto paren = rest.find('(');
  if (paren == std::string_view::npos) return std::nullopt;
  if (!valid_signature(rest.substr(paren))) return std::nullopt;
  return ApiCall::parse(rest.substr(0, paren));
}

}  // namespace

std::optional<ApiCall> ApiCall::parse(std::string_view text) {
  text = trim(text);
  const auto arrow = text.find("->");
  if (arrow == std::string_view::npos) return std::nullopt;
  const auto cls = text.substr(0, arrow);
  auto method = text.substr(arrow + 2);
  if (const auto paren = method.find('('); paren != std::string_view::npos) {
    method = method.substr(0, paren);
  }
  if (!valid_class_descriptor(cls) || !valid_method_name(method)) return std::nullopt;
  return ApiCall{std::string(cls), std::string(method)};
}

AppBundle AppBundle::load(const fs::path& dir) {
  AppBundle bundle;
  const auto manifest = dir / "AndroidManifest.xml";
  if (!fs::is_regular_file(manifest)) {
    throw Error(ErrorKind::Io, "bundle " + dir.string() + " has no AndroidManifest.xml");
  }
  bundle.manifest_text = read_file(manifest);
  if (bundle.manifest_text.empty()) {
    throw Error(ErrorKind::Parse, "empty manifest in " + dir.string());
  }

  std::vector<fs::path> roots;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && (name == "smali" || name.starts_with("smali_classes"))) {
      roots.push_back(entry.path());
    }
  }
  for (const auto& root : roots) {
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().extension() == ".smali") {
        bundle.smali_files.emplace_back(fs::relative(entry.path(), dir).generic_string(),
                                        read_file(entry.path()));
      }
    }
  }
  std::sort(bundle.smali_files.begin(), bundle.smali_files.end());
  return bundle;
}

// ---------------------------------------------------------------------------
// Dictionaries

void ApiPermissionMap::add(const std::string& api, std::set<std::string> permissions) {
  if (!ApiCall::parse(api) || ApiCall::parse(api)->canonical() != api) {
    throw Error(ErrorKind::InvalidArgument, "not a canonical API reference: '" + api + "'");
  }
  for (const auto& p : permissions) {
    if (!is_valid_token_value(p)) {
      throw Error(ErrorKind::InvalidArgument, "invalid permission name '" + p + "'");
    }
  }
  if (permissions.empty()) {
    throw Error(ErrorKind::InvalidArgument, "API '" + api + "' maps to no permission");
  }
  entries_[api].insert(permissions.begin(), permissions.end());
}

const std::set<std::string>* ApiPermissionMap::find(const std::string& api) const {
  const auto it = entries_.find(api);
  return it == entries_.end() ? nullptr : &it->second;
}

ApiPermissionMap ApiPermissionMap::read(std::istream& in) {
  ApiPermissionMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto tab = view.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorKind::Parse,
                  "permission map line " + std::to_string(line_no) + ": missing TAB");
    }
    std::set<std::string> perms;
    std::string_view list = view.substr(tab + 1);
    while (!list.empty()) {
      const auto comma = list.find(',');
      const auto item = trim(list.substr(0, comma));
      if (!item.empty()) perms.emplace(item);
      if (comma == std::string_view::npos) break;
      list.remove_prefix(comma + 1);
    }
    try {
      map.add(std::string(trim(view.substr(0, tab))), std::move(perms));
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse,
                  "permission map line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return map;
}

ApiPermissionMap ApiPermissionMap::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingDictionary, "cannot open permission map " + path.string());
  return read(in);
}

void ApiPermissionMap::write(std::ostream& out) const {
  for (const auto& [api, perms] : entries_) {
    out << api << '\t';
    bool first = true;
    for (const auto& p : perms) {
      if (!first) out << ',';
      out << p;
      first = false;
    }
    out << '\n';
  }
}

std::set<std::string> read_api_list(std::istream& in) {
  std::set<std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto call = ApiCall::parse(view);
    if (!call || call->canonical() != view) {
      throw Error(ErrorKind::Parse, "API list line " + std::to_string(line_no) +
                                        ": not a canonical API reference");
    }
    out.insert(call->canonical());
  }
  return out;
}

std::set<std::string> load_api_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingDictionary, "cannot open API list " + path.string());
  return read_api_list(in);
}

void write_api_list(const std::set<std::string>& list, std::ostream& out) {
  for (const auto& api : list) out << api << '\n';
}

void ApiLists::validate(const ApiPermissionMap& perm_map) const {
  for (const auto& api : restricted) {
    if (!perm_map.contains(api)) {
      throw Error(ErrorKind::InvalidArgument,
                  "restricted API '" + api + "' has no entry in the permission map");
    }
  }
}

Dictionaries Dictionaries::load_dir(const fs::path& dir) {
  Dictionaries d;
  d.perm_map = ApiPermissionMap::load(dir / kPermMapFile);
  d.lists.restricted = load_api_list(dir / kRestrictedFile);
  d.lists.suspicious = load_api_list(dir / kSuspiciousFile);
  d.lists.validate(d.perm_map);
  return d;
}

void Dictionaries::save_dir(const fs::path& dir) const {
  fs::create_directories(dir);
  auto open = [&](std::string_view name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open(kPermMapFile);
    perm_map.write(out);
  }
  {
    auto out = open(kRestrictedFile);
    write_api_list(lists.restricted, out);
  }
  {
    auto out = open(kSuspiciousFile);
    write_api_list(lists.suspicious, out);
  }
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

void walk_manifest(const xml::Element& el, bool in_intent_filter, ManifestFeatures& out) {
  TokenSet* target = nullptr;
  FeatureCategory category{};
  const auto& n = el.name;
  if (n == "activity" || n == "service" || n == "receiver" || n == "provider") {
    target = &out.components;
    category = FeatureCategory::Component;
  } else if (n == "uses-feature") {
    target = &out.hardware;
    category = FeatureCategory::Hardware;
  } else if (n == "uses-permission") {
    target = &out.permissions;
    category = FeatureCategory::Permission;
  } else if (in_intent_filter && (n == "action" || n == "category")) {
    target = &out.intent_filters;
    category = FeatureCategory::IntentFilter;
  }

  if (target != nullptr) {
    const auto name = el.attribute("android:name");
    const auto value = name ? trim(*name) : std::string_view{};
    if (is_valid_token_value(value)) {
      target->insert(FeatureToken::make(category, std::string(value)));
    } else {
      ++out.warnings;
    }
  }

  const bool child_in_filter = in_intent_filter || n == "intent-filter";
  for (const auto& child : el.children) walk_manifest(child, child_in_filter, out);
}

}  // namespace

ManifestFeatures parse_manifest(std::string_view manifest_text) {
  const auto root = xml::parse(manifest_text);
  ManifestFeatures out;
  walk_manifest(root, false, out);
  return out;
}

// ---------------------------------------------------------------------------
// Smali

SmaliScan parse_smali_calls(std::string_view smali_text) {
  SmaliScan scan;
  while (!smali_text.empty()) {
    const auto nl = smali_text.find('\n');
    const auto line = trim(smali_text.substr(0, nl));
    smali_text.remove_prefix(nl == std::string_view::npos ? smali_text.size() : nl + 1);
    if (!line.starts_with("invoke-")) continue;
    const auto opcode_end = line.find_first_of(" \t");
    if (opcode_end == std::string_view::npos || !is_method_invoke(line.substr(0, opcode_end))) {
      ++scan.warnings;
      continue;
    }
    if (auto call = parse_invoke(line, opcode_end)) {
      scan.calls.insert(std::move(*call));
    } else {
      ++scan.warnings;
    }
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Code-derived features

CodeFeatures derive_code_features(const ApiCallSet& calls, const TokenSet& declared_permissions,
                                  const ApiPermissionMap& perm_map, const ApiLists& lists) {
  std::set<std::string> declared;
  for (const auto& t : declared_permissions) {
    if (t.category == FeatureCategory::Permission) declared.insert(t.value);
  }

  CodeFeatures out;
  for (const auto& call : calls) {
    const auto api = call.canonical();
    const auto* required = perm_map.find(api);
    if (lists.suspicious.contains(api)) {
      out.suspicious.insert(FeatureToken::make(FeatureCategory::SuspiciousApi, api));
    }
    if (lists.restricted.contains(api)) {
      out.restricted.insert(FeatureToken::make(FeatureCategory::RestrictedApi, api));
      const bool all_declared =
          required != nullptr && std::all_of(required->begin(), required->end(),
                                             [&](const auto& p) { return declared.contains(p); });
      if (!all_declared) {
        out.restricted.insert(FeatureToken::make(FeatureCategory::RestrictedApi, api, true));
      }
    }
    if (required != nullptr) {
      for (const auto& p : *required) {
        out.used_permissions.insert(FeatureToken::make(FeatureCategory::UsedPermission, p));
      }
    }
  }
  return out;
}

BundleFeatures extract_bundle(const AppBundle& bundle, const Dictionaries& dicts) {
  BundleFeatures out;
  auto manifest = parse_manifest(bundle.manifest_text);
  out.manifest_warnings = manifest.warnings;

  ApiCallSet calls;
  for (const auto& [path, text] : bundle.smali_files) {
    auto scan = parse_smali_calls(text);
    out.smali_warnings += scan.warnings;
    calls.merge(scan.calls);
  }
  const auto code = derive_code_features(calls, manifest.permissions, dicts.perm_map, dicts.lists);

  for (const TokenSet* part : std::initializer_list<const TokenSet*>{&manifest.components, &manifest.hardware, &manifest.permissions,
                               &manifest.intent_filters, &code.restricted, &code.suspicious,
                               &code.used_permissions}) {
    out.tokens.insert(part->begin(), part->end());
  }
  return out;
}

}  // namespace fmdroid
