#include "fmdroid/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fmdroid/detail/optim.hpp"

namespace fmdroid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365;
constexpr std::uint64_t kRankStream = 0x72616e6b;

std::string format_number(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

bool is_rule_category(FeatureCategory c) {
  switch (c) {
    case FeatureCategory::Component:
    case FeatureCategory::Hardware:
    case FeatureCategory::Permission:
    case FeatureCategory::IntentFilter:
    case FeatureCategory::SuspiciousApi:
      return true;
    default:
      return false;
  }
}

std::size_t pool_size(const PoolSizes& p, FeatureCategory c) {
  switch (c) {
    case FeatureCategory::Component: return p.component;
    case FeatureCategory::Hardware: return p.hardware;
    case FeatureCategory::Permission: return p.permission;
    case FeatureCategory::IntentFilter: return p.intent;
    case FeatureCategory::RestrictedApi: return p.restricted_api;
    case FeatureCategory::SuspiciousApi: return p.suspicious_api;
    case FeatureCategory::UsedPermission: return 0;
  }
  return 0;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return prefix + std::string(buf);
}

double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Per-rule state probabilities for clean apps.
struct CleanRates {
  double single = 0.0;  // each of "first only" and "second only"
  double both = 0.0;    // co-active but the rule did not fire
};

double effective_malware_fraction(const CorpusSpec& spec) {
  return spec.rules.empty() ? 0.0 : spec.malware_fraction;
}

// Malware apps carry their own rule's pair, so each rule token has malware
// marginal 1/R + (R-1)/R * decoy. Clean apps reproduce it through singletons
// plus the unfired co-active mass implied by fire_probability.
CleanRates clean_rates(const CorpusSpec& spec, const MaliceRule& rule) {
  const double r = static_cast<double>(spec.rules.size());
  const double pi = spec.malware_fraction;
  const double f = rule.fire_probability;
  CleanRates out;
  if (f < 1.0) out.both = std::min(0.5, pi * (1.0 - f) / (r * f * (1.0 - pi)));
  const double target = 1.0 / r + (r - 1.0) / r * spec.decoy_rate;
  out.single = std::clamp(target - out.both, 0.0, (1.0 - out.both) / 2.0);
  return out;
}

double rule_token_marginal(const CorpusSpec& spec, const MaliceRule& rule) {
  const double r = static_cast<double>(spec.rules.size());
  const double pi = effective_malware_fraction(spec);
  const auto c = clean_rates(spec, rule);
  return pi * (1.0 / r + (r - 1.0) / r * spec.decoy_rate) + (1.0 - pi) * (c.single + c.both);
}

// A background primitive is either a manifest token or an API call. Its
// activation probability is min(1, scale * weight).
struct Primitive {
  std::optional<FeatureToken> manifest;
  std::optional<ApiCall> call;
  double weight = 1.0;
};

struct Layout {
  std::vector<Primitive> background;
  std::vector<bool> direct;  // yields exactly one token when active
  // (background index of a restricted API, its required permission)
  std::vector<std::pair<std::size_t, std::string>> restricted;
  // permission -> background indices of the APIs mapped to it
  std::map<std::string, std::vector<std::size_t>> mapped_calls;
  std::map<std::string, std::size_t> permission_index;
};

std::string restricted_permission(const PoolSizes& p, std::size_t j) {
  return pool_name(FeatureCategory::Permission, j % p.mapped_permission);
}

std::string mapped_only_permission(const PoolSizes& p, std::size_t j) {
  return pool_name(FeatureCategory::Permission, (j * 7 + 3) % p.mapped_permission);
}

Layout make_layout(const CorpusSpec& spec) {
  Layout L;
  TokenSet rule_tokens;
  for (const auto& rule : spec.rules) {
    rule_tokens.insert(rule.first);
    rule_tokens.insert(rule.second);
  }
  const auto add = [&](std::optional<FeatureToken> tok, std::optional<ApiCall> call, bool direct) {
    L.background.push_back({std::move(tok), std::move(call), 1.0});
    L.direct.push_back(direct);
    return L.background.size() - 1;
  };
  const auto& p = spec.pools;
  for (auto cat : {FeatureCategory::Component, FeatureCategory::Hardware,
                   FeatureCategory::Permission, FeatureCategory::IntentFilter}) {
    for (std::size_t i = 0; i < pool_size(p, cat); ++i) {
      auto tok = FeatureToken::make(cat, pool_name(cat, i));
      if (rule_tokens.contains(tok)) continue;
      const auto value = tok.value;
      const auto at = add(std::move(tok), std::nullopt, true);
      if (cat == FeatureCategory::Permission) L.permission_index[value] = at;
    }
  }
  for (std::size_t i = 0; i < p.restricted_api; ++i) {
    const auto at = add(std::nullopt, ApiCall::parse(pool_name(FeatureCategory::RestrictedApi, i)), true);
    const auto perm = restricted_permission(p, i);
    L.restricted.emplace_back(at, perm);
    L.mapped_calls[perm].push_back(at);
  }
  for (std::size_t i = 0; i < p.suspicious_api; ++i) {
    auto tok = FeatureToken::make(FeatureCategory::SuspiciousApi,
                                  pool_name(FeatureCategory::SuspiciousApi, i));
    if (rule_tokens.contains(tok)) continue;
    add(std::nullopt, ApiCall::parse(tok.value), true);
  }
  for (std::size_t i = 0; i < p.mapped_api; ++i) {
    const auto at = add(std::nullopt, ApiCall::parse(mapped_api_name(i)), false);
    L.mapped_calls[mapped_only_permission(p, i)].push_back(at);
  }

  // Popularity ranks are a seeded permutation so that popular primitives
  // are spread over all categories.
  std::vector<std::size_t> rank(L.background.size());
  std::iota(rank.begin(), rank.end(), std::size_t{1});
  std::mt19937_64 rng(detail::mix_seed(spec.seed, kRankStream));
  std::shuffle(rank.begin(), rank.end(), rng);
  for (std::size_t i = 0; i < rank.size(); ++i) {
    L.background[i].weight = std::pow(static_cast<double>(rank[i]), -spec.popularity_exponent);
  }
  return L;
}

double activation(const Primitive& prim, double scale) {
  return std::min(1.0, scale * prim.weight);
}

double expected_count(const CorpusSpec& spec, const Layout& layout, double scale) {
  std::map<std::string, double> rule_perm_marginal;
  double total = 0.0;
  for (const auto& rule : spec.rules) {
    const double m = rule_token_marginal(spec, rule);
    total += 2.0 * m;
    for (const auto* tok : {&rule.first, &rule.second}) {
      if (tok->category == FeatureCategory::Permission) rule_perm_marginal[tok->value] = m;
    }
  }
  const auto declared = [&](const std::string& perm) {
    if (auto it = layout.permission_index.find(perm); it != layout.permission_index.end()) {
      return activation(layout.background[it->second], scale);
    }
    const auto it = rule_perm_marginal.find(perm);
    return it == rule_perm_marginal.end() ? 0.0 : it->second;
  };
  for (std::size_t i = 0; i < layout.background.size(); ++i) {
    if (layout.direct[i]) total += activation(layout.background[i], scale);
  }
  for (const auto& [at, perm] : layout.restricted) {
    total += activation(layout.background[at], scale) * (1.0 - declared(perm));
  }
  for (const auto& [perm, calls] : layout.mapped_calls) {
    double none = 1.0;
    for (auto at : calls) none *= 1.0 - activation(layout.background[at], scale);
    total += 1.0 - none;
  }
  return total;
}

std::string app_id(std::size_t i, std::size_t n) {
  std::size_t width = 5;
  for (std::size_t m = n; m >= 100000; m /= 10) ++width;
  auto digits = std::to_string(i);
  return "app" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

void add_rule_token(const FeatureToken& tok, GeneratedApp& app) {
  if (tok.category == FeatureCategory::SuspiciousApi) {
    app.calls.insert(*ApiCall::parse(tok.value));
  } else {
    app.manifest.insert(tok);
  }
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text, const std::string& context) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, context + ": cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, context + ": write failed for " + path.string());
}

json token_json(const FeatureToken& t) { return t.canonical(); }

FeatureToken token_from_json(const json& j) {
  return FeatureToken::parse(j.get<std::string>());
}

}  // namespace

std::string pool_name(FeatureCategory category, std::size_t i) {
  switch (category) {
    case FeatureCategory::Component: return numbered("com.synth.component.C", i);
    case FeatureCategory::Hardware: return numbered("android.hardware.synth.H", i);
    case FeatureCategory::Permission: return numbered("com.synth.permission.P", i);
    case FeatureCategory::IntentFilter: return numbered("com.synth.intent.action.I", i);
    case FeatureCategory::RestrictedApi: return numbered("Lcom/synth/restricted/R", i) + ";->call";
    case FeatureCategory::SuspiciousApi: return numbered("Lcom/synth/suspicious/S", i) + ";->call";
    case FeatureCategory::UsedPermission: break;
  }
  throw Error(ErrorKind::InvalidArgument, "used_perm tokens have no pool");
}

std::string mapped_api_name(std::size_t i) {
  return numbered("Lcom/synth/mapped/M", i) + ";->call";
}

// ---------------------------------------------------------------------------
// Spec

void CorpusSpec::validate() const {
  const auto fail = [](const std::string& msg) {
    throw Error(ErrorKind::InvalidArgument, "corpus spec: " + msg);
  };
  const auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (n_apps == 0) fail("n_apps must be positive");
  if (!(malware_fraction > 0.0 && malware_fraction < 1.0)) fail("malware_fraction must lie in (0, 1)");
  if (!prob(noise_rate)) fail("noise_rate must lie in [0, 1]");
  if (!(decoy_rate >= 0.0 && decoy_rate <= 0.5)) fail("decoy_rate must lie in [0, 0.5]");
  if (base_activation && !(*base_activation >= 0.0 && std::isfinite(*base_activation))) {
    fail("base_activation must be finite and non-negative");
  }
  if (!(popularity_exponent >= 0.0) || !std::isfinite(popularity_exponent)) {
    fail("popularity_exponent must be finite and non-negative");
  }
  if (!(target_active_mean > 0.0) || !std::isfinite(target_active_mean)) {
    fail("target_active_mean must be positive");
  }
  if (!(marginal_margin >= 0.0)) fail("marginal_margin must be non-negative");
  if (pools.mapped_permission > pools.permission) fail("mapped_permission exceeds the permission pool");
  if ((pools.restricted_api > 0 || pools.mapped_api > 0) && pools.mapped_permission == 0) {
    fail("permission-mapped APIs need mapped_permission > 0");
  }

  TokenSet seen;
  for (const auto& rule : rules) {
    if (!(rule.fire_probability > 0.0 && rule.fire_probability <= 1.0)) {
      fail("fire_probability must lie in (0, 1]");
    }
    if (!is_valid_token_value(rule.family) || rule.family == "clean") {
      fail("invalid family name '" + rule.family + "'");
    }
    if (rule.first == rule.second) fail("rule tokens must be distinct");
    for (const auto* tok : {&rule.first, &rule.second}) {
      if (!is_rule_category(tok->category) || tok->missing_permission) {
        fail("rule token " + tok->canonical() + " is not a manifest token or suspicious API");
      }
      if (pool_size(pools, tok->category) == 0) {
        fail("pool for " + std::string(tok->tag()) + " is empty");
      }
      if (tok->category == FeatureCategory::SuspiciousApi && !ApiCall::parse(tok->value)) {
        fail("rule API " + tok->value + " is not a method reference");
      }
      if (!seen.insert(*tok).second) fail("token " + tok->canonical() + " appears in two rules");
    }
  }
}

std::string CorpusSpec::to_json() const {
  json j;
  j["n_apps"] = n_apps;
  j["malware_fraction"] = malware_fraction;
  j["pools"] = {{"component", pools.component},
                {"hardware", pools.hardware},
                {"permission", pools.permission},
                {"intent", pools.intent},
                {"restricted_api", pools.restricted_api},
                {"suspicious_api", pools.suspicious_api},
                {"mapped_api", pools.mapped_api},
                {"mapped_permission", pools.mapped_permission}};
  j["rules"] = json::array();
  for (const auto& r : rules) {
    j["rules"].push_back({{"first", token_json(r.first)},
                          {"second", token_json(r.second)},
                          {"family", r.family},
                          {"fire_probability", r.fire_probability}});
  }
  j["base_activation"] = base_activation ? json(*base_activation) : json(nullptr);
  j["popularity_exponent"] = popularity_exponent;
  j["noise_rate"] = noise_rate;
  j["target_active_mean"] = target_active_mean;
  j["decoy_rate"] = decoy_rate;
  j["marginal_margin"] = marginal_margin;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

CorpusSpec CorpusSpec::from_json(const std::string& text) {
  CorpusSpec s;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorKind::Parse, "corpus spec must be a JSON object");
    static const std::set<std::string> known = {
        "n_apps", "malware_fraction", "pools", "rules", "base_activation", "popularity_exponent", "noise_rate",
        "target_active_mean", "decoy_rate", "marginal_margin", "seed"};
    for (const auto& [key, _] : j.items()) {
      if (!known.contains(key)) throw Error(ErrorKind::Parse, "unknown corpus spec key '" + key + "'");
    }
    s.n_apps = j.value("n_apps", s.n_apps);
    s.malware_fraction = j.value("malware_fraction", s.malware_fraction);
    if (j.contains("pools")) {
      const auto& p = j.at("pools");
      s.pools.component = p.value("component", s.pools.component);
      s.pools.hardware = p.value("hardware", s.pools.hardware);
      s.pools.permission = p.value("permission", s.pools.permission);
      s.pools.intent = p.value("intent", s.pools.intent);
      s.pools.restricted_api = p.value("restricted_api", s.pools.restricted_api);
      s.pools.suspicious_api = p.value("suspicious_api", s.pools.suspicious_api);
      s.pools.mapped_api = p.value("mapped_api", s.pools.mapped_api);
      s.pools.mapped_permission = p.value("mapped_permission", s.pools.mapped_permission);
    }
    if (j.contains("rules")) {
      for (const auto& r : j.at("rules")) {
        MaliceRule rule;
        rule.first = token_from_json(r.at("first"));
        rule.second = token_from_json(r.at("second"));
        rule.family = r.at("family").get<std::string>();
        rule.fire_probability = r.value("fire_probability", 1.0);
        s.rules.push_back(std::move(rule));
      }
    }
    if (j.contains("base_activation") && !j.at("base_activation").is_null()) {
      s.base_activation = j.at("base_activation").get<double>();
    }
    s.popularity_exponent = j.value("popularity_exponent", s.popularity_exponent);
    s.noise_rate = j.value("noise_rate", s.noise_rate);
    s.target_active_mean = j.value("target_active_mean", s.target_active_mean);
    s.decoy_rate = j.value("decoy_rate", s.decoy_rate);
    s.marginal_margin = j.value("marginal_margin", s.marginal_margin);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("corpus spec: ") + e.what());
  }
  s.validate();
  return s;
}

CorpusSpec CorpusSpec::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open corpus spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

CorpusSpec default_desk_spec() {
  using C = FeatureCategory;
  const auto tok = [](C c, std::size_t i) { return FeatureToken::make(c, pool_name(c, i)); };
  CorpusSpec s;
  s.rules = {
      {tok(C::Permission, 100), tok(C::Permission, 101), "FamilyA", 1.0},
      {tok(C::SuspiciousApi, 0), tok(C::IntentFilter, 0), "FamilyB", 1.0},
      {tok(C::Hardware, 0), tok(C::Component, 0), "FamilyC", 1.0},
  };
  return s;
}

// ---------------------------------------------------------------------------
// Dictionaries and calibration

Dictionaries synthetic_dictionaries(const CorpusSpec& spec) {
  const auto& p = spec.pools;
  Dictionaries d;
  for (std::size_t i = 0; i < p.restricted_api; ++i) {
    const auto api = pool_name(FeatureCategory::RestrictedApi, i);
    d.perm_map.add(api, {restricted_permission(p, i)});
    d.lists.restricted.insert(api);
  }
  for (std::size_t i = 0; i < p.mapped_api; ++i) {
    d.perm_map.add(mapped_api_name(i), {mapped_only_permission(p, i)});
  }
  for (std::size_t i = 0; i < p.suspicious_api; ++i) {
    d.lists.suspicious.insert(pool_name(FeatureCategory::SuspiciousApi, i));
  }
  for (const auto& rule : spec.rules) {
    for (const auto* tok : {&rule.first, &rule.second}) {
      if (tok->category == FeatureCategory::SuspiciousApi) d.lists.suspicious.insert(tok->value);
    }
  }
  return d;
}

double expected_active_count(const CorpusSpec& spec, double scale) {
  return expected_count(spec, make_layout(spec), scale);
}

double calibrate_activation(const CorpusSpec& spec) {
  const auto layout = make_layout(spec);
  const double target = spec.target_active_mean;
  // At this scale every background primitive is always active.
  const double top = std::pow(static_cast<double>(std::max<std::size_t>(layout.background.size(), 1)),
                              spec.popularity_exponent);
  const double lo_count = expected_count(spec, layout, 0.0);
  const double hi_count = expected_count(spec, layout, top);
  if (target < lo_count || target > hi_count) {
    throw Error(ErrorKind::InvalidArgument,
                "infeasible calibration: target_active_mean " + format_number(target) +
                    " outside the reachable range [" + format_number(lo_count) + ", " +
                    format_number(hi_count) + "]");
  }
  double lo = 0.0, hi = top;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * top; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_count(spec, layout, mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Generation

GeneratedCorpus generate_dataset(const CorpusSpec& spec) {
  spec.validate();
  GeneratedCorpus out;
  out.spec = spec;
  out.dicts = synthetic_dictionaries(spec);
  const auto layout = make_layout(spec);
  const double scale = spec.base_activation ? *spec.base_activation : calibrate_activation(spec);
  out.truth.activation = scale;

  const double pi = effective_malware_fraction(spec);
  const auto n_rules = spec.rules.size();
  std::vector<CleanRates> rates;
  for (const auto& rule : spec.rules) rates.push_back(clean_rates(spec, rule));

  out.apps.resize(spec.n_apps);
  out.truth.apps.resize(spec.n_apps);
  for (std::size_t i = 0; i < spec.n_apps; ++i) {
    std::mt19937_64 rng(detail::mix_seed(spec.seed, i));
    auto& app = out.apps[i];
    auto& truth = out.truth.apps[i];
    app.app_id = truth.app_id = app_id(i, spec.n_apps);

    const bool malware = unit(rng) < pi;
    std::size_t own = n_rules;
    if (malware) {
      own = std::min<std::size_t>(static_cast<std::size_t>(unit(rng) * static_cast<double>(n_rules)),
                                  n_rules - 1);
      truth.true_label = Label::Malware;
      truth.family = spec.rules[own].family;
      truth.fired_rules.push_back(own);
    } else {
      truth.family = "clean";
    }

    for (std::size_t r = 0; r < n_rules; ++r) {
      const auto& rule = spec.rules[r];
      const double u = unit(rng);
      bool first = false, second = false;
      if (r == own) {
        first = second = true;
      } else {
        const double single = malware ? spec.decoy_rate : rates[r].single;
        const double both = malware ? 0.0 : rates[r].both;
        if (u < single) first = true;
        else if (u < 2.0 * single) second = true;
        else if (u < 2.0 * single + both) first = second = true;
      }
      if (first) add_rule_token(rule.first, app);
      if (second) add_rule_token(rule.second, app);
    }

    for (const auto& prim : layout.background) {
      if (unit(rng) >= activation(prim, scale)) continue;
      if (prim.manifest) app.manifest.insert(*prim.manifest);
      else app.calls.insert(*prim.call);
    }

    const auto code = derive_code_features(app.calls, app.manifest, out.dicts.perm_map, out.dicts.lists);
    app.tokens = app.manifest;
    for (const TokenSet* part : {&code.restricted, &code.suspicious, &code.used_permissions}) {
      app.tokens.insert(part->begin(), part->end());
    }
    truth.label = truth.true_label;
  }

  const auto flips = static_cast<std::size_t>(std::llround(spec.noise_rate * static_cast<double>(spec.n_apps)));
  if (flips > 0) {
    std::vector<std::size_t> order(spec.n_apps);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(detail::mix_seed(spec.seed, kNoiseStream));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < flips; ++k) {
      auto& t = out.truth.apps[order[k]];
      t.flipped = true;
      t.label = t.label == Label::Malware ? Label::Clean : Label::Malware;
    }
  }

  std::vector<TokenSet> sets;
  sets.reserve(out.apps.size());
  for (const auto& app : out.apps) sets.push_back(app.tokens);
  out.vocab = Vocabulary::build(sets);
  out.dataset.dim = out.vocab.size();
  for (std::size_t i = 0; i < spec.n_apps; ++i) {
    out.dataset.vectors.push_back(encode(out.apps[i].tokens, out.vocab).vector);
    out.dataset.labels.push_back(out.truth.apps[i].label);
    out.dataset.families.push_back(out.truth.apps[i].family);
  }
  return out;
}

std::string render_manifest(const GeneratedApp& app) {
  std::vector<const FeatureToken*> comps, intents;
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n"
    << "<manifest xmlns:android=\"http://schemas.android.com/apk/res/android\" package=\"com.synth."
    << app.app_id << "\">\n";
  for (const auto& t : app.manifest) {
    switch (t.category) {
      case FeatureCategory::Permission:
        o << "    <uses-permission android:name=\"" << xml_escape(t.value) << "\"/>\n";
        break;
      case FeatureCategory::Hardware:
        o << "    <uses-feature android:name=\"" << xml_escape(t.value) << "\"/>\n";
        break;
      case FeatureCategory::Component: comps.push_back(&t); break;
      case FeatureCategory::IntentFilter: intents.push_back(&t); break;
      default: break;
    }
  }
  const auto write_filter = [&](const char* indent) {
    o << indent << "<intent-filter>\n";
    for (const auto* t : intents) {
      o << indent << "    <action android:name=\"" << xml_escape(t->value) << "\"/>\n";
    }
    o << indent << "</intent-filter>\n";
  };
  static constexpr const char* kKinds[] = {"activity", "service", "receiver", "provider"};
  o << "    <application android:label=\"" << app.app_id << "\">\n";
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const char* kind = kKinds[c % 4];
    o << "        <" << kind << " android:name=\"" << xml_escape(comps[c]->value) << '"';
    if (c == 0 && !intents.empty()) {
      o << ">\n";
      write_filter("            ");
      o << "        </" << kind << ">\n";
    } else {
      o << "/>\n";
    }
  }
  if (comps.empty() && !intents.empty()) write_filter("        ");
  o << "    </application>\n</manifest>\n";
  return o.str();
}

std::string render_smali(const GeneratedApp& app) {
  std::ostringstream o;
  o << ".class public Lcom/synth/" << app.app_id << "/Main;\n"
    << ".super Ljava/lang/Object;\n\n"
    << ".method public static run()V\n"
    << "    .registers 1\n\n";
  for (const auto& call : app.calls) {
    o << "    invoke-static {}, " << call.canonical() << "()V\n";
  }
  o << "\n    return-void\n.end method\n";
  return o.str();
}

GeneratedCorpus generate_bundles(const CorpusSpec& spec, const fs::path& out_dir) {
  auto corpus = generate_dataset(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<LabelRow> labels;
  for (std::size_t i = 0; i < corpus.apps.size(); ++i) {
    const auto& app = corpus.apps[i];
    const auto dir = out_dir / app.app_id;
    const auto smali_dir = dir / "smali";
    fs::create_directories(smali_dir, ec);
    if (ec) throw Error(ErrorKind::Io, app.app_id + ": cannot create " + smali_dir.string());
    write_file(dir / "AndroidManifest.xml", render_manifest(app), app.app_id);
    if (!app.calls.empty()) {
      const auto cls_dir = smali_dir / "com" / "synth" / app.app_id;
      fs::create_directories(cls_dir, ec);
      if (ec) throw Error(ErrorKind::Io, app.app_id + ": cannot create " + cls_dir.string());
      write_file(cls_dir / "Main.smali", render_smali(app), app.app_id);
    }
    const auto& t = corpus.truth.apps[i];
    labels.push_back({app.app_id, t.label, t.family});
  }
  write_labels_csv(labels, out_dir / "labels.csv");
  corpus.dicts.save_dir(out_dir / "dicts");
  write_file(out_dir / "spec.json", spec.to_json(), "corpus");
  return corpus;
}

// ---------------------------------------------------------------------------
// labels.csv

void write_labels_csv(const std::vector<LabelRow>& rows, const fs::path& path) {
  std::ostringstream o;
  o << "app_id,label,family\n";
  for (const auto& r : rows) o << r.app_id << ',' << to_int(r.label) << ',' << r.family << '\n';
  write_file(path, o.str(), "labels");
}

std::vector<LabelRow> read_labels_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<LabelRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.starts_with("app_id,")) continue;
    const auto fail = [&](const std::string& msg) {
      throw Error(ErrorKind::Parse, path.filename().string() + " line " + std::to_string(line_no) + ": " + msg);
    };
    const auto c1 = line.find(',');
    if (c1 == std::string::npos || c1 == 0) fail("expected app_id,label[,family]");
    const auto c2 = line.find(',', c1 + 1);
    std::string_view label_text(line.data() + c1 + 1,
                                (c2 == std::string::npos ? line.size() : c2) - c1 - 1);
    if (label_text.starts_with('+')) label_text.remove_prefix(1);
    int value = 0;
    const auto res = std::from_chars(label_text.data(), label_text.data() + label_text.size(), value);
    if (res.ec != std::errc{} || res.ptr != label_text.data() + label_text.size()) {
      fail("bad label '" + std::string(label_text) + "'");
    }
    LabelRow row;
    row.app_id = line.substr(0, c1);
    try {
      row.label = label_from_int(value);
    } catch (const Error& e) {
      fail(e.what());
    }
    if (c2 != std::string::npos) row.family = line.substr(c2 + 1);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fmdroid
