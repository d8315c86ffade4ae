#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fmdroid/extraction.hpp"
#include "support.hpp"

using namespace fmdroid;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = FMDROID_FIXTURES;

FeatureToken tok(const std::string& canonical) { return FeatureToken::parse(canonical); }

std::string invoke(const std::string& api) {
  return "    invoke-virtual {v0, v1}, " + api + "(Ljava/lang/String;)V\n";
}

Dictionaries sms_dicts(bool listed = true) {
  Dictionaries d;
  d.perm_map.add("Landroid/telephony/SmsManager;->sendTextMessage", {"android.permission.SEND_SMS"});
  if (listed) d.lists.restricted.insert("Landroid/telephony/SmsManager;->sendTextMessage");
  d.lists.suspicious.insert("Ljava/lang/Runtime;->exec");
  return d;
}

TokenSet expected_tokens(const fs::path& file) {
  TokenSet out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.insert(tok(line));
  }
  return out;
}

}  // namespace

TEST_CASE("api call parsing") {
  const auto c = ApiCall::parse("Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;)V");
  REQUIRE(c);
  CHECK(c->class_descriptor == "Landroid/telephony/SmsManager;");
  CHECK(c->method_name == "sendTextMessage");
  CHECK(c->canonical() == "Landroid/telephony/SmsManager;->sendTextMessage");
  CHECK(ApiCall::parse("Ljava/lang/Object;-><init>()V")->method_name == "<init>");
  CHECK_FALSE(ApiCall::parse("android/telephony/SmsManager;->x"));
  CHECK_FALSE(ApiCall::parse("Landroid/Foo;"));
  CHECK_FALSE(ApiCall::parse("Landroid/Foo;->"));
}

TEST_CASE("manifest permission") {
  const auto m = parse_manifest(
      R"(<manifest xmlns:android="http://schemas.android.com/apk/res/android">
  <uses-permission android:name="android.permission.SEND_SMS"/>
  <application/>
</manifest>)");
  CHECK(m.permissions == TokenSet{tok("perm::android.permission.SEND_SMS")});
  CHECK(m.components.empty());
  CHECK(m.hardware.empty());
  CHECK(m.intent_filters.empty());
}

TEST_CASE("manifest intent filter action") {
  const auto m = parse_manifest(
      R"(<manifest><application><receiver android:name=".Boot"><intent-filter><action android:name="android.intent.action.BOOT_COMPLETED"/></intent-filter></receiver></application></manifest>)");
  CHECK(m.intent_filters == TokenSet{tok("intent::android.intent.action.BOOT_COMPLETED")});
  CHECK(m.components == TokenSet{tok("comp::.Boot")});
}

TEST_CASE("empty application manifest") {
  const auto m = parse_manifest("<manifest><application/></manifest>");
  CHECK(m.components.empty());
  CHECK(m.hardware.empty());
  CHECK(m.permissions.empty());
  CHECK(m.intent_filters.empty());
  CHECK(m.warnings == 0);
}

TEST_CASE("manifest elements without a name are skipped with a warning") {
  const auto m = parse_manifest(
      R"(<manifest><uses-permission/><uses-feature android:glEsVersion="0x20000"/><uses-feature android:name="android.hardware.wifi"/></manifest>)");
  CHECK(m.warnings == 2);
  CHECK(m.hardware == TokenSet{tok("hw::android.hardware.wifi")});
  CHECK(m.permissions.empty());
}

TEST_CASE("actions outside intent filters are not intent tokens") {
  const auto m = parse_manifest(R"(<manifest><action android:name="x.y"/></manifest>)");
  CHECK(m.intent_filters.empty());
}

TEST_CASE("malformed manifest is a parse error") {
  CHECK_THROWS_AS(parse_manifest("<manifest><application></manifest>"), Error);
  CHECK_THROWS_AS(parse_manifest(""), Error);
}

TEST_CASE("smali invoke extraction") {
  const auto s = parse_smali_calls(
      "    invoke-virtual {v0, v1}, Landroid/telephony/SmsManager;->sendTextMessage(...)V\n");
  REQUIRE(s.calls.size() == 1);
  CHECK(s.calls.begin()->canonical() == "Landroid/telephony/SmsManager;->sendTextMessage");

  CHECK(parse_smali_calls(".class LA;\n.method a()V\nreturn-void\n.end method\n").calls.empty());

  const auto twice = parse_smali_calls(invoke("LA;->f") + "const/4 v0, 0x1\n" + invoke("LA;->f"));
  CHECK(twice.calls.size() == 1);

  const auto range = parse_smali_calls("invoke-static/range {v0 .. v5}, LB;->g(IIIII)V\n");
  CHECK(range.calls.size() == 1);
}

TEST_CASE("property: smali calls ignore line order and file boundaries") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> lines;
    for (int i = 0; i < 20; ++i) {
      lines.push_back(invoke("Lp/C" + std::to_string(rng() % 7) + ";->m" + std::to_string(rng() % 5)));
      if (rng() % 3 == 0) lines.push_back("    move-result-object v0\n");
    }
    std::string whole;
    for (const auto& l : lines) whole += l;
    const auto ref = parse_smali_calls(whole).calls;

    std::shuffle(lines.begin(), lines.end(), rng);
    const auto cut = rng() % lines.size();
    std::string a, b;
    for (std::size_t i = 0; i < lines.size(); ++i) (i < cut ? a : b) += lines[i];
    auto merged = parse_smali_calls(a).calls;
    merged.merge(parse_smali_calls(b).calls);
    CHECK(merged == ref);
  }
}

TEST_CASE("code features with the permission declared") {
  const auto d = sms_dicts();
  ApiCallSet calls{*ApiCall::parse("Landroid/telephony/SmsManager;->sendTextMessage")};
  const auto f = derive_code_features(calls, {tok("perm::android.permission.SEND_SMS")}, d.perm_map,
                                      d.lists);
  CHECK(f.used_permissions == TokenSet{tok("used_perm::android.permission.SEND_SMS")});
  CHECK(f.restricted == TokenSet{tok("api_restr::Landroid/telephony/SmsManager;->sendTextMessage")});
  CHECK(f.suspicious.empty());
}

TEST_CASE("code features with the permission missing") {
  const auto d = sms_dicts();
  ApiCallSet calls{*ApiCall::parse("Landroid/telephony/SmsManager;->sendTextMessage")};
  const auto f = derive_code_features(calls, {}, d.perm_map, d.lists);
  CHECK(f.restricted ==
        TokenSet{tok("api_restr::Landroid/telephony/SmsManager;->sendTextMessage"),
                 tok("api_restr_noperm::Landroid/telephony/SmsManager;->sendTextMessage")});
  CHECK(f.used_permissions == TokenSet{tok("used_perm::android.permission.SEND_SMS")});
}

TEST_CASE("unlisted restricted API still yields used permissions") {
  const auto d = sms_dicts(false);
  ApiCallSet calls{*ApiCall::parse("Landroid/telephony/SmsManager;->sendTextMessage")};
  const auto f = derive_code_features(calls, {}, d.perm_map, d.lists);
  CHECK(f.restricted.empty());
  CHECK(f.used_permissions.size() == 1);
}

TEST_CASE("calls outside every dictionary yield nothing") {
  const auto d = sms_dicts();
  ApiCallSet calls{*ApiCall::parse("Lcom/app/Util;->helper")};
  const auto f = derive_code_features(calls, {}, d.perm_map, d.lists);
  CHECK(f.restricted.empty());
  CHECK(f.suspicious.empty());
  CHECK(f.used_permissions.empty());
}

TEST_CASE("property: used permissions are monotone and code tokens come from calls") {
  const auto d = Dictionaries::load_dir(kFixtures / "dicts");
  std::vector<std::string> pool;
  for (const auto& [api, perms] : d.perm_map.entries()) pool.push_back(api);
  pool.insert(pool.end(), d.lists.suspicious.begin(), d.lists.suspicious.end());
  pool.push_back("Lcom/app/Util;->helper");
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    ApiCallSet calls;
    for (int i = 0; i < 6; ++i) calls.insert(*ApiCall::parse(pool[rng() % pool.size()]));
    TokenSet declared;
    for (const auto& [api, perms] : d.perm_map.entries()) {
      if (rng() % 4 == 0) declared.insert(FeatureToken::make(FeatureCategory::Permission, *perms.begin()));
    }
    const auto before = derive_code_features(calls, declared, d.perm_map, d.lists);
    std::set<std::string> rendered;
    for (const auto& c : calls) rendered.insert(c.canonical());
    for (const auto& t : before.restricted) CHECK(rendered.contains(t.value));
    for (const auto& t : before.suspicious) CHECK(rendered.contains(t.value));

    auto more = calls;
    more.insert(*ApiCall::parse(pool[rng() % pool.size()]));
    const auto after = derive_code_features(more, declared, d.perm_map, d.lists);
    CHECK(std::includes(after.used_permissions.begin(), after.used_permissions.end(),
                        before.used_permissions.begin(), before.used_permissions.end(),
                        CanonicalLess{}));
  }
}

TEST_CASE("golden fixture bundles") {
  const auto d = Dictionaries::load_dir(kFixtures / "dicts");
  for (const auto* name : {"tiny_sms_app", "flashlight", "loader"}) {
    CAPTURE(name);
    const auto dir = kFixtures / "bundles" / name;
    const auto got = extract_bundle(AppBundle::load(dir), d);
    CHECK(got.tokens == expected_tokens(dir / "expected.tokens"));
    CHECK(got.manifest_warnings == 0);
    CHECK(got.smali_warnings == 0);
    for (const auto& t : got.tokens) {
      CHECK(static_cast<std::size_t>(t.category) < kCategoryCount);
    }
  }
}

TEST_CASE("bundle without smali yields manifest tokens only") {
  test::TempDir dir("bundle");
  fs::copy_file(kFixtures / "bundles/tiny_sms_app/AndroidManifest.xml", dir / "AndroidManifest.xml");
  fs::create_directories(dir / "smali");
  const auto d = Dictionaries::load_dir(kFixtures / "dicts");
  const auto got = extract_bundle(AppBundle::load(dir.path()), d).tokens;
  const auto manifest = parse_manifest(AppBundle::load(dir.path()).manifest_text);
  TokenSet expected;
  for (const auto* part : {&manifest.components, &manifest.hardware, &manifest.permissions,
                           &manifest.intent_filters}) {
    expected.insert(part->begin(), part->end());
  }
  CHECK(got == expected);
}

TEST_CASE("smali file order does not matter") {
  const auto d = Dictionaries::load_dir(kFixtures / "dicts");
  auto bundle = AppBundle::load(kFixtures / "bundles/loader");
  REQUIRE(bundle.smali_files.size() == 2);
  const auto ref = extract_bundle(bundle, d).tokens;
  std::reverse(bundle.smali_files.begin(), bundle.smali_files.end());
  CHECK(extract_bundle(bundle, d).tokens == ref);
}

TEST_CASE("bundle loading errors") {
  test::TempDir dir("nobundle");
  try {
    AppBundle::load(dir.path());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}

TEST_CASE("dictionary files") {
  const auto d = Dictionaries::load_dir(FMDROID_DATA "/dicts");
  CHECK(d.lists.restricted.contains("Landroid/telephony/SmsManager;->sendTextMessage"));
  CHECK(d.perm_map.find("Landroid/telephony/SmsManager;->sendTextMessage")->contains(
      "android.permission.SEND_SMS"));

  test::TempDir dir("dicts");
  d.save_dir(dir.path());
  const auto back = Dictionaries::load_dir(dir.path());
  CHECK(back.perm_map.entries() == d.perm_map.entries());
  CHECK(back.lists.restricted == d.lists.restricted);
  CHECK(back.lists.suspicious == d.lists.suspicious);

  fs::remove(dir / std::string(Dictionaries::kSuspiciousFile));
  try {
    Dictionaries::load_dir(dir.path());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingDictionary);
  }
}

TEST_CASE("restricted APIs need a permission entry") {
  Dictionaries d;
  d.lists.restricted.insert("LA;->f");
  CHECK_THROWS_AS(d.lists.validate(d.perm_map), Error);
}

TEST_CASE("permission map format") {
  std::istringstream in("# comment\nLA;->f\tP1,P2\n\nLB;->g\tP3\n");
  const auto m = ApiPermissionMap::read(in);
  CHECK(*m.find("LA;->f") == std::set<std::string>{"P1", "P2"});
  CHECK(*m.find("LB;->g") == std::set<std::string>{"P3"});
  std::ostringstream out;
  m.write(out);
  std::istringstream again(out.str());
  CHECK(ApiPermissionMap::read(again).entries() == m.entries());

  std::istringstream bad("LA;->f\n");
  CHECK_THROWS_AS(ApiPermissionMap::read(bad), Error);
}
