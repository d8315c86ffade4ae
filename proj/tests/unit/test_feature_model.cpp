#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fmdroid/feature_model.hpp"
#include "support.hpp"

using namespace fmdroid;

namespace {

FeatureToken perm(const std::string& v) { return FeatureToken::make(FeatureCategory::Permission, v); }

TokenSet tokens(std::initializer_list<FeatureToken> list) { return TokenSet(list.begin(), list.end()); }

std::vector<std::uint32_t> idx(const SparseVector& x) { return {x.indices().begin(), x.indices().end()}; }

}  // namespace

TEST_CASE("token rendering and parsing") {
  const auto t = FeatureToken::parse("perm::android.permission.SEND_SMS");
  CHECK(t.category == FeatureCategory::Permission);
  CHECK(t.value == "android.permission.SEND_SMS");
  CHECK(t.canonical() == "perm::android.permission.SEND_SMS");

  const auto np = FeatureToken::parse("api_restr_noperm::Lx/Y;->z");
  CHECK(np.category == FeatureCategory::RestrictedApi);
  CHECK(np.missing_permission);
  CHECK(np.canonical() == "api_restr_noperm::Lx/Y;->z");

  for (auto c : kAllCategories) CHECK(category_from_tag(category_tag(c)) == c);

  CHECK_THROWS_AS(FeatureToken::parse("nope::x"), Error);
  CHECK_THROWS_AS(FeatureToken::parse("perm"), Error);
  CHECK_THROWS_AS(FeatureToken::make(FeatureCategory::Permission, ""), Error);
  CHECK_THROWS_AS(FeatureToken::make(FeatureCategory::Permission, "a b"), Error);
  CHECK_THROWS_AS(FeatureToken::make(FeatureCategory::Permission, "a::b"), Error);
  CHECK_THROWS_AS(FeatureToken::make(FeatureCategory::Permission, "x", true), Error);
}

TEST_CASE("vocabulary is the sorted union") {
  const auto a = FeatureToken::make(FeatureCategory::Component, "a");
  const auto b = FeatureToken::make(FeatureCategory::Component, "b");
  const auto c = FeatureToken::make(FeatureCategory::Component, "c");
  const std::vector<TokenSet> sets{tokens({a}), tokens({b}), tokens({a, c})};
  const auto vocab = Vocabulary::build(sets);
  REQUIRE(vocab.size() == 3);
  CHECK(vocab.token(0) == a);
  CHECK(vocab.token(1) == b);
  CHECK(vocab.token(2) == c);
  CHECK(vocab.index_of(c) == 2u);
  CHECK_FALSE(vocab.index_of(perm("a")).has_value());
}

TEST_CASE("category is part of token identity") {
  const std::vector<TokenSet> sets{
      tokens({perm("X"), FeatureToken::make(FeatureCategory::Hardware, "X")})};
  CHECK(Vocabulary::build(sets).size() == 2);
}

TEST_CASE("empty feature space is rejected") {
  const std::vector<TokenSet> sets{TokenSet{}, TokenSet{}};
  CHECK_THROWS_AS(Vocabulary::build(sets), Error);
}

TEST_CASE("one-hot example with two apps sharing one permission") {
  const auto A = tokens({perm("SEND_MSG"), perm("BIND_ADMIN"), perm("BLUETOOTH")});
  const auto B = tokens({perm("SEND_MSG"), perm("CHANGE_WIFI_STATE"), perm("GPS")});
  const std::vector<TokenSet> sets{A, B};
  const auto vocab = Vocabulary::build(sets);
  CHECK(vocab.size() == 5);

  // Read both encodings back in the figure's column order.
  const std::vector<std::string> figure{"SEND_MSG", "BIND_ADMIN", "BLUETOOTH", "CHANGE_WIFI_STATE",
                                        "GPS"};
  const auto columns = [&](const TokenSet& app) {
    const auto x = encode(app, vocab).vector;
    std::vector<int> out;
    for (const auto& name : figure) out.push_back(x.contains(*vocab.index_of(perm(name))) ? 1 : 0);
    return out;
  };
  CHECK(columns(A) == std::vector<int>{1, 1, 1, 0, 0});
  CHECK(columns(B) == std::vector<int>{1, 0, 0, 1, 1});
}

TEST_CASE("encode drops unknown tokens and counts them") {
  const auto a = perm("a"), b = perm("b"), c = perm("c"), z = perm("z");
  const std::vector<TokenSet> sets{tokens({a, b, c})};
  const auto vocab = Vocabulary::build(sets);

  const auto empty = encode({}, vocab);
  CHECK(empty.vector.nnz() == 0);
  CHECK(empty.vector.dim() == 3);
  CHECK(empty.dropped == 0);

  const auto r = encode(tokens({a, z}), vocab);
  CHECK(idx(r.vector) == std::vector<std::uint32_t>{0});
  CHECK(r.dropped == 1);
}

TEST_CASE("sparse vectors reject unsorted or out-of-range indices") {
  CHECK_NOTHROW(SparseVector({0, 2, 4}, 5));
  CHECK_THROWS_AS(SparseVector({2, 1}, 5), Error);
  CHECK_THROWS_AS(SparseVector({1, 1}, 5), Error);
  CHECK_THROWS_AS(SparseVector({5}, 5), Error);
}

TEST_CASE("property: vocabulary is permutation invariant and encode/decode is intersection") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick(0, 39);
  std::uniform_int_distribution<std::size_t> cat(0, kCategoryCount - 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TokenSet> sets(8);
    for (auto& s : sets) {
      for (int j = 0; j < 6; ++j) {
        s.insert(FeatureToken::make(kAllCategories[cat(rng)], "t" + std::to_string(pick(rng))));
      }
    }
    const auto vocab = Vocabulary::build(sets);
    auto shuffled = sets;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(Vocabulary::build(shuffled) == vocab);

    for (std::size_t i = 1; i < vocab.size(); ++i) {
      CHECK(vocab.token(i - 1).canonical() < vocab.token(i).canonical());
    }

    TokenSet probe;
    for (int j = 0; j < 10; ++j) {
      probe.insert(FeatureToken::make(kAllCategories[cat(rng)], "t" + std::to_string(pick(rng) + 20)));
    }
    const auto enc = encode(probe, vocab);
    const auto ix = enc.vector.indices();
    CHECK(std::adjacent_find(ix.begin(), ix.end(), std::greater_equal<>()) == ix.end());
    TokenSet expected;
    for (const auto& t : probe) {
      if (vocab.index_of(t)) expected.insert(t);
    }
    CHECK(decode(enc.vector, vocab) == expected);
    CHECK(enc.dropped == probe.size() - expected.size());
  }
}

TEST_CASE("vocabulary file round trip") {
  test::TempDir dir("vocab");
  const std::vector<TokenSet> sets{tokens({perm("a"), FeatureToken::parse("api_restr_noperm::Lx/Y;->z")})};
  const auto vocab = Vocabulary::build(sets);
  vocab.save(dir / "v.txt");
  CHECK(Vocabulary::load(dir / "v.txt") == vocab);
}

TEST_CASE("dataset text format") {
  std::istringstream in("dim 5\n+1 qid:none fam:Airpush 0:1 2:1\n");
  const auto ds = read_dataset(in);
  REQUIRE(ds.size() == 1);
  CHECK(ds.dim == 5);
  CHECK(ds.labels[0] == Label::Malware);
  CHECK(ds.families == std::vector<std::string>{"Airpush"});
  CHECK(idx(ds.vectors[0]) == std::vector<std::uint32_t>{0, 2});

  std::ostringstream out;
  write_dataset(ds, out);
  CHECK(out.str() == "dim 5\n+1 fam:Airpush 0:1 2:1\n");
  std::istringstream again(out.str());
  CHECK(read_dataset(again) == ds);
}

TEST_CASE("empty dataset is a header-only file") {
  LabeledDataset ds;
  ds.dim = 4;
  std::ostringstream out;
  write_dataset(ds, out);
  CHECK(out.str() == "dim 4\n");
  std::istringstream in(out.str());
  const auto back = read_dataset(in);
  CHECK(back.empty());
  CHECK(back == ds);
}

TEST_CASE("dataset parse errors name the line") {
  const auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_dataset(in);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("dim 5\n-1 1:1\n+1 7:1\n").find("line 3") != std::string::npos);
  CHECK(message("dim 5\n+1 3:1 1:1\n").find("line 2") != std::string::npos);
  CHECK(message("dim 5\n+2 1:1\n").find("line 2") != std::string::npos);
  CHECK(message("+1 1:1\n").find("line 1") != std::string::npos);
  CHECK(message("dim 5\n+1 1:0.5\n").find("line 2") != std::string::npos);
}

TEST_CASE("property: dataset write/read is field exact") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    LabeledDataset ds;
    ds.dim = 1 + rng() % 60;
    const bool fams = trial % 2 == 0;
    const auto n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      ds.vectors.push_back(test::random_vector(rng, ds.dim));
      ds.labels.push_back(rng() % 2 ? Label::Malware : Label::Clean);
      if (fams) ds.families.push_back(rng() % 3 ? "F" + std::to_string(rng() % 4) : "");
    }
    if (fams && std::all_of(ds.families.begin(), ds.families.end(),
                            [](const auto& f) { return f.empty(); })) {
      ds.families.clear();
    }
    std::stringstream io;
    write_dataset(ds, io);
    CHECK(read_dataset(io) == ds);
  }
}

TEST_CASE("dataset validation and subset") {
  LabeledDataset ds;
  ds.dim = 3;
  ds.vectors = {SparseVector({0}, 3), SparseVector({1, 2}, 3), SparseVector({}, 3)};
  ds.labels = {Label::Malware, Label::Clean, Label::Clean};
  ds.families = {"A", "", "B"};
  CHECK_NOTHROW(ds.validate());
  const std::vector<std::size_t> rows{2, 0};
  const auto sub = ds.subset(rows);
  CHECK(sub.size() == 2);
  CHECK(sub.families == std::vector<std::string>{"B", "A"});
  CHECK(sub.vectors[1] == ds.vectors[0]);

  auto bad = ds;
  bad.labels.pop_back();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ds;
  bad.vectors[0] = SparseVector({0}, 4);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("token files round trip") {
  test::TempDir dir("tok");
  const auto t = tokens({perm("a"), FeatureToken::parse("intent::android.intent.action.MAIN")});
  write_tokens(t, dir / "x.tokens");
  CHECK(read_tokens(dir / "x.tokens") == t);
}
