#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fmdroid/baselines.hpp"
#include "fmdroid/model_io.hpp"
#include "support.hpp"

using namespace fmdroid;

namespace {

ErrorKind load_error(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    load_model(in);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

std::string bytes_of(const FmModel& m) {
  std::ostringstream out;
  save_model(m, out);
  return out.str();
}

}  // namespace

TEST_CASE("FM save/load gives bit-identical predictions") {
  std::mt19937_64 rng(1);
  const auto m = test::random_model(rng, 40, 6);
  test::TempDir dir("model");
  save_model(m, dir / "m.fm");
  const auto back = load_model(dir / "m.fm");
  CHECK(back == m);
  for (int i = 0; i < 100; ++i) {
    const auto x = test::random_vector(rng, 40);
    const double a = predict_raw(m, x), b = predict_raw(back, x);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
}

TEST_CASE("partial mask survives the round trip") {
  std::mt19937_64 rng(2);
  auto m = test::random_model(rng, 9, 2);
  const std::vector<CategoryPair> allowed{{FeatureCategory::UsedPermission, FeatureCategory::Permission},
                                          {FeatureCategory::Hardware, FeatureCategory::Hardware}};
  m.mask = InteractionMask::partial(allowed, test::random_categories(rng, 9));
  std::istringstream in(bytes_of(m));
  const auto back = load_model(in);
  CHECK(back.mask == m.mask);
  CHECK(back.mask.allowed_pairs() == m.mask.allowed_pairs());

  m.mask = InteractionMask::first_order();
  std::istringstream in2(bytes_of(m));
  CHECK(load_model(in2).mask.mode() == MaskMode::FirstOrder);
}

TEST_CASE("corrupted files are rejected") {
  std::mt19937_64 rng(3);
  const auto good = bytes_of(test::random_model(rng, 5, 2));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(load_error(bad_magic) == ErrorKind::Format);

  CHECK(load_error(good.substr(0, good.size() - 3)) == ErrorKind::Format);
  CHECK(load_error(good + "x") == ErrorKind::Format);
  CHECK(load_error("") == ErrorKind::Format);

  auto bad_version = good;
  bad_version[8] = 9;
  CHECK(load_error(bad_version) == ErrorKind::Format);
}

TEST_CASE("serialized parameter count is 1 + n + nk") {
  test::TempDir dir("count");
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    const auto m = init_model(n, 10, 1, 0.01);
    save_model(m, dir / "m.fm");
    const auto info = inspect_model(dir / "m.fm");
    CHECK(info.type == ModelType::FactorizationMachine);
    CHECK(info.dim == n);
    CHECK(info.k == 10);
    CHECK(info.parameter_count == 1 + n + n * 10);
  }
}

TEST_CASE("baseline models round trip") {
  std::mt19937_64 rng(4);
  LabeledDataset ds;
  ds.dim = 12;
  for (int i = 0; i < 30; ++i) {
    ds.vectors.push_back(test::random_vector(rng, 12));
    ds.labels.push_back(i % 2 ? Label::Malware : Label::Clean);
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto lin = train_logistic(ds, cfg);
  const auto nb = train_bernoulli_nb(ds, 0.5);
  test::TempDir dir("base");
  save_model(lin, dir / "l.bin");
  save_model(nb, dir / "n.bin");
  CHECK(std::get<LinearModel>(load_any_model(dir / "l.bin")) == lin);
  CHECK(std::get<BernoulliNbModel>(load_any_model(dir / "n.bin")) == nb);
  CHECK(inspect_model(dir / "l.bin").parameter_count == 13);
  CHECK(inspect_model(dir / "l.bin").type == ModelType::Logistic);
  CHECK_THROWS_AS(load_model(dir / "l.bin"), Error);

  const AnyModel any = lin;
  for (const auto& x : ds.vectors) CHECK(score_proba(any, x) == predict_proba(lin, x));
  CHECK(model_dim(any) == 12);
}

TEST_CASE("missing model file is an I/O error") {
  try {
    load_model(std::filesystem::path("/nonexistent/model.fm"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}
