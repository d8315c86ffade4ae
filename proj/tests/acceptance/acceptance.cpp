#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fmdroid/baselines.hpp"
#include "fmdroid/corpus.hpp"
#include "fmdroid/eval.hpp"
#include "fmdroid/extraction.hpp"
#include "fmdroid/model_io.hpp"

using namespace fmdroid;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Scratch {
 public:
  explicit Scratch(const std::string& tag)
      : path_(fs::temp_directory_path() / ("fmdroid_accept_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

SparseVector random_vector(std::mt19937_64& rng, std::size_t n, double density) {
  std::bernoulli_distribution on(density);
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (on(rng)) idx.push_back(i);
  }
  return SparseVector(std::move(idx), n);
}

FmModel random_model(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::normal_distribution<double> g(0.0, 0.5);
  FmModel m;
  m.dim = n;
  m.k = k;
  m.w0 = g(rng);
  m.w.resize(n);
  m.v.resize(n * k);
  for (auto& x : m.w) x = g(rng);
  for (auto& x : m.v) x = g(rng);
  return m;
}

InteractionMask random_partial(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, kCategoryCount - 1);
  std::vector<FeatureCategory> cats(n);
  for (auto& c : cats) c = kAllCategories[pick(rng)];
  std::vector<CategoryPair> allowed;
  for (int i = 0; i < 4; ++i) allowed.emplace_back(kAllCategories[pick(rng)], kAllCategories[pick(rng)]);
  return InteractionMask::partial(allowed, std::move(cats));
}

TrainConfig tuned_config() {
  TrainConfig cfg;
  cfg.k = 10;
  cfg.epochs = 200;
  cfg.learning_rate = 0.003;
  cfg.l2_w = 1.0;
  cfg.l2_v = 0.005;
  return cfg;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  int pairs = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 50, k = 1 + rng() % 8;
    auto m = random_model(rng, n, k);
    if (trial % 2) m.mask = random_partial(rng, n);
    for (int t = 0; t < 2; ++t) {
      const auto x = random_vector(rng, n, 0.4);
      worst = std::max(worst, std::abs(predict_raw(m, x) - predict_bruteforce(m, x)));
      ++pairs;
    }
  }
  return {worst <= 1e-9, fmt("%d pairs, max |diff| %.3g", pairs, worst)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(2);
  const double eps = 1e-5;
  double worst = 0.0;
  const auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 20, k = 1 + rng() % 5;
    auto m = random_model(rng, n, k);
    if (trial % 2) m.mask = random_partial(rng, n);
    const auto x = random_vector(rng, n, 0.5);
    const auto y = rng() % 2 ? Label::Malware : Label::Clean;
    const double l2w = trial % 3 ? 0.0 : 0.3, l2v = trial % 3 ? 0.0 : 0.2;
    const auto lg = loss_and_gradient(m, x, y, l2w, l2v);
    const auto numeric = [&](double& p) {
      const double saved = p;
      p = saved + eps;
      const double up = loss(m, x, y, l2w, l2v);
      p = saved - eps;
      const double down = loss(m, x, y, l2w, l2v);
      p = saved;
      return (up - down) / (2 * eps);
    };
    worst = std::max(worst, rel(lg.grad.w0, numeric(m.w0)));
    for (std::size_t r = 0; r < lg.grad.rows.size(); ++r) {
      const auto i = lg.grad.rows[r];
      worst = std::max(worst, rel(lg.grad.w[r], numeric(m.w[i])));
      for (std::size_t f = 0; f < k; ++f) worst = std::max(worst, rel(lg.grad.v[r * k + f], numeric(m.v[i * k + f])));
    }
  }
  return {worst <= 1e-4, fmt("100 instances, max relative error %.3g", worst)};
}

Outcome interaction_learning() {
  const auto corpus = generate_dataset(default_desk_spec());
  const auto [train_ds, test_ds] = split_dataset(corpus.dataset, 0.2, 0);
  const auto cfg = tuned_config();
  const auto fm = train(train_ds, cfg);
  const auto probs = predict_all(fm, test_ds);
  const auto fm_m = metrics(confusion(test_ds.labels, classify_all(probs)));
  const double auc = roc(test_ds.labels, probs).auc;

  const auto lin = train_logistic(train_ds, cfg);
  std::vector<Label> lin_pred;
  for (const auto& x : test_ds.vectors) lin_pred.push_back(classify(predict_proba(lin, x)));
  const auto lin_m = metrics(confusion(test_ds.labels, lin_pred));
  return {fm_m.accuracy >= 0.95 && auc >= 0.98 && lin_m.accuracy <= 0.70,
          fmt("FM accuracy %.4f AUC %.4f, logistic accuracy %.4f", fm_m.accuracy, auc, lin_m.accuracy)};
}

// Exact comparison of a double with the rational num/den: the value must be
// the nearest double to num/den.
bool is_rational(double value, std::uint64_t num, std::uint64_t den) {
  if (den == 0) return false;
  const long double exact = static_cast<long double>(num) / static_cast<long double>(den);
  const double below = std::nextafter(value, -INFINITY), above = std::nextafter(value, INFINITY);
  const long double err = std::abs(static_cast<long double>(value) - exact);
  return err <= std::abs(static_cast<long double>(below) - exact) &&
         err <= std::abs(static_cast<long double>(above) - exact);
}

struct Frac {
  std::uint64_t num, den;
};

struct MetricCase {
  Confusion c;
  Frac accuracy, precision, recall, f1, fpr;
};

Outcome metric_exactness() {
  // Hand-reduced fractions. F1 = 2tp / (2tp + fp + fn).
  const std::vector<MetricCase> cases{
      {{.tp = 2, .tn = 3, .fp = 1, .fn = 0}, {5, 6}, {2, 3}, {1, 1}, {4, 5}, {1, 4}},
      {{.tp = 7, .tn = 9, .fp = 0, .fn = 2}, {8, 9}, {1, 1}, {7, 9}, {7, 8}, {0, 1}},
      {{.tp = 50, .tn = 50, .fp = 0, .fn = 0}, {1, 1}, {1, 1}, {1, 1}, {1, 1}, {0, 1}},
      {{.tp = 1, .tn = 1, .fp = 1, .fn = 1}, {1, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 2}},
      {{.tp = 3, .tn = 4, .fp = 2, .fn = 1}, {7, 10}, {3, 5}, {3, 4}, {2, 3}, {1, 3}},
      {{.tp = 10, .tn = 0, .fp = 5, .fn = 0}, {2, 3}, {2, 3}, {1, 1}, {4, 5}, {1, 1}},
      {{.tp = 1, .tn = 97, .fp = 1, .fn = 1}, {49, 50}, {1, 2}, {1, 2}, {1, 2}, {1, 98}},
      {{.tp = 193, .tn = 205, .fp = 1, .fn = 1}, {199, 200}, {193, 194}, {193, 194}, {193, 194}, {1, 206}},
      {{.tp = 11, .tn = 13, .fp = 7, .fn = 3}, {12, 17}, {11, 18}, {11, 14}, {11, 16}, {7, 20}},
      {{.tp = 999, .tn = 1000, .fp = 0, .fn = 1}, {1999, 2000}, {1, 1}, {999, 1000}, {1998, 1999}, {0, 1}},
  };
  int ok = 0;
  int zero_fp = 0;
  bool table_shape = true;
  for (const auto& mc : cases) {
    const auto m = metrics(mc.c);
    const bool good = m.undefined == 0 && is_rational(m.accuracy, mc.accuracy.num, mc.accuracy.den) &&
                      is_rational(m.precision, mc.precision.num, mc.precision.den) &&
                      is_rational(m.recall, mc.recall.num, mc.recall.den) &&
                      is_rational(m.f1, mc.f1.num, mc.f1.den) && is_rational(m.fpr, mc.fpr.num, mc.fpr.den);
    ok += good;
    if (mc.c.fp == 0 && mc.c.fn > 0) {
      ++zero_fp;
      table_shape &= fmt("%.2f", m.precision * 100) == "100.00" && fmt("%.2f", m.fpr * 100) == "0.00";
    }
  }
  return {ok == 10 && zero_fp > 0 && table_shape, fmt("%d/10 matrices exact, fp=0 renders 100.00 / 0.00: %s", ok,
                                       table_shape ? "yes" : "no")};
}

Outcome protocol_fidelity() {
  const auto labels = generate_dataset(default_desk_spec()).dataset.labels;
  const auto count = [&](const std::vector<std::size_t>& rows, Label l) {
    return static_cast<double>(std::count_if(rows.begin(), rows.end(), [&](auto r) { return labels[r] == l; }));
  };
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), Label::Malware));
  const double neg = static_cast<double>(labels.size()) - pos;

  double worst = 0.0;
  bool deterministic = true;
  const auto first_split = split_train_test(labels, 0.2, 11);
  for (int run = 0; run < 3; ++run) {
    const auto s = split_train_test(labels, 0.2, 11);
    deterministic &= s.train == first_split.train && s.test == first_split.test;
    worst = std::max({worst, std::abs(count(s.test, Label::Malware) - 0.2 * pos),
                      std::abs(count(s.test, Label::Clean) - 0.2 * neg)});
  }
  const auto first_folds = stratified_kfold(labels, 5, 11);
  std::size_t covered = 0;
  for (int run = 0; run < 3; ++run) {
    const auto folds = stratified_kfold(labels, 5, 11);
    deterministic &= folds == first_folds;
  }
  for (const auto& f : first_folds) {
    covered += f.size();
    worst = std::max({worst, std::abs(count(f, Label::Malware) - pos / 5), std::abs(count(f, Label::Clean) - neg / 5)});
  }
  return {worst <= 1.0 && deterministic && covered == labels.size(),
          fmt("max per-class deviation %.2f samples, 3 runs identical: %s", worst, deterministic ? "yes" : "no")};
}

Outcome extraction_golden() {
  const fs::path fixtures = FMDROID_FIXTURES;
  const auto dicts = Dictionaries::load_dir(fixtures / "dicts");
  int golden = 0;
  for (const auto* name : {"tiny_sms_app", "flashlight", "loader"}) {
    const auto got = extract_bundle(AppBundle::load(fixtures / "bundles" / name), dicts);
    golden += got.tokens == read_tokens(fixtures / "bundles" / name / "expected.tokens");
  }

  auto spec = default_desk_spec();
  spec.n_apps = 200;
  Scratch dir("bundles");
  const auto c = generate_bundles(spec, dir.path());
  const auto gen_dicts = Dictionaries::load_dir(dir.path() / "dicts");
  std::size_t same = 0;
  for (const auto& app : c.apps) same += extract_bundle(AppBundle::load(dir.path() / app.app_id), gen_dicts).tokens == app.tokens;
  return {golden == 3 && same == c.apps.size(),
          fmt("%d/3 fixtures exact, %zu/%zu generated apps round trip", golden, same, c.apps.size())};
}

Outcome persistence() {
  std::mt19937_64 rng(7);
  Scratch dir("persist");
  auto m = random_model(rng, 60, 8);
  m.mask = random_partial(rng, 60);
  save_model(m, dir.path() / "m.fm");
  const auto back = load_model(dir.path() / "m.fm");
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = random_vector(rng, 60, 0.3);
    const double a = predict_raw(m, x), b = predict_raw(back, x);
    identical += std::memcmp(&a, &b, sizeof a) == 0;
  }

  LabeledDataset ds;
  ds.dim = 60;
  for (int i = 0; i < 50; ++i) {
    ds.vectors.push_back(random_vector(rng, 60, 0.2));
    ds.labels.push_back(i % 3 ? Label::Clean : Label::Malware);
    ds.families.push_back(i % 3 ? "" : "Fam" + std::to_string(i % 2));
  }
  write_dataset(ds, dir.path() / "d.txt");
  const bool dataset_exact = read_dataset(dir.path() / "d.txt") == ds;
  return {identical == 100 && back == m && dataset_exact,
          fmt("%d/100 bit-identical predictions, dataset field-exact: %s", identical, dataset_exact ? "yes" : "no")};
}

Outcome parameter_scaling() {
  Scratch dir("params");
  std::string detail;
  bool ok = true;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    save_model(init_model(n, 10, 1, 0.01), dir.path() / "m.fm");
    const auto count = inspect_model(dir.path() / "m.fm").parameter_count;
    ok &= count == 1 + n + n * 10;
    detail += fmt("%sn=%zu: %zu", detail.empty() ? "" : ", ", n, count);
  }
  return {ok, detail};
}

Outcome family_evaluation() {
  const auto corpus = generate_dataset(default_desk_spec());
  FamilyEvalConfig cfg;
  cfg.train = tuned_config();
  cfg.jobs = 4;
  const auto report = evaluate_families(corpus.dataset, cfg);
  double min_recall = 1.0, p = 0, r = 0, f = 0, fpr = 0;
  std::size_t n = 0;
  std::string detail;
  for (const auto& row : report.rows) {
    if (!row.evaluated) return {false, "family " + row.family + " was not evaluated"};
    min_recall = std::min(min_recall, row.metrics.recall);
    p += row.metrics.precision;
    r += row.metrics.recall;
    f += row.metrics.f1;
    fpr += row.metrics.fpr;
    ++n;
    detail += fmt("%s=%.3f ", row.family.c_str(), row.metrics.recall);
  }
  const double dn = static_cast<double>(n);
  const bool macro = report.average.precision == p / dn && report.average.recall == r / dn &&
                     report.average.f1 == f / dn && report.average.fpr == fpr / dn;
  return {n == 4 && min_recall >= 0.90 && macro,
          fmt("recall %smacro average exact: %s", detail.c_str(), macro ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"gradient check", gradient_check},
      {"interaction learning", interaction_learning},
      {"metric exactness", metric_exactness},
      {"protocol fidelity", protocol_fidelity},
      {"extraction golden tests", extraction_golden},
      {"persistence", persistence},
      {"parameter-count scaling", parameter_scaling},
      {"family evaluation", family_evaluation},
  };
  const double limits[] = {5, 5, 60, 0, 0, 0, 0, 0, 0};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limits[i] > 0 && secs >= limits[i]) {
      o.pass = false;
      o.detail += fmt(", over the %.0f s budget", limits[i]);
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
