#include "fmdroid/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "fmdroid/detail/optim.hpp"

namespace fmdroid {

Confusion confusion(std::span<const Label> labels, std::span<const Label> predictions) {
  if (labels.size() != predictions.size()) {
    throw Error(ErrorKind::InvalidArgument, "labels and predictions differ in length");
  }
  if (labels.empty()) throw Error(ErrorKind::InvalidArgument, "no samples to evaluate");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool actual = labels[i] == Label::Malware;
    const bool predicted = predictions[i] == Label::Malware;
    if (actual && predicted) ++c.tp;
    else if (!actual && !predicted) ++c.tn;
    else if (!actual && predicted) ++c.fp;
    else ++c.fn;
  }
  return c;
}

Metrics metrics(const Confusion& c) {
  if (c.total() == 0) throw Error(ErrorKind::InvalidArgument, "empty confusion matrix");
  const auto ratio = [](std::size_t num, std::size_t den) {
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  if (c.tp + c.fp > 0) m.precision = ratio(c.tp, c.tp + c.fp);
  else m.undefined |= kPrecisionUndefined;
  if (c.tp + c.fn > 0) m.recall = ratio(c.tp, c.tp + c.fn);
  else m.undefined |= kRecallUndefined;
  // Precision + recall is zero (or undefined) exactly when tp == 0.
  if (c.tp > 0) m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  else m.undefined |= kF1Undefined;
  if (c.fp + c.tn > 0) m.fpr = ratio(c.fp, c.fp + c.tn);
  else m.undefined |= kFprUndefined;
  return m;
}

RocCurve roc(std::span<const Label> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::InvalidArgument, "labels and scores differ in length");
  }
  if (labels.empty()) throw Error(ErrorKind::InvalidArgument, "no samples for ROC");
  if (std::any_of(scores.begin(), scores.end(), [](double s) { return std::isnan(s); })) {
    throw Error(ErrorKind::InvalidArgument, "NaN score");
  }
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Malware));
  const auto negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::DegenerateLabels, "ROC needs both classes");
  }

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]] == Label::Malware) ++tp;
      else ++fp;
      ++i;
    }
    curve.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = std::clamp(area, 0.0, 1.0);
  return curve;
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "test fraction must lie in (0, 1)");
  }
}

std::size_t test_count(std::size_t count, double fraction) {
  if (count < 2) return 0;
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(count) * fraction));
  return std::clamp<std::size_t>(target, 1, count - 1);
}

// Shuffles each group with one shared engine (groups visited in order) and
// moves the first test_count rows of each group to the test side.
Split split_groups(std::vector<std::vector<std::size_t>> groups, double fraction,
                   std::uint64_t seed) {
  std::mt19937_64 rng(detail::mix_seed(seed, 0x5e1));
  Split out;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    const auto t = test_count(g.size(), fraction);
    out.test.insert(out.test.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(t));
    out.train.insert(out.train.end(), g.begin() + static_cast<std::ptrdiff_t>(t), g.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<std::vector<std::size_t>> class_groups(std::span<const Label> labels) {
  std::vector<std::vector<std::size_t>> groups(2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[labels[i] == Label::Malware ? 1 : 0].push_back(i);
  }
  return groups;
}

}  // namespace

Split split_train_test(std::span<const Label> labels, double test_fraction, std::uint64_t seed,
                       bool stratified) {
  check_fraction(test_fraction);
  if (!stratified) {
    if (labels.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 samples to split");
    std::vector<std::vector<std::size_t>> all(1);
    all[0].resize(labels.size());
    std::iota(all[0].begin(), all[0].end(), std::size_t{0});
    return split_groups(std::move(all), test_fraction, seed);
  }
  auto groups = class_groups(labels);
  for (const auto& g : groups) {
    if (g.size() < 2) {
      throw Error(ErrorKind::InvalidArgument, "stratified split needs at least 2 samples per class");
    }
  }
  return split_groups(std::move(groups), test_fraction, seed);
}

Split split_by_group(std::span<const std::string> groups, double test_fraction,
                     std::uint64_t seed) {
  check_fraction(test_fraction);
  std::map<std::string, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < groups.size(); ++i) by_key[groups[i]].push_back(i);
  std::vector<std::vector<std::size_t>> ordered;
  for (auto& [key, rows] : by_key) ordered.push_back(std::move(rows));
  return split_groups(std::move(ordered), test_fraction, seed);
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        double test_fraction, std::uint64_t seed,
                                                        bool stratified) {
  const auto s = split_train_test(ds.labels, test_fraction, seed, stratified);
  return {ds.subset(s.train), ds.subset(s.test)};
}

std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Label> labels,
                                                       std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "k-fold needs k >= 2");
  auto groups = class_groups(labels);
  for (const auto& g : groups) {
    if (!g.empty() && g.size() < k) {
      throw Error(ErrorKind::InvalidArgument,
                  "class with " + std::to_string(g.size()) + " samples is smaller than k");
    }
  }
  std::mt19937_64 rng(detail::mix_seed(seed, 0xf01d));
  std::vector<std::vector<std::size_t>> folds(k);
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t i = 0; i < g.size(); ++i) folds[i % k].push_back(g[i]);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// ---------------------------------------------------------------------------
// Model-level evaluation

std::vector<double> predict_all(const FmModel& model, const LabeledDataset& ds) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (const auto& x : ds.vectors) out.push_back(predict_proba(model, x));
  return out;
}

std::vector<Label> classify_all(std::span<const double> probabilities, double threshold) {
  std::vector<Label> out;
  out.reserve(probabilities.size());
  for (double p : probabilities) out.push_back(classify(p, threshold));
  return out;
}

std::vector<FoldResult> cross_validate(const LabeledDataset& ds, const TrainConfig& cfg,
                                       const InteractionMask& mask, std::size_t folds,
                                       std::uint64_t split_seed, double threshold) {
  const auto parts = stratified_kfold(ds.labels, folds, split_seed);
  std::vector<FoldResult> out;
  for (std::size_t f = 0; f < parts.size(); ++f) {
    std::vector<std::size_t> train_rows;
    for (std::size_t g = 0; g < parts.size(); ++g) {
      if (g != f) train_rows.insert(train_rows.end(), parts[g].begin(), parts[g].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    const auto train_ds = ds.subset(train_rows);
    const auto test_ds = ds.subset(parts[f]);
    const auto model = train(train_ds, cfg, mask);
    const auto probs = predict_all(model, test_ds);

    FoldResult r;
    r.fold = f;
    r.train_size = train_ds.size();
    r.test_size = test_ds.size();
    r.confusion = confusion(test_ds.labels, classify_all(probs, threshold));
    r.metrics = metrics(r.confusion);
    r.auc = roc(test_ds.labels, probs).auc;
    out.push_back(r);
  }
  return out;
}

std::vector<std::string> effective_families(const LabeledDataset& ds) {
  std::vector<std::string> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.has_families() && !ds.families[i].empty()) out[i] = ds.families[i];
    else out[i] = ds.labels[i] == Label::Clean ? "clean" : "unknown";
  }
  return out;
}

FamilyReport evaluate_families(const LabeledDataset& ds, const FamilyEvalConfig& cfg) {
  ds.validate();
  const auto families = effective_families(ds);
  std::map<std::string, std::size_t> counts;
  for (const auto& f : families) ++counts[f];
  if (counts.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "family evaluation needs at least 2 families");
  }

  const auto split = split_by_group(families, cfg.test_fraction, cfg.split_seed);
  auto train_ds = ds.subset(split.train);
  auto test_ds = ds.subset(split.test);
  std::vector<std::string> train_fam, test_fam;
  for (auto r : split.train) train_fam.push_back(families[r]);
  for (auto r : split.test) test_fam.push_back(families[r]);

  FamilyReport report;
  std::vector<std::size_t> to_run;
  std::size_t family_index = 0;
  for (const auto& [name, count] : counts) {
    FamilyRow row;
    row.family = name;
    row.samples = count;
    row.test_samples = static_cast<std::size_t>(std::count(test_fam.begin(), test_fam.end(), name));
    if (count < cfg.min_samples) {
      row.note = "skipped: fewer than " + std::to_string(cfg.min_samples) + " samples";
    } else if (row.test_samples == 0) {
      row.note = "skipped: absent from test split";
    } else {
      to_run.push_back(family_index);
    }
    report.rows.push_back(std::move(row));
    ++family_index;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(to_run.size());
  auto worker = [&] {
    for (auto j = next.fetch_add(1); j < to_run.size(); j = next.fetch_add(1)) {
      auto& row = report.rows[to_run[j]];
      try {
        auto bin_train = train_ds;
        for (std::size_t r = 0; r < bin_train.size(); ++r) {
          bin_train.labels[r] = train_fam[r] == row.family ? Label::Malware : Label::Clean;
        }
        auto bin_test = test_ds;
        for (std::size_t r = 0; r < bin_test.size(); ++r) {
          bin_test.labels[r] = test_fam[r] == row.family ? Label::Malware : Label::Clean;
        }
        auto tc = cfg.train;
        tc.seed = cfg.train.seed + to_run[j];
        const auto model = train(bin_train, tc, cfg.mask);
        const auto probs = predict_all(model, bin_test);
        row.confusion = confusion(bin_test.labels, classify_all(probs, cfg.threshold));
        row.metrics = metrics(row.confusion);
        row.evaluated = true;
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const auto jobs = std::max<std::size_t>(1, std::min(cfg.jobs, to_run.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Metrics sum;
  for (const auto& row : report.rows) {
    if (!row.evaluated) continue;
    ++report.evaluated_count;
    sum.accuracy += row.metrics.accuracy;
    sum.precision += row.metrics.precision;
    sum.recall += row.metrics.recall;
    sum.f1 += row.metrics.f1;
    sum.fpr += row.metrics.fpr;
  }
  if (report.evaluated_count > 0) {
    const auto n = static_cast<double>(report.evaluated_count);
    report.average.accuracy = sum.accuracy / n;
    report.average.precision = sum.precision / n;
    report.average.recall = sum.recall / n;
    report.average.f1 = sum.f1 / n;
    report.average.fpr = sum.fpr / n;
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV output

std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

const char* flag_text(const Metrics& m, MetricFlag flag) {
  return m.is_undefined(flag) ? "undefined" : "";
}

}  // namespace

void write_metrics_csv(const Confusion& c, const Metrics& m, const RocCurve* curve,
                       std::ostream& out) {
  out << "metric,value,flag\n";
  out << "tp," << c.tp << ",\n";
  out << "tn," << c.tn << ",\n";
  out << "fp," << c.fp << ",\n";
  out << "fn," << c.fn << ",\n";
  out << "accuracy," << format_double(m.accuracy) << ",\n";
  out << "precision," << format_double(m.precision) << ',' << flag_text(m, kPrecisionUndefined) << '\n';
  out << "recall," << format_double(m.recall) << ',' << flag_text(m, kRecallUndefined) << '\n';
  out << "f1," << format_double(m.f1) << ',' << flag_text(m, kF1Undefined) << '\n';
  out << "fpr," << format_double(m.fpr) << ',' << flag_text(m, kFprUndefined) << '\n';
  if (curve != nullptr) out << "auc," << format_double(curve->auc) << ",\n";
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    out << format_double(p.threshold) << ',' << format_double(p.fpr) << ','
        << format_double(p.tpr) << '\n';
  }
  out << "auc," << format_double(curve.auc) << '\n';
}

void write_family_csv(const FamilyReport& report, std::ostream& out) {
  out << "family,samples,precision,recall,f1,fpr,status\n";
  for (const auto& row : report.rows) {
    out << row.family << ',' << row.samples << ',';
    if (row.evaluated) {
      out << format_double(row.metrics.precision) << ',' << format_double(row.metrics.recall)
          << ',' << format_double(row.metrics.f1) << ',' << format_double(row.metrics.fpr)
          << ",ok\n";
    } else {
      out << ",,,," << row.note << '\n';
    }
  }
  const auto& a = report.average;
  out << "Average,," << format_double(a.precision) << ',' << format_double(a.recall) << ','
      << format_double(a.f1) << ',' << format_double(a.fpr) << ",macro_average\n";
}

void write_cv_csv(std::span<const FoldResult> folds, std::ostream& out) {
  out << "fold,train_size,test_size,accuracy,precision,recall,f1,fpr,auc\n";
  Metrics sum;
  double auc_sum = 0.0;
  for (const auto& f : folds) {
    out << f.fold << ',' << f.train_size << ',' << f.test_size << ','
        << format_double(f.metrics.accuracy) << ',' << format_double(f.metrics.precision) << ','
        << format_double(f.metrics.recall) << ',' << format_double(f.metrics.f1) << ','
        << format_double(f.metrics.fpr) << ',' << format_double(f.auc) << '\n';
    sum.accuracy += f.metrics.accuracy;
    sum.precision += f.metrics.precision;
    sum.recall += f.metrics.recall;
    sum.f1 += f.metrics.f1;
    sum.fpr += f.metrics.fpr;
    auc_sum += f.auc;
  }
  if (folds.empty()) return;
  const auto n = static_cast<double>(folds.size());
  out << "mean,,," << format_double(sum.accuracy / n) << ',' << format_double(sum.precision / n)
      << ',' << format_double(sum.recall / n) << ',' << format_double(sum.f1 / n) << ','
      << format_double(sum.fpr / n) << ',' << format_double(auc_sum / n) << '\n';
}

}  // namespace fmdroid
