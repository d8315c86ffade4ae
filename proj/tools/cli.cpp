#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmdroid/baselines.hpp"
#include "fmdroid/corpus.hpp"
#include "fmdroid/eval.hpp"
#include "fmdroid/extraction.hpp"
#include "fmdroid/feature_model.hpp"
#include "fmdroid/fm_core.hpp"
#include "fmdroid/model_io.hpp"

namespace fmdroid::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingDictionary: return kExitMissingDictionary;
    case ErrorKind::DimensionMismatch: return kExitDimensionMismatch;
    case ErrorKind::Parse:
    case ErrorKind::Format: return kExitParse;
    case ErrorKind::Io: return kExitIo;
    case ErrorKind::InvalidArgument:
    case ErrorKind::DegenerateLabels: return kExitInvalidInput;
  }
  return kExitFailure;
}

namespace {

// Record of one invocation, written next to its primary artifact.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> args;
  ojson config = ojson::object();
  ojson inputs = ojson::object();
  ojson outputs = ojson::object();
  std::optional<std::uint64_t> seed;

  void write(const fs::path& path, double seconds) const {
    ojson j;
    j["subcommand"] = subcommand;
    j["args"] = args;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed ? ojson(*seed) : ojson(nullptr);
    j["tool_version"] = FMDROID_VERSION;
    j["duration_seconds"] = seconds;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
};

fs::path manifest_for_file(const fs::path& artifact) {
  return fs::path(artifact.string() + ".manifest.json");
}

fs::path manifest_for_dir(const fs::path& dir) { return dir / "run_manifest.json"; }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error(ErrorKind::Io, std::string(what) + " not found: " + p.string());
}

struct TrainFlags {
  TrainConfig cfg;
  std::string mask = "full";
  std::vector<std::string> allow;
  std::string vocab;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--k", f.cfg.k, "Latent dimension")->capture_default_str();
  cmd->add_option("--epochs", f.cfg.epochs)->capture_default_str();
  cmd->add_option("--batch-size", f.cfg.batch_size)->capture_default_str();
  cmd->add_option("--lr", f.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--seed", f.cfg.seed)->capture_default_str();
  cmd->add_option("--l2-w", f.cfg.l2_w, "L2 strength on first-order weights")->capture_default_str();
  cmd->add_option("--l2-v", f.cfg.l2_v, "L2 strength on latent factors")->capture_default_str();
  cmd->add_option("--init-scale", f.cfg.init_scale)->capture_default_str();
  cmd->add_option("--mask", f.mask, "Interaction mask")
      ->check(CLI::IsMember({"full", "partial"}))
      ->capture_default_str();
  cmd->add_option("--allow", f.allow, "Allowed category pair for --mask partial, e.g. used_perm:perm");
  cmd->add_option("--vocab", f.vocab, "Vocabulary giving feature categories (partial masks)");
}

ojson train_config_json(const TrainFlags& f) {
  ojson j;
  j["k"] = f.cfg.k;
  j["epochs"] = f.cfg.epochs;
  j["batch_size"] = f.cfg.batch_size;
  j["learning_rate"] = f.cfg.learning_rate;
  j["adam_beta1"] = f.cfg.adam_beta1;
  j["adam_beta2"] = f.cfg.adam_beta2;
  j["adam_epsilon"] = f.cfg.adam_epsilon;
  j["init_scale"] = f.cfg.init_scale;
  j["l2_w"] = f.cfg.l2_w;
  j["l2_v"] = f.cfg.l2_v;
  j["mask"] = f.mask;
  j["allow"] = f.allow;
  return j;
}

CategoryPair parse_allow(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw Error(ErrorKind::InvalidArgument, "--allow expects <category>:<category>, got '" + text + "'");
  }
  const auto a = category_from_tag(std::string_view(text).substr(0, colon));
  const auto b = category_from_tag(std::string_view(text).substr(colon + 1));
  if (!a || !b) throw Error(ErrorKind::InvalidArgument, "unknown category in --allow '" + text + "'");
  return {*a, *b};
}

InteractionMask build_mask(const TrainFlags& f, std::size_t dim) {
  if (f.mask == "full") {
    if (!f.allow.empty()) throw Error(ErrorKind::InvalidArgument, "--allow requires --mask partial");
    return InteractionMask::full();
  }
  if (f.allow.empty()) throw Error(ErrorKind::InvalidArgument, "--mask partial needs at least one --allow");
  if (f.vocab.empty()) throw Error(ErrorKind::InvalidArgument, "--mask partial needs --vocab");
  const auto vocab = Vocabulary::load(f.vocab);
  if (vocab.size() != dim) {
    throw Error(ErrorKind::DimensionMismatch, "vocabulary has " + std::to_string(vocab.size()) +
                                                  " tokens but the dataset has dim " + std::to_string(dim));
  }
  std::vector<CategoryPair> pairs;
  for (const auto& a : f.allow) pairs.push_back(parse_allow(a));
  return InteractionMask::partial(pairs, vocab.categories());
}

void check_model_dim(std::size_t model_dim, std::size_t data_dim) {
  if (model_dim != data_dim) {
    throw Error(ErrorKind::DimensionMismatch, "model dim " + std::to_string(model_dim) +
                                                  " does not match dataset dim " + std::to_string(data_dim));
  }
}

std::string label_text(Label y) { return std::to_string(to_int(y)); }

// Bundle directories below `root` (or `root` itself), sorted by name.
std::vector<fs::path> find_bundles(const fs::path& root) {
  require_exists(root, "bundle directory");
  if (fs::exists(root / "AndroidManifest.xml")) return {root};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "AndroidManifest.xml")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::max<std::size_t>(1, std::min(jobs, count));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

BundleFeatures extract_one(const fs::path& dir, const Dictionaries& dicts) {
  try {
    return extract_bundle(AppBundle::load(dir), dicts);
  } catch (const Error& e) {
    throw Error(e.kind(), dir.filename().string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenCorpusArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_apps;
};

void cmd_gen_corpus(const GenCorpusArgs& a, RunManifest& m, std::ostream& out) {
  auto spec = a.spec.empty() ? default_desk_spec() : CorpusSpec::load(a.spec);
  if (a.seed) spec.seed = *a.seed;
  if (a.n_apps) spec.n_apps = *a.n_apps;
  const auto corpus = generate_bundles(spec, a.out);
  m.config = ojson::parse(spec.to_json());
  m.seed = spec.seed;
  if (!a.spec.empty()) m.inputs["spec"] = a.spec;
  m.outputs["bundles"] = a.out;
  std::size_t malware = 0;
  for (const auto& t : corpus.truth.apps) malware += t.label == Label::Malware ? 1 : 0;
  out << "generated " << corpus.apps.size() << " apps (" << malware << " malware) in " << a.out
      << ", activation " << format_double(corpus.truth.activation) << '\n';
}

struct ExtractArgs {
  std::string bundles;
  std::string dicts;
  std::string out;
  std::size_t jobs = 1;
};

void cmd_extract(const ExtractArgs& a, RunManifest& m, std::ostream& out, std::ostream& err) {
  const auto dicts = Dictionaries::load_dir(a.dicts);
  const auto bundles = find_bundles(a.bundles);
  if (bundles.empty()) throw Error(ErrorKind::InvalidArgument, "no bundles found under " + a.bundles);
  std::vector<BundleFeatures> features(bundles.size());
  parallel_for(bundles.size(), a.jobs, [&](std::size_t i) { features[i] = extract_one(bundles[i], dicts); });

  fs::create_directories(a.out);
  std::size_t warnings = 0;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    write_tokens(features[i].tokens, fs::path(a.out) / (bundles[i].filename().string() + ".tokens"));
    warnings += features[i].manifest_warnings + features[i].smali_warnings;
  }
  const auto labels = fs::path(a.bundles) / "labels.csv";
  if (fs::exists(labels)) {
    fs::copy_file(labels, fs::path(a.out) / "labels.csv", fs::copy_options::overwrite_existing);
  }
  if (warnings > 0) err << "warning: " << warnings << " unparsable manifest or smali entries skipped\n";
  m.config["jobs"] = a.jobs;
  m.inputs["bundles"] = a.bundles;
  m.inputs["dicts"] = a.dicts;
  m.outputs["tokens"] = a.out;
  out << "extracted " << bundles.size() << " bundles into " << a.out << '\n';
}

struct EncodeArgs {
  std::string tokens;
  std::string out;
  std::string labels;
  std::string vocab;
  std::string vocab_out;
  std::string test_out;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

void cmd_encode(const EncodeArgs& a, RunManifest& m, std::ostream& out, std::ostream& err) {
  require_exists(a.tokens, "token directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.tokens)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tokens") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::InvalidArgument, "no .tokens files in " + a.tokens);

  const fs::path labels_path = a.labels.empty() ? fs::path(a.tokens) / "labels.csv" : fs::path(a.labels);
  std::map<std::string, LabelRow> labels;
  for (auto& row : read_labels_csv(labels_path)) labels[row.app_id] = row;

  std::vector<TokenSet> sets;
  LabeledDataset all;
  bool any_family = false;
  for (const auto& f : files) {
    const auto id = f.stem().string();
    const auto it = labels.find(id);
    if (it == labels.end()) throw Error(ErrorKind::InvalidArgument, "no label for app " + id);
    sets.push_back(read_tokens(f));
    all.labels.push_back(it->second.label);
    all.families.push_back(it->second.family);
    any_family = any_family || !it->second.family.empty();
  }
  if (!any_family) all.families.clear();

  const bool split = !a.test_out.empty();
  Split rows;
  if (split) {
    rows = split_train_test(all.labels, a.test_fraction, a.seed);
  } else {
    rows.train.resize(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) rows.train[i] = i;
  }

  Vocabulary vocab;
  if (!a.vocab.empty()) {
    vocab = Vocabulary::load(a.vocab);
  } else {
    std::vector<TokenSet> train_sets;
    for (auto r : rows.train) train_sets.push_back(sets[r]);
    vocab = Vocabulary::build(train_sets);
  }

  std::size_t dropped = 0;
  const auto make = [&](const std::vector<std::size_t>& idx) {
    LabeledDataset ds;
    ds.dim = vocab.size();
    for (auto r : idx) {
      auto enc = encode(sets[r], vocab);
      dropped += enc.dropped;
      ds.vectors.push_back(std::move(enc.vector));
      ds.labels.push_back(all.labels[r]);
      if (!all.families.empty()) ds.families.push_back(all.families[r]);
    }
    return ds;
  };
  write_dataset(make(rows.train), fs::path(a.out));
  m.outputs["dataset"] = a.out;
  if (split) {
    write_dataset(make(rows.test), fs::path(a.test_out));
    m.outputs["test_dataset"] = a.test_out;
  }
  if (a.vocab.empty()) {
    const auto vocab_out = a.vocab_out.empty() ? a.out + ".vocab" : a.vocab_out;
    vocab.save(vocab_out);
    m.outputs["vocab"] = vocab_out;
  } else {
    m.inputs["vocab"] = a.vocab;
  }
  if (dropped > 0) err << "warning: " << dropped << " tokens outside the vocabulary were dropped\n";
  m.inputs["tokens"] = a.tokens;
  m.inputs["labels"] = labels_path.string();
  m.config["test_fraction"] = split ? ojson(a.test_fraction) : ojson(nullptr);
  if (split) m.seed = a.seed;
  out << "encoded " << rows.train.size() << " samples";
  if (split) out << " (+" << rows.test.size() << " test)";
  out << " over " << vocab.size() << " features\n";
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string model = "fm";
  double alpha = 1.0;
  TrainFlags flags;
};

void cmd_train(const TrainArgs& a, RunManifest& m, std::ostream& out) {
  const auto ds = read_dataset(fs::path(a.dataset));
  m.inputs["dataset"] = a.dataset;
  m.outputs["model"] = a.out;
  m.config = train_config_json(a.flags);
  m.config["model"] = a.model;
  m.seed = a.flags.cfg.seed;
  if (a.model == "fm") {
    const auto mask = build_mask(a.flags, ds.dim);
    if (!a.flags.vocab.empty()) m.inputs["vocab"] = a.flags.vocab;
    const auto model = train(ds, a.flags.cfg, mask);
    save_model(model, fs::path(a.out));
    out << "trained FM: dim " << model.dim << ", k " << model.k << ", " << model.parameter_count()
        << " parameters\n";
  } else if (a.model == "logistic") {
    const auto model = train_logistic(ds, a.flags.cfg);
    save_model(model, fs::path(a.out));
    out << "trained logistic: dim " << model.dim << '\n';
  } else {
    m.config["alpha"] = a.alpha;
    const auto model = train_bernoulli_nb(ds, a.alpha);
    save_model(model, fs::path(a.out));
    out << "trained naive Bayes: dim " << model.dim << '\n';
  }
}

struct PredictArgs {
  std::string model;
  std::string dataset;
  std::string bundle;
  std::string dicts;
  std::string vocab;
  std::string out;
  double threshold = 0.5;
};

void cmd_predict(const PredictArgs& a, RunManifest& m, std::ostream& out, std::ostream& err) {
  const auto model = load_any_model(fs::path(a.model));
  m.inputs["model"] = a.model;
  m.config["threshold"] = a.threshold;
  std::vector<std::pair<std::string, SparseVector>> rows;
  if (!a.bundle.empty()) {
    if (a.dicts.empty() || a.vocab.empty()) {
      throw Error(ErrorKind::InvalidArgument, "--bundle needs --dicts and --vocab");
    }
    const auto dicts = Dictionaries::load_dir(a.dicts);
    const auto vocab = Vocabulary::load(a.vocab);
    for (const auto& dir : find_bundles(a.bundle)) {
      auto enc = encode(extract_one(dir, dicts).tokens, vocab);
      if (enc.dropped > 0) {
        err << "warning: " << dir.filename().string() << ": " << enc.dropped
            << " tokens outside the vocabulary\n";
      }
      rows.emplace_back(fs::absolute(dir).filename().string(), std::move(enc.vector));
    }
    m.inputs["bundle"] = a.bundle;
    m.inputs["dicts"] = a.dicts;
    m.inputs["vocab"] = a.vocab;
  } else {
    const auto ds = read_dataset(fs::path(a.dataset));
    for (std::size_t i = 0; i < ds.size(); ++i) rows.emplace_back(std::to_string(i), ds.vectors[i]);
    m.inputs["dataset"] = a.dataset;
  }

  std::ostringstream text;
  for (const auto& [id, x] : rows) {
    check_model_dim(model_dim(model), x.dim());
    const double p = score_proba(model, x);
    text << id << ',' << format_double(p) << ',' << label_text(classify(p, a.threshold)) << '\n';
  }
  if (a.out.empty()) {
    out << text.str();
  } else {
    auto f = open_out(a.out);
    f << text.str();
    m.outputs["scores"] = a.out;
  }
}

struct EvaluateArgs {
  std::string model;
  std::string dataset;
  std::string out;
  std::string roc;
  double threshold = 0.5;
};

void cmd_evaluate(const EvaluateArgs& a, RunManifest& m, std::ostream& out) {
  const auto model = load_any_model(fs::path(a.model));
  const auto ds = read_dataset(fs::path(a.dataset));
  check_model_dim(model_dim(model), ds.dim);
  std::vector<double> probs;
  for (const auto& x : ds.vectors) probs.push_back(score_proba(model, x));
  const auto c = confusion(ds.labels, classify_all(probs, a.threshold));
  const auto met = metrics(c);
  const bool both = std::count(ds.labels.begin(), ds.labels.end(), Label::Malware) > 0 &&
                    std::count(ds.labels.begin(), ds.labels.end(), Label::Clean) > 0;
  std::optional<RocCurve> curve;
  if (both) curve = roc(ds.labels, probs);

  {
    auto f = open_out(a.out);
    write_metrics_csv(c, met, curve ? &*curve : nullptr, f);
  }
  const auto roc_path = a.roc.empty() ? a.out + ".roc.csv" : a.roc;
  if (curve) {
    auto f = open_out(roc_path);
    write_roc_csv(*curve, f);
    m.outputs["roc"] = roc_path;
  }
  m.inputs["model"] = a.model;
  m.inputs["dataset"] = a.dataset;
  m.outputs["report"] = a.out;
  m.config["threshold"] = a.threshold;
  out << "accuracy=" << format_double(met.accuracy) << " precision=" << format_double(met.precision)
      << " recall=" << format_double(met.recall) << " f1=" << format_double(met.f1)
      << " fpr=" << format_double(met.fpr);
  if (curve) out << " auc=" << format_double(curve->auc);
  out << '\n';
}

struct CvArgs {
  std::string dataset;
  std::string out;
  std::size_t folds = 5;
  std::optional<std::uint64_t> split_seed;
  double threshold = 0.5;
  TrainFlags flags;
};

void cmd_cv(const CvArgs& a, RunManifest& m, std::ostream& out) {
  const auto ds = read_dataset(fs::path(a.dataset));
  const auto mask = build_mask(a.flags, ds.dim);
  const auto split_seed = a.split_seed.value_or(a.flags.cfg.seed);
  const auto folds = cross_validate(ds, a.flags.cfg, mask, a.folds, split_seed, a.threshold);
  {
    auto f = open_out(a.out);
    write_cv_csv(folds, f);
  }
  m.config = train_config_json(a.flags);
  m.config["folds"] = a.folds;
  m.config["split_seed"] = split_seed;
  m.config["threshold"] = a.threshold;
  m.seed = a.flags.cfg.seed;
  m.inputs["dataset"] = a.dataset;
  m.outputs["report"] = a.out;
  double acc = 0.0;
  for (const auto& f : folds) acc += f.metrics.accuracy;
  out << a.folds << "-fold mean accuracy=" << format_double(acc / static_cast<double>(folds.size())) << '\n';
}

struct FamiliesArgs {
  std::string dataset;
  std::string out;
  double test_fraction = 0.2;
  std::optional<std::uint64_t> split_seed;
  double threshold = 0.5;
  std::size_t min_samples = 10;
  std::size_t jobs = 1;
  TrainFlags flags;
};

void cmd_families(const FamiliesArgs& a, RunManifest& m, std::ostream& out) {
  const auto ds = read_dataset(fs::path(a.dataset));
  FamilyEvalConfig cfg;
  cfg.train = a.flags.cfg;
  cfg.mask = build_mask(a.flags, ds.dim);
  cfg.test_fraction = a.test_fraction;
  cfg.split_seed = a.split_seed.value_or(a.flags.cfg.seed);
  cfg.threshold = a.threshold;
  cfg.min_samples = a.min_samples;
  cfg.jobs = a.jobs;
  const auto report = evaluate_families(ds, cfg);
  {
    auto f = open_out(a.out);
    write_family_csv(report, f);
  }
  m.config = train_config_json(a.flags);
  m.config["test_fraction"] = a.test_fraction;
  m.config["split_seed"] = cfg.split_seed;
  m.config["threshold"] = a.threshold;
  m.config["min_samples"] = a.min_samples;
  m.config["jobs"] = a.jobs;
  m.seed = a.flags.cfg.seed;
  m.inputs["dataset"] = a.dataset;
  m.outputs["report"] = a.out;
  out << "evaluated " << report.evaluated_count << " of " << report.rows.size()
      << " families, macro recall=" << format_double(report.average.recall) << '\n';
}

std::vector<std::string> read_manifest_args(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    auto args = j.at("args").get<std::vector<std::string>>();
    if (args.empty() || args.front() == "rerun") {
      throw Error(ErrorKind::Parse, "manifest " + path.string() + " holds no replayable command");
    }
    return args;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, "manifest " + path.string() + ": " + e.what());
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Factorization-machine Android malware detection", "fmdroid"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FMDROID_VERSION);

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic bundle corpus with planted rules");
  gen_cmd->add_option("spec", gen.spec, "Corpus spec JSON (default: built-in desk spec)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override the corpus seed");
  gen_cmd->add_option("--n-apps", gen.n_apps, "Override the corpus app count");

  ExtractArgs ext;
  auto* ext_cmd = app.add_subcommand("extract", "Extract feature tokens from decompiled bundles");
  ext_cmd->add_option("bundles", ext.bundles, "Bundle directory or a directory of bundles")->required();
  ext_cmd->add_option("--dicts", ext.dicts, "Dictionary directory")->required();
  ext_cmd->add_option("--out", ext.out, "Token output directory")->required();
  ext_cmd->add_option("--jobs", ext.jobs)->capture_default_str()->check(CLI::PositiveNumber);

  EncodeArgs enc;
  auto* enc_cmd = app.add_subcommand("encode", "Encode token files into a sparse dataset");
  enc_cmd->add_option("tokens", enc.tokens, "Token directory")->required();
  enc_cmd->add_option("--out", enc.out, "Dataset output (training part when splitting)")->required();
  enc_cmd->add_option("--labels", enc.labels, "labels.csv (default: <tokens>/labels.csv)");
  enc_cmd->add_option("--vocab", enc.vocab, "Reuse an existing vocabulary");
  enc_cmd->add_option("--vocab-out", enc.vocab_out, "Where to write a new vocabulary (default: <out>.vocab)");
  enc_cmd->add_option("--test-out", enc.test_out, "Write a stratified test split here");
  enc_cmd->add_option("--test-fraction", enc.test_fraction)->capture_default_str();
  enc_cmd->add_option("--seed", enc.seed, "Split seed")->capture_default_str();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a model");
  tr_cmd->add_option("dataset", tr.dataset)->required();
  tr_cmd->add_option("--out", tr.out, "Model output")->required();
  tr_cmd->add_option("--model", tr.model)
      ->check(CLI::IsMember({"fm", "logistic", "nb"}))
      ->capture_default_str();
  tr_cmd->add_option("--alpha", tr.alpha, "Naive Bayes smoothing")->capture_default_str();
  add_train_flags(tr_cmd, tr.flags);

  PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "Score a dataset or bundle(s): <app_id>,<probability>,<label>");
  pr_cmd->add_option("model", pr.model)->required();
  auto* pr_ds = pr_cmd->add_option("--dataset", pr.dataset);
  auto* pr_bundle = pr_cmd->add_option("--bundle", pr.bundle);
  pr_ds->excludes(pr_bundle);
  pr_cmd->add_option("--dicts", pr.dicts);
  pr_cmd->add_option("--vocab", pr.vocab);
  pr_cmd->add_option("--out", pr.out, "Write scores here instead of stdout");
  pr_cmd->add_option("--threshold", pr.threshold)->capture_default_str();

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Metrics report and ROC curve");
  ev_cmd->add_option("model", ev.model)->required();
  ev_cmd->add_option("dataset", ev.dataset)->required();
  ev_cmd->add_option("--out", ev.out, "Report CSV")->required();
  ev_cmd->add_option("--roc", ev.roc, "ROC CSV (default: <out>.roc.csv)");
  ev_cmd->add_option("--threshold", ev.threshold)->capture_default_str();

  CvArgs cv;
  auto* cv_cmd = app.add_subcommand("cv", "Stratified k-fold cross-validation of the FM");
  cv_cmd->add_option("dataset", cv.dataset)->required();
  cv_cmd->add_option("--out", cv.out, "Per-fold report CSV")->required();
  cv_cmd->add_option("--folds", cv.folds)->capture_default_str();
  cv_cmd->add_option("--split-seed", cv.split_seed, "Fold assignment seed (default: --seed)");
  cv_cmd->add_option("--threshold", cv.threshold)->capture_default_str();
  add_train_flags(cv_cmd, cv.flags);

  FamiliesArgs fam;
  auto* fam_cmd = app.add_subcommand("families", "One-vs-rest evaluation per malware family");
  fam_cmd->add_option("dataset", fam.dataset)->required();
  fam_cmd->add_option("--out", fam.out, "Family report CSV")->required();
  fam_cmd->add_option("--test-fraction", fam.test_fraction)->capture_default_str();
  fam_cmd->add_option("--split-seed", fam.split_seed, "Split seed (default: --seed)");
  fam_cmd->add_option("--threshold", fam.threshold)->capture_default_str();
  fam_cmd->add_option("--min-samples", fam.min_samples)->capture_default_str();
  fam_cmd->add_option("--jobs", fam.jobs)->capture_default_str()->check(CLI::PositiveNumber);
  add_train_flags(fam_cmd, fam.flags);

  std::string rerun_path;
  auto* rerun_cmd = app.add_subcommand("rerun", "Replay the command recorded in a run manifest");
  rerun_cmd->add_option("manifest", rerun_path)->required();

  std::vector<std::string> argv_store{"fmdroid"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << FMDROID_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  RunManifest manifest;
  manifest.args = args;
  const auto start = std::chrono::steady_clock::now();
  try {
    std::optional<fs::path> manifest_path;
    if (rerun_cmd->parsed()) {
      return run(read_manifest_args(rerun_path), out, err);
    } else if (gen_cmd->parsed()) {
      manifest.subcommand = "gen-corpus";
      cmd_gen_corpus(gen, manifest, out);
      manifest_path = manifest_for_dir(gen.out);
    } else if (ext_cmd->parsed()) {
      manifest.subcommand = "extract";
      cmd_extract(ext, manifest, out, err);
      manifest_path = manifest_for_dir(ext.out);
    } else if (enc_cmd->parsed()) {
      manifest.subcommand = "encode";
      cmd_encode(enc, manifest, out, err);
      manifest_path = manifest_for_file(enc.out);
    } else if (tr_cmd->parsed()) {
      manifest.subcommand = "train";
      cmd_train(tr, manifest, out);
      manifest_path = manifest_for_file(tr.out);
    } else if (pr_cmd->parsed()) {
      if (pr.dataset.empty() == pr.bundle.empty()) {
        err << "error: usage: predict needs exactly one of --dataset or --bundle\n";
        return kExitUsage;
      }
      manifest.subcommand = "predict";
      cmd_predict(pr, manifest, out, err);
      if (!pr.out.empty()) manifest_path = manifest_for_file(pr.out);
    } else if (ev_cmd->parsed()) {
      manifest.subcommand = "evaluate";
      cmd_evaluate(ev, manifest, out);
      manifest_path = manifest_for_file(ev.out);
    } else if (cv_cmd->parsed()) {
      manifest.subcommand = "cv";
      cmd_cv(cv, manifest, out);
      manifest_path = manifest_for_file(cv.out);
    } else if (fam_cmd->parsed()) {
      manifest.subcommand = "families";
      cmd_families(fam, manifest, out);
      manifest_path = manifest_for_file(fam.out);
    }
    if (manifest_path) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      manifest.write(*manifest_path, elapsed.count());
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << error_kind_name(e.kind()) << ": " << one_line(e.what()) << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << one_line(e.what()) << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << '\n';
    return kExitFailure;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fmdroid::cli
