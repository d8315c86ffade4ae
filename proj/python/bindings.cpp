#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fmdroid/baselines.hpp"
#include "fmdroid/corpus.hpp"
#include "fmdroid/eval.hpp"
#include "fmdroid/extraction.hpp"
#include "fmdroid/model_io.hpp"

namespace py = pybind11;
using namespace fmdroid;

namespace {

std::vector<int> label_ints(std::span<const Label> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(to_int(l));
  return out;
}

std::vector<Label> labels_from(const std::vector<int>& values) {
  std::vector<Label> out;
  out.reserve(values.size());
  for (int v : values) out.push_back(label_from_int(v));
  return out;
}

std::vector<std::string> canonical(const TokenSet& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.canonical());
  return out;
}

py::dict metrics_dict(const Confusion& c, const Metrics& m) {
  py::dict d;
  d["tp"] = c.tp;
  d["tn"] = c.tn;
  d["fp"] = c.fp;
  d["fn"] = c.fn;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["fpr"] = m.fpr;
  return d;
}

InteractionMask make_mask(const std::string& mode, const std::vector<std::pair<std::string, std::string>>& allow,
                          const Vocabulary* vocab) {
  if (mode == "full") return InteractionMask::full();
  if (mode == "first_order") return InteractionMask::first_order();
  if (mode != "partial") throw Error(ErrorKind::InvalidArgument, "unknown mask mode: " + mode);
  if (vocab == nullptr) throw Error(ErrorKind::InvalidArgument, "partial mask needs a vocabulary");
  std::vector<CategoryPair> pairs;
  for (const auto& [a, b] : allow) {
    const auto ca = category_from_tag(a), cb = category_from_tag(b);
    if (!ca || !cb) throw Error(ErrorKind::InvalidArgument, "unknown category: " + (ca ? b : a));
    pairs.emplace_back(*ca, *cb);
  }
  return InteractionMask::partial(pairs, vocab->categories());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Factorization-machine Android malware detection";
  m.attr("__version__") = FMDROID_VERSION;

  static py::exception<Error> error(m, "FmdroidError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(error_kind_name(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<SparseVector>(m, "SparseVector")
      .def(py::init<std::vector<std::uint32_t>, std::size_t>(), py::arg("indices"), py::arg("dim"))
      .def_property_readonly("indices",
                             [](const SparseVector& x) {
                               return std::vector<std::uint32_t>(x.indices().begin(), x.indices().end());
                             })
      .def_property_readonly("dim", &SparseVector::dim)
      .def_property_readonly("nnz", &SparseVector::nnz)
      .def("__eq__", [](const SparseVector& a, const SparseVector& b) { return a == b; })
      .def("__repr__", [](const SparseVector& x) {
        return "SparseVector(nnz=" + std::to_string(x.nnz()) + ", dim=" + std::to_string(x.dim()) + ")";
      });

  py::class_<LabeledDataset>(m, "Dataset")
      .def(py::init([](std::size_t dim, std::vector<SparseVector> vectors, const std::vector<int>& labels,
                       std::vector<std::string> families) {
             LabeledDataset ds{dim, std::move(vectors), labels_from(labels), std::move(families)};
             ds.validate();
             return ds;
           }),
           py::arg("dim"), py::arg("vectors"), py::arg("labels"), py::arg("families") = std::vector<std::string>{})
      .def_readonly("dim", &LabeledDataset::dim)
      .def_readonly("vectors", &LabeledDataset::vectors)
      .def_property_readonly("labels", [](const LabeledDataset& ds) { return label_ints(ds.labels); })
      .def_readonly("families", &LabeledDataset::families)
      .def("__len__", &LabeledDataset::size)
      .def("__eq__", [](const LabeledDataset& a, const LabeledDataset& b) { return a == b; })
      .def("subset", [](const LabeledDataset& ds, const std::vector<std::size_t>& rows) { return ds.subset(rows); })
      .def("save", [](const LabeledDataset& ds, const std::filesystem::path& p) { write_dataset(ds, p); })
      .def_static("load", [](const std::filesystem::path& p) { return read_dataset(p); });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("load", &Vocabulary::load)
      .def("save", &Vocabulary::save)
      .def("__len__", &Vocabulary::size)
      .def("token", [](const Vocabulary& v, std::size_t i) { return v.token(i).canonical(); })
      .def("tokens",
           [](const Vocabulary& v) {
             std::vector<std::string> out;
             for (const auto& t : v.tokens()) out.push_back(t.canonical());
             return out;
           })
      .def("index_of",
           [](const Vocabulary& v, const std::string& token) { return v.index_of(FeatureToken::parse(token)); })
      .def("encode",
           [](const Vocabulary& v, const std::vector<std::string>& tokens) {
             TokenSet set;
             for (const auto& t : tokens) set.insert(FeatureToken::parse(t));
             return encode(set, v).vector;
           })
      .def("decode", [](const Vocabulary& v, const SparseVector& x) { return canonical(decode(x, v)); });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("k", &TrainConfig::k)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("init_scale", &TrainConfig::init_scale)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("l2_w", &TrainConfig::l2_w)
      .def_readwrite("l2_v", &TrainConfig::l2_v);

  py::class_<FmModel>(m, "FmModel")
      .def_readonly("dim", &FmModel::dim)
      .def_readonly("k", &FmModel::k)
      .def_readonly("w0", &FmModel::w0)
      .def_property_readonly("w", [](const FmModel& f) { return py::array_t<double>(f.w.size(), f.w.data()); })
      .def_property_readonly("v",
                             [](const FmModel& f) {
                               return py::array_t<double>({f.dim, f.k}, f.v.data());
                             })
      .def_property_readonly("parameter_count", &FmModel::parameter_count)
      .def("predict_raw", [](const FmModel& f, const SparseVector& x) { return predict_raw(f, x); })
      .def("predict_bruteforce", &predict_bruteforce)
      .def("predict_proba", [](const FmModel& f, const SparseVector& x) { return predict_proba(f, x); })
      .def("predict_all", [](const FmModel& f, const LabeledDataset& ds) { return predict_all(f, ds); })
      .def("save", [](const FmModel& f, const std::filesystem::path& p) { save_model(f, p); })
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); })
      .def("__eq__", [](const FmModel& a, const FmModel& b) { return a == b; });

  py::class_<LinearModel>(m, "LinearModel")
      .def_readonly("dim", &LinearModel::dim)
      .def_readonly("w0", &LinearModel::w0)
      .def_readonly("w", &LinearModel::w)
      .def("predict_proba", [](const LinearModel& l, const SparseVector& x) { return predict_proba(l, x); });

  m.def(
      "train",
      [](const LabeledDataset& ds, const TrainConfig& cfg, const std::string& mask,
         const std::vector<std::pair<std::string, std::string>>& allow, const Vocabulary* vocab) {
        const auto im = make_mask(mask, allow, vocab);
        py::gil_scoped_release release;
        return train(ds, cfg, im);
      },
      py::arg("dataset"), py::arg("config") = TrainConfig{}, py::arg("mask") = "full",
      py::arg("allow") = std::vector<std::pair<std::string, std::string>>{}, py::arg("vocab") = nullptr);
  m.def(
      "train_logistic",
      [](const LabeledDataset& ds, const TrainConfig& cfg) {
        py::gil_scoped_release release;
        return train_logistic(ds, cfg);
      },
      py::arg("dataset"), py::arg("config") = TrainConfig{});

  m.def(
      "metrics",
      [](const std::vector<int>& labels, const std::vector<int>& predictions) {
        const auto c = confusion(labels_from(labels), labels_from(predictions));
        return metrics_dict(c, metrics(c));
      },
      py::arg("labels"), py::arg("predictions"));
  m.def(
      "auc", [](const std::vector<int>& labels, const std::vector<double>& scores) {
        return roc(labels_from(labels), scores).auc;
      },
      py::arg("labels"), py::arg("scores"));
  m.def(
      "split_train_test",
      [](const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
        const auto s = split_train_test(labels_from(labels), test_fraction, seed);
        return std::make_pair(s.train, s.test);
      },
      py::arg("labels"), py::arg("test_fraction") = 0.2, py::arg("seed") = 0);
  m.def(
      "stratified_kfold",
      [](const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
        return stratified_kfold(labels_from(labels), k, seed);
      },
      py::arg("labels"), py::arg("k") = 5, py::arg("seed") = 0);
  m.def(
      "evaluate_families",
      [](const LabeledDataset& ds, const TrainConfig& cfg, double test_fraction, std::uint64_t split_seed,
         std::size_t min_samples, std::size_t jobs) {
        FamilyEvalConfig fc;
        fc.train = cfg;
        fc.test_fraction = test_fraction;
        fc.split_seed = split_seed;
        fc.min_samples = min_samples;
        fc.jobs = jobs;
        FamilyReport report;
        {
          py::gil_scoped_release release;
          report = evaluate_families(ds, fc);
        }
        py::list rows;
        for (const auto& r : report.rows) {
          auto d = metrics_dict(r.confusion, r.metrics);
          d["family"] = r.family;
          d["samples"] = r.samples;
          d["evaluated"] = r.evaluated;
          d["note"] = r.note;
          rows.append(d);
        }
        py::dict avg;
        avg["precision"] = report.average.precision;
        avg["recall"] = report.average.recall;
        avg["f1"] = report.average.f1;
        avg["fpr"] = report.average.fpr;
        return py::make_tuple(rows, avg);
      },
      py::arg("dataset"), py::arg("config") = TrainConfig{}, py::arg("test_fraction") = 0.2,
      py::arg("split_seed") = 0, py::arg("min_samples") = 10, py::arg("jobs") = 1);

  m.def(
      "extract_bundle",
      [](const std::filesystem::path& bundle, const std::filesystem::path& dicts) {
        return canonical(extract_bundle(AppBundle::load(bundle), Dictionaries::load_dir(dicts)).tokens);
      },
      py::arg("bundle"), py::arg("dicts"));

  m.def("default_corpus_spec", [] { return default_desk_spec().to_json(); });
  m.def(
      "generate_corpus",
      [](const std::string& spec_json, const std::optional<std::filesystem::path>& out_dir) {
        const auto spec = spec_json.empty() ? default_desk_spec() : CorpusSpec::from_json(spec_json);
        auto c = out_dir ? generate_bundles(spec, *out_dir) : generate_dataset(spec);
        return py::make_tuple(std::move(c.dataset), std::move(c.vocab));
      },
      py::arg("spec_json") = "", py::arg("out_dir") = py::none());
}
