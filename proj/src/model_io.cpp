#include "fmdroid/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

namespace fmdroid {

static_assert(std::endian::native == std::endian::little,
              "model container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'F', 'M', 'D', 'R', 'O', 'I', 'D', '\0'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void put_doubles(std::span<const double> values) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) truncated();
    return value;
  }
  void get_doubles(std::span<double> values) {
    const auto bytes = static_cast<std::streamsize>(values.size() * sizeof(double));
    in_.read(reinterpret_cast<char*>(values.data()), bytes);
    if (in_.gcount() != bytes) truncated();
  }
  void raw(char* data, std::size_t n) {
    in_.read(data, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) truncated();
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw Error(ErrorKind::Format, "model file has trailing bytes");
    }
  }

 private:
  [[noreturn]] static void truncated() { throw Error(ErrorKind::Format, "model file is truncated"); }
  std::istream& in_;
};

void write_preamble(Writer& w, ModelType type) {
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kModelFormatVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(type));
}

ModelType read_preamble(Reader& r) {
  char magic[sizeof(kMagic)];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::Format, "not a model file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw Error(ErrorKind::Format, "unsupported model format version " + std::to_string(version));
  }
  const auto type = r.get<std::uint8_t>();
  if (type < 1 || type > 3) throw Error(ErrorKind::Format, "unknown model type tag");
  return static_cast<ModelType>(type);
}

// Guards allocations driven by header fields of untrusted files.
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;
constexpr std::uint64_t kMaxK = 4096;

std::size_t checked_dim(std::uint64_t dim) {
  if (dim == 0 || dim > kMaxDim) throw Error(ErrorKind::Format, "implausible model dimension");
  return static_cast<std::size_t>(dim);
}

void expect_count(std::uint64_t stored, std::size_t expected) {
  if (stored != expected) {
    throw Error(ErrorKind::Format, "parameter count " + std::to_string(stored) +
                                       " does not match header (expected " +
                                       std::to_string(expected) + ")");
  }
}

// --- FM ---

void write_fm(Writer& w, const FmModel& m) {
  m.validate();
  write_preamble(w, ModelType::FactorizationMachine);
  w.put<std::uint64_t>(m.dim);
  w.put<std::uint64_t>(m.k);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.mask.mode()));
  if (m.mask.mode() == MaskMode::PartialByCategory) {
    const auto pairs = m.mask.allowed_pairs();
    w.put<std::uint8_t>(static_cast<std::uint8_t>(pairs.size()));
    for (const auto& [a, b] : pairs) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(a));
      w.put<std::uint8_t>(static_cast<std::uint8_t>(b));
    }
    for (auto c : m.mask.category_of_index()) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
  }
  w.put<std::uint64_t>(m.parameter_count());
  w.put<double>(m.w0);
  w.put_doubles(m.w);
  w.put_doubles(m.v);
}

FeatureCategory read_category(Reader& r) {
  const auto c = r.get<std::uint8_t>();
  if (c >= kCategoryCount) throw Error(ErrorKind::Format, "invalid category byte in mask");
  return static_cast<FeatureCategory>(c);
}

struct FmHeader {
  std::size_t dim = 0;
  std::size_t k = 0;
  InteractionMask mask;
};

FmHeader read_fm_header(Reader& r) {
  FmHeader h;
  h.dim = checked_dim(r.get<std::uint64_t>());
  const auto k = r.get<std::uint64_t>();
  if (k == 0 || k > kMaxK) throw Error(ErrorKind::Format, "implausible latent dimension");
  h.k = static_cast<std::size_t>(k);
  const auto mode = r.get<std::uint8_t>();
  switch (static_cast<MaskMode>(mode)) {
    case MaskMode::Full:
      h.mask = InteractionMask::full();
      break;
    case MaskMode::FirstOrder:
      h.mask = InteractionMask::first_order();
      break;
    case MaskMode::PartialByCategory: {
      const auto n_pairs = r.get<std::uint8_t>();
      std::vector<CategoryPair> pairs;
      for (unsigned p = 0; p < n_pairs; ++p) {
        const auto a = read_category(r);
        const auto b = read_category(r);
        pairs.emplace_back(a, b);
      }
      std::vector<FeatureCategory> cats;
      cats.reserve(h.dim);
      for (std::size_t i = 0; i < h.dim; ++i) cats.push_back(read_category(r));
      if (pairs.empty()) throw Error(ErrorKind::Format, "partial mask without allowed pairs");
      h.mask = InteractionMask::partial(pairs, std::move(cats));
      break;
    }
    default:
      throw Error(ErrorKind::Format, "unknown mask mode");
  }
  return h;
}

FmModel read_fm_body(Reader& r) {
  auto h = read_fm_header(r);
  FmModel m;
  m.dim = h.dim;
  m.k = h.k;
  m.mask = std::move(h.mask);
  expect_count(r.get<std::uint64_t>(), m.parameter_count());
  m.w0 = r.get<double>();
  m.w.resize(m.dim);
  m.v.resize(m.dim * m.k);
  r.get_doubles(m.w);
  r.get_doubles(m.v);
  r.expect_end();
  m.validate();
  return m;
}

// --- Logistic ---

void write_linear(Writer& w, const LinearModel& m) {
  if (m.w.size() != m.dim || m.dim == 0) throw Error(ErrorKind::Format, "malformed linear model");
  write_preamble(w, ModelType::Logistic);
  w.put<std::uint64_t>(m.dim);
  w.put<std::uint64_t>(m.parameter_count());
  w.put<double>(m.w0);
  w.put_doubles(m.w);
}

LinearModel read_linear_body(Reader& r) {
  LinearModel m;
  m.dim = checked_dim(r.get<std::uint64_t>());
  expect_count(r.get<std::uint64_t>(), m.parameter_count());
  m.w0 = r.get<double>();
  m.w.resize(m.dim);
  r.get_doubles(m.w);
  r.expect_end();
  return m;
}

// --- Bernoulli NB ---

std::size_t nb_parameter_count(std::size_t dim) { return 2 + 4 * dim; }

void write_nb(Writer& w, const BernoulliNbModel& m) {
  for (int c = 0; c < 2; ++c) {
    if (m.log_theta[c].size() != m.dim || m.log_one_minus_theta[c].size() != m.dim) {
      throw Error(ErrorKind::Format, "malformed naive Bayes model");
    }
  }
  write_preamble(w, ModelType::BernoulliNb);
  w.put<std::uint64_t>(m.dim);
  w.put<double>(m.alpha);
  w.put<std::uint64_t>(nb_parameter_count(m.dim));
  w.put_doubles(m.log_prior);
  for (int c = 0; c < 2; ++c) {
    w.put_doubles(m.log_theta[c]);
    w.put_doubles(m.log_one_minus_theta[c]);
  }
}

BernoulliNbModel read_nb_body(Reader& r) {
  BernoulliNbModel m;
  m.dim = checked_dim(r.get<std::uint64_t>());
  m.alpha = r.get<double>();
  expect_count(r.get<std::uint64_t>(), nb_parameter_count(m.dim));
  r.get_doubles(m.log_prior);
  for (int c = 0; c < 2; ++c) {
    m.log_theta[c].resize(m.dim);
    m.log_one_minus_theta[c].resize(m.dim);
    r.get_doubles(m.log_theta[c]);
    r.get_doubles(m.log_one_minus_theta[c]);
  }
  r.expect_end();
  return m;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write model " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open model " + path.string());
  return in;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace

void save_model(const FmModel& model, std::ostream& out) {
  Writer w(out);
  write_fm(w, model);
}

void save_model(const FmModel& model, const std::filesystem::path& path) {
  auto out = open_out(path);
  save_model(model, out);
  finish(out, path);
}

FmModel load_model(std::istream& in) {
  Reader r(in);
  if (read_preamble(r) != ModelType::FactorizationMachine) {
    throw Error(ErrorKind::Format, "model file does not hold a factorization machine");
  }
  return read_fm_body(r);
}

FmModel load_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  return load_model(in);
}

void save_model(const LinearModel& model, const std::filesystem::path& path) {
  auto out = open_out(path);
  Writer w(out);
  write_linear(w, model);
  finish(out, path);
}

void save_model(const BernoulliNbModel& model, const std::filesystem::path& path) {
  auto out = open_out(path);
  Writer w(out);
  write_nb(w, model);
  finish(out, path);
}

AnyModel load_any_model(std::istream& in) {
  Reader r(in);
  switch (read_preamble(r)) {
    case ModelType::FactorizationMachine: return read_fm_body(r);
    case ModelType::Logistic: return read_linear_body(r);
    case ModelType::BernoulliNb: return read_nb_body(r);
  }
  throw Error(ErrorKind::Format, "unknown model type");
}

AnyModel load_any_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  return load_any_model(in);
}

void save_any_model(const AnyModel& model, const std::filesystem::path& path) {
  std::visit([&](const auto& m) { save_model(m, path); }, model);
}

ModelFileInfo inspect_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  Reader r(in);
  ModelFileInfo info;
  info.format_version = kModelFormatVersion;
  info.type = read_preamble(r);
  switch (info.type) {
    case ModelType::FactorizationMachine: {
      const auto h = read_fm_header(r);
      info.dim = h.dim;
      info.k = h.k;
      info.mask_mode = h.mask.mode();
      break;
    }
    case ModelType::Logistic:
      info.dim = checked_dim(r.get<std::uint64_t>());
      info.mask_mode = MaskMode::FirstOrder;
      break;
    case ModelType::BernoulliNb:
      info.dim = checked_dim(r.get<std::uint64_t>());
      r.get<double>();
      info.mask_mode = MaskMode::FirstOrder;
      break;
  }
  const auto declared = r.get<std::uint64_t>();
  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload_bytes = static_cast<std::uint64_t>(in.tellg() - payload_start);
  if (payload_bytes % sizeof(double) != 0 || payload_bytes / sizeof(double) != declared) {
    throw Error(ErrorKind::Format, "model payload size does not match its parameter count");
  }
  info.parameter_count = static_cast<std::size_t>(payload_bytes / sizeof(double));
  return info;
}

std::size_t model_dim(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.dim; }, model);
}

double score_raw(const AnyModel& model, const SparseVector& x) {
  struct RawScore {
    const SparseVector& x;
    double operator()(const FmModel& m) const { return predict_raw(m, x); }
    double operator()(const LinearModel& m) const { return predict_raw(m, x); }
    double operator()(const BernoulliNbModel& m) const {
      const auto p = posterior(m, x);
      return std::log(p[1]) - std::log(p[0]);
    }
  };
  return std::visit(RawScore{x}, model);
}

double score_proba(const AnyModel& model, const SparseVector& x) {
  return std::visit([&](const auto& m) { return predict_proba(m, x); }, model);
}

}  // namespace fmdroid
