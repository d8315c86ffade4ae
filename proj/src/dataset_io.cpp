#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fmdroid/feature_model.hpp"

namespace fmdroid {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_uint(std::string_view text, T& value) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorKind::Parse, "dataset line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

void write_dataset(const LabeledDataset& ds, std::ostream& out) {
  ds.validate();
  out << "dim " << ds.dim << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out << (ds.labels[r] == Label::Malware ? "+1" : "-1");
    if (ds.has_families() && !ds.families[r].empty()) out << " fam:" << ds.families[r];
    for (auto idx : ds.vectors[r].indices()) out << ' ' << idx << ":1";
    out << '\n';
  }
}

void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write dataset " + path.string());
  write_dataset(ds, out);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

LabeledDataset read_dataset(std::istream& in) {
  LabeledDataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  bool any_family = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_ws(line);
    if (fields.empty()) continue;

    if (!have_header) {
      if (fields.size() != 2 || fields[0] != "dim" || !parse_uint(fields[1], ds.dim)) {
        fail(line_no, "expected header 'dim <n>'");
      }
      have_header = true;
      continue;
    }

    Label label;
    if (fields[0] == "+1") {
      label = Label::Malware;
    } else if (fields[0] == "-1") {
      label = Label::Clean;
    } else {
      fail(line_no, "label must be +1 or -1, got '" + std::string(fields[0]) + "'");
    }

    std::string family;
    std::vector<std::uint32_t> indices;
    for (std::size_t f = 1; f < fields.size(); ++f) {
      const auto field = fields[f];
      if (field.starts_with("qid:")) continue;
      if (field.starts_with("fam:")) {
        if (!indices.empty() || !family.empty()) fail(line_no, "misplaced fam: tag");
        family = std::string(field.substr(4));
        if (!is_valid_token_value(family)) fail(line_no, "invalid family name");
        continue;
      }
      const auto colon = field.find(':');
      std::uint32_t idx = 0;
      if (colon == std::string_view::npos || !parse_uint(field.substr(0, colon), idx)) {
        fail(line_no, "malformed feature '" + std::string(field) + "'");
      }
      if (field.substr(colon + 1) != "1") {
        fail(line_no, "feature values must be 1 (binary encoding)");
      }
      if (idx >= ds.dim) {
        fail(line_no, "index " + std::to_string(idx) + " >= dim " + std::to_string(ds.dim));
      }
      if (!indices.empty() && indices.back() >= idx) {
        fail(line_no, "indices must be strictly increasing");
      }
      indices.push_back(idx);
    }

    any_family = any_family || !family.empty();
    ds.vectors.emplace_back(std::move(indices), ds.dim);
    ds.labels.push_back(label);
    ds.families.push_back(std::move(family));
  }
  if (!have_header) fail(line_no == 0 ? 1 : line_no, "missing 'dim <n>' header");
  if (!any_family) ds.families.clear();
  return ds;
}

LabeledDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace fmdroid
