#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fmdroid/error.hpp"

namespace fmdroid::xml {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;

  std::optional<std::string_view> attribute(std::string_view key) const;
};

// Raised for malformed documents; offset() is the 0-based byte position
// where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error(ErrorKind::Parse, "xml parse error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Well-formedness checking parser for the subset of XML found in decoded
// Android manifests: elements, attributes, character data, entity and
// character references, comments, CDATA, processing instructions and a
// DOCTYPE without an internal subset. Text content is discarded.
Element parse(std::string_view document);

}  // namespace fmdroid::xml
