#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fmdroid {

enum class ErrorKind {
  InvalidArgument,
  Parse,
  Io,
  DimensionMismatch,
  MissingDictionary,
  DegenerateLabels,
  Format,
};

std::string_view error_kind_name(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it
// onto a distinct exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace fmdroid
