#pragma once

#include <stdexcept>
#include <string>

namespace msamil {

enum class ErrorKind {
  Dimension,
  Numeric,
  Label,
  Protocol,
  Determinism,
  Spec,
  Size,
  Parse,
  Resolution,
  Bounds,
  Config,
  Io,
  MissingInput,
  Format,
  EmptySlide,
  Rank,
  Input,
  UndefinedAuc,
  Stratification,
  Divergence,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit code for a failure category: 2 I/O, 3 missing input, 4 numeric, 5 config, 1 other.
int exit_code_for(ErrorKind kind);

}  // namespace msamil
