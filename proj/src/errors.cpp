#include "msamil/errors.hpp"

namespace msamil {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Label: return "label";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Determinism: return "determinism";
    case ErrorKind::Spec: return "spec";
    case ErrorKind::Size: return "size";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Resolution: return "resolution";
    case ErrorKind::Bounds: return "bounds";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "I/O";
    case ErrorKind::MissingInput: return "missing input";
    case ErrorKind::Format: return "format";
    case ErrorKind::EmptySlide: return "empty slide";
    case ErrorKind::Rank: return "rank";
    case ErrorKind::Input: return "input";
    case ErrorKind::UndefinedAuc: return "undefined AUC";
    case ErrorKind::Stratification: return "stratification";
    case ErrorKind::Divergence: return "divergence";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
    case ErrorKind::Parse:
    case ErrorKind::Format:
      return 2;
    case ErrorKind::MissingInput:
    case ErrorKind::EmptySlide:
      return 3;
    case ErrorKind::Numeric:
    case ErrorKind::Divergence:
      return 4;
    case ErrorKind::Config:
    case ErrorKind::Spec:
      return 5;
    default:
      return 1;
  }
}

}  // namespace msamil
