#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace accelbridge {

enum class ErrorCode {
  // ila-core
  UnboundVariable,
  SortMismatch,
  BadExtractRange,
  UnknownStateTarget,
  // ila-sim
  DecodeOverlap,
  UnmappedCommand,
  UnmappedRead,
  // numerics
  OutOfRange,
  // tensor-ir
  SyntaxError,
  UnknownOperator,
  ShapeMismatch,
  // eqsat
  AnalysisConflict,
  Unextractable,
  // accelerators / codegen
  CapacityExceeded,
  TraceSyntaxError,
  // generic
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Error carrying a 1-based source location. Used by the program and trace readers.
class SourceError : public Error {
 public:
  SourceError(ErrorCode code, int line, int col, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + message),
        line_(line),
        col_(col) {}

  int line() const noexcept { return line_; }
  int col() const noexcept { return col_; }

 private:
  int line_;
  int col_;
};

}  // namespace accelbridge
