#include "accelbridge/error.hpp"
#include "accelbridge/shape.hpp"

#include <sstream>

namespace accelbridge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnboundVariable: return "UnboundVariable";
    case ErrorCode::SortMismatch: return "SortMismatch";
    case ErrorCode::BadExtractRange: return "BadExtractRange";
    case ErrorCode::UnknownStateTarget: return "UnknownStateTarget";
    case ErrorCode::DecodeOverlap: return "DecodeOverlap";
    case ErrorCode::UnmappedCommand: return "UnmappedCommand";
    case ErrorCode::UnmappedRead: return "UnmappedRead";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownOperator: return "UnknownOperator";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AnalysisConflict: return "AnalysisConflict";
    case ErrorCode::Unextractable: return "Unextractable";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::TraceSyntaxError: return "TraceSyntaxError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Shape::Shape(std::initializer_list<int64_t> dims) : dims_(dims) {}

Shape::Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) {}

int64_t Shape::elements() const noexcept {
  int64_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace accelbridge
