#include "masec/error.hpp"

namespace masec {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::solver_stalled: return "solver_stalled";
    case ErrorCode::open_section: return "open_section";
    case ErrorCode::out_of_stencil: return "out_of_stencil";
    case ErrorCode::cascade_hypothesis: return "cascade_hypothesis";
    case ErrorCode::resolution_exhausted: return "resolution_exhausted";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace masec
