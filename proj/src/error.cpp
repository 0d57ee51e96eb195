#include "randproto/error.hpp"

namespace randproto {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kParameter: return "parameter";
    case Errc::kConfig: return "config";
    case Errc::kDimensionMismatch: return "dimension-mismatch";
    case Errc::kShapeMismatch: return "shape-mismatch";
    case Errc::kValidation: return "validation";
    case Errc::kCorruption: return "corruption";
    case Errc::kUnsupportedFormat: return "unsupported-format";
    case Errc::kIo: return "io";
    case Errc::kInfeasibleSplit: return "infeasible-split";
    case Errc::kMissingDomain: return "missing-domain";
    case Errc::kUndefinedPrototype: return "undefined-prototype";
    case Errc::kUndefinedSimilarity: return "undefined-similarity";
    case Errc::kDegenerateSplit: return "degenerate-split";
    case Errc::kVersionMismatch: return "version-mismatch";
    case Errc::kSingular: return "singular";
    case Errc::kStepSize: return "step-size";
  }
  return "unknown";
}

ErrorCategory category_of(Errc code) noexcept {
  switch (code) {
    case Errc::kParameter:
    case Errc::kConfig:
      return ErrorCategory::kConfig;
    case Errc::kSingular:
    case Errc::kStepSize:
      return ErrorCategory::kNumerical;
    default:
      return ErrorCategory::kData;
  }
}

void fail(Errc code, const std::string& what) {
  throw Error(code, std::string(errc_name(code)) + ": " + what);
}

}  // namespace randproto
