#pragma once

#include <stdexcept>
#include <string>

namespace randproto {

// Every failure raised by the library carries one of these codes. The CLI maps
// the category (config / data / numerical) onto its documented exit codes.
enum class Errc {
  kParameter,
  kConfig,
  kDimensionMismatch,
  kShapeMismatch,
  kValidation,
  kCorruption,
  kUnsupportedFormat,
  kIo,
  kInfeasibleSplit,
  kMissingDomain,
  kUndefinedPrototype,
  kUndefinedSimilarity,
  kDegenerateSplit,
  kVersionMismatch,
  kSingular,
  kStepSize,
};

enum class ErrorCategory { kConfig = 1, kData = 2, kNumerical = 3 };

const char* errc_name(Errc code) noexcept;
ErrorCategory category_of(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace randproto
