#pragma once

#include <stdexcept>
#include <string>

namespace cl {

// Failure categories shared by every module. The numeric values are part of
// the C API (see conceptlayer.h) and must stay in sync with cl_status.
enum class ErrorCode : int {
  kInvalidConfiguration = 1,
  kSliceIndex = 2,
  kShape = 3,
  kDegenerateConcept = 4,
  kDegenerateLayer = 5,
  kUninterpretableInput = 6,
  kUnknownConcept = 7,
  kSliceOrdering = 8,
  kInvalidBatch = 9,
  kDivergence = 10,
  kFrozenPrefixViolation = 11,
  kInvalidCorpus = 12,
  kExhausted = 13,
  kDegenerateTask = 14,
  kInvalidSplit = 15,
  kIo = 16,
  kParse = 17,
  kInvalidArgument = 18,
  kInternal = 19,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cl
