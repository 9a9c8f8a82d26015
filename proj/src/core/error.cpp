#include "core/error.hpp"

namespace cl {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidConfiguration: return "invalid_configuration";
    case ErrorCode::kSliceIndex: return "slice_index";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kDegenerateConcept: return "degenerate_concept";
    case ErrorCode::kDegenerateLayer: return "degenerate_layer";
    case ErrorCode::kUninterpretableInput: return "uninterpretable_input";
    case ErrorCode::kUnknownConcept: return "unknown_concept";
    case ErrorCode::kSliceOrdering: return "slice_ordering";
    case ErrorCode::kInvalidBatch: return "invalid_batch";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kFrozenPrefixViolation: return "frozen_prefix_violation";
    case ErrorCode::kInvalidCorpus: return "invalid_corpus";
    case ErrorCode::kExhausted: return "exhausted";
    case ErrorCode::kDegenerateTask: return "degenerate_task";
    case ErrorCode::kInvalidSplit: return "invalid_split";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace cl
