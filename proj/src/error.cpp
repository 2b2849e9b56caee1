#include "linkmoe/error.hpp"

namespace linkmoe {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MALFORMED_LINE";
    case ErrorCode::SelfLoop: return "SELF_LOOP";
    case ErrorCode::NodeOutOfRange: return "NODE_OUT_OF_RANGE";
    case ErrorCode::RowCountMismatch: return "ROW_COUNT_MISMATCH";
    case ErrorCode::RaggedRow: return "RAGGED_ROW";
    case ErrorCode::NonFiniteValue: return "NON_FINITE_VALUE";
    case ErrorCode::MissingFile: return "MISSING_FILE";
    case ErrorCode::NegCountMismatch: return "NEG_COUNT_MISMATCH";
    case ErrorCode::NegativeIsPositive: return "NEGATIVE_IS_POSITIVE";
    case ErrorCode::SelfPair: return "SELF_PAIR";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::TapeMismatch: return "TAPE_MISMATCH";
    case ErrorCode::DuplicateName: return "DUPLICATE_NAME";
    case ErrorCode::UnknownHeuristic: return "UNKNOWN_HEURISTIC";
    case ErrorCode::ConflictingDuplicate: return "CONFLICTING_DUPLICATE";
    case ErrorCode::NonFiniteScore: return "NON_FINITE_SCORE";
    case ErrorCode::NoFeatures: return "NO_FEATURES";
    case ErrorCode::MissingScore: return "MISSING_SCORE";
    case ErrorCode::EmptyRegistry: return "EMPTY_REGISTRY";
    case ErrorCode::ModeInputMismatch: return "MODE_INPUT_MISMATCH";
    case ErrorCode::EmptySplit: return "EMPTY_SPLIT";
    case ErrorCode::NoNegatives: return "NO_NEGATIVES";
    case ErrorCode::EmptyPositives: return "EMPTY_POSITIVES";
    case ErrorCode::EmptyNegatives: return "EMPTY_NEGATIVES";
    case ErrorCode::UnknownSource: return "UNKNOWN_SOURCE";
    case ErrorCode::BadConfig: return "BAD_CONFIG";
    case ErrorCode::BadCheckpoint: return "BAD_CHECKPOINT";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

std::string Error::format_message(ErrorCode code, const std::string& message,
                                  std::size_t line) {
  std::string out{error_code_name(code)};
  if (line != 0) {
    out += " (line ";
    out += std::to_string(line);
    out += ")";
  }
  if (!message.empty()) {
    out += ": ";
    out += message;
  }
  return out;
}

}  // namespace linkmoe
