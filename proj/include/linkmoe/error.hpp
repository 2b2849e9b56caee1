#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace linkmoe {

enum class ErrorCode {
  MalformedLine,
  SelfLoop,
  NodeOutOfRange,
  RowCountMismatch,
  RaggedRow,
  NonFiniteValue,
  MissingFile,
  NegCountMismatch,
  NegativeIsPositive,
  SelfPair,
  DimMismatch,
  TapeMismatch,
  DuplicateName,
  UnknownHeuristic,
  ConflictingDuplicate,
  NonFiniteScore,
  NoFeatures,
  MissingScore,
  EmptyRegistry,
  ModeInputMismatch,
  EmptySplit,
  NoNegatives,
  EmptyPositives,
  EmptyNegatives,
  UnknownSource,
  BadConfig,
  BadCheckpoint,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

/// Exception carrying a stable error code plus, where it applies, a
/// 1-based line number of the offending input line.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0)
      : std::runtime_error(format_message(code, message, line)),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

private:
  static std::string format_message(ErrorCode code, const std::string& message,
                                    std::size_t line);

  ErrorCode code_;
  std::size_t line_;
};

}  // namespace linkmoe
