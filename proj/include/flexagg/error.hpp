#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flexagg {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kInfeasible,
  kUnbounded,
  kNumericFailure,
  kSingularJacobian,
  kSingularAggregate,
  kInfeasibleTarget,
  kMissingParticipant,
  kEmptyVolume,
  kRowCountMismatch,
  kNonNumericCell,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kUnbounded: return "Unbounded";
    case ErrorCode::kNumericFailure: return "NumericFailure";
    case ErrorCode::kSingularJacobian: return "SingularJacobian";
    case ErrorCode::kSingularAggregate: return "SingularAggregate";
    case ErrorCode::kInfeasibleTarget: return "InfeasibleTarget";
    case ErrorCode::kMissingParticipant: return "MissingParticipant";
    case ErrorCode::kEmptyVolume: return "EmptyVolume";
    case ErrorCode::kRowCountMismatch: return "RowCountMismatch";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code. Numerical failures that a
/// caller is expected to recover from (singular Jacobians, rejected steps)
/// are reported through status values instead.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flexagg
