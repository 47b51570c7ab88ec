#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sclab {

enum class ErrorCode {
  InvalidArgument,
  InvalidChart,
  MetricDegenerate,
  TrajectoryEscape,
  StepTooCoarse,
  DegenerateDirection,
  TargetOffCurve,
  WedgeDegenerate,
  LinearSolveFailed,
  OrderingViolated,
  HypothesisViolated,
  CausticReached,
  MaskViolation,
  GridTooCoarse,
  GridMismatch,
  QuadratureDivergence,
  TruncationNotConverged,
  SearchBudgetExceeded,
  ParseError,
  ValidationError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidChart: return "InvalidChart";
    case ErrorCode::MetricDegenerate: return "MetricDegenerate";
    case ErrorCode::TrajectoryEscape: return "TrajectoryEscape";
    case ErrorCode::StepTooCoarse: return "StepTooCoarse";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::TargetOffCurve: return "TargetOffCurve";
    case ErrorCode::WedgeDegenerate: return "WedgeDegenerate";
    case ErrorCode::LinearSolveFailed: return "LinearSolveFailed";
    case ErrorCode::OrderingViolated: return "OrderingViolated";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::CausticReached: return "CausticReached";
    case ErrorCode::MaskViolation: return "MaskViolation";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::QuadratureDivergence: return "QuadratureDivergence";
    case ErrorCode::TruncationNotConverged: return "TruncationNotConverged";
    case ErrorCode::SearchBudgetExceeded: return "SearchBudgetExceeded";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-status mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace sclab
