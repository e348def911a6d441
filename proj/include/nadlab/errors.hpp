#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nadlab {

enum class ErrorCode {
  kNonHermitianInput,
  kDegenerateSpectrum,
  kInvalidParameter,
  kStepUnderflow,
  kGapClosure,
  kGridTooCoarse,
  kFitDiverged,
  kNoConvergence,
  kZeroOnRealAxis,
  kBranchDiscontinuity,
  kInsufficientData,
  kNonPositiveAmplitude,
  kWindowTooSmall,
  kEnergyOutsideWindow,
  kMinimumOnBoundary,
  kQuadratureUnderResolved,
  kNormalizationViolation,
  kConfigInvalid,
  kSchemaMismatch,
};

std::string_view to_string(ErrorCode code);

/// Every numerical failure in the library surfaces as this exception. The
/// code identifies the failure class so callers (the CLI in particular) can
/// map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// GapClosure carries the hierarchy level at which the spectral separation
/// of H_q was lost.
class GapClosureError : public Error {
 public:
  GapClosureError(int level, const std::string& what)
      : Error(ErrorCode::kGapClosure, what), level_(level) {}
  int level() const noexcept { return level_; }

 private:
  int level_;
};

}  // namespace nadlab
