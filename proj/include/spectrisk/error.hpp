#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spectrisk {

enum class ErrorCode {
  NegativeAtom,
  BadWeights,
  NonFiniteIntegrand,
  DepthTooLarge,
  NoConvergence,
  BadArgument,
  SingularDerivative,
  InverseMomentInfinite,
  NotPositiveDefinite,
  SingularSolve,
  SingularSigma,
  BadClassSizes,
  GridMismatch,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NegativeAtom: return "NegativeAtom";
    case ErrorCode::BadWeights: return "BadWeights";
    case ErrorCode::NonFiniteIntegrand: return "NonFiniteIntegrand";
    case ErrorCode::DepthTooLarge: return "DepthTooLarge";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::BadArgument: return "BadArgument";
    case ErrorCode::SingularDerivative: return "SingularDerivative";
    case ErrorCode::InverseMomentInfinite: return "InverseMomentInfinite";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::SingularSolve: return "SingularSolve";
    case ErrorCode::SingularSigma: return "SingularSigma";
    case ErrorCode::BadClassSizes: return "BadClassSizes";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// Numerical failures (as opposed to bad input) map to CLI exit code 3.
constexpr bool is_solver_failure(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NoConvergence:
    case ErrorCode::SingularDerivative:
    case ErrorCode::SingularSolve:
    case ErrorCode::NonFiniteIntegrand:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace spectrisk
