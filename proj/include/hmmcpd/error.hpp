#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hmmcpd {

enum class ErrorCode {
  // model
  DimensionMismatch,
  NegativeEntry,
  NonStochasticRow,
  NonStochasticEta,
  OpenClass,
  RecurrentTransientSet,
  EmptyClass,
  BadClassLabel,
  BadDensity,
  SupportMismatch,
  SingularSystem,
  ZeroNu,
  NonUniqueStationary,
  // posterior
  ZeroLikelihood,
  DegenerateMass,
  ShapeMismatch,
  // limits
  UnsupportedPair,
  NoConvergence,
  InfiniteEverywhere,
  TooFewConditionalPaths,
  // strategy
  BadThreshold,
  BadLimit,
  NonUniqueJStar,
  // riskeval / optimal
  AllCapped,
  NotConverged,
  UnsupportedDensity,
  ResourceGuard,
  // io
  FormatError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::NonStochasticRow: return "NonStochasticRow";
    case ErrorCode::NonStochasticEta: return "NonStochasticEta";
    case ErrorCode::OpenClass: return "OpenClass";
    case ErrorCode::RecurrentTransientSet: return "RecurrentTransientSet";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::BadClassLabel: return "BadClassLabel";
    case ErrorCode::BadDensity: return "BadDensity";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::ZeroNu: return "ZeroNu";
    case ErrorCode::NonUniqueStationary: return "NonUniqueStationary";
    case ErrorCode::ZeroLikelihood: return "ZeroLikelihood";
    case ErrorCode::DegenerateMass: return "DegenerateMass";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnsupportedPair: return "UnsupportedPair";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InfiniteEverywhere: return "InfiniteEverywhere";
    case ErrorCode::TooFewConditionalPaths: return "TooFewConditionalPaths";
    case ErrorCode::BadThreshold: return "BadThreshold";
    case ErrorCode::BadLimit: return "BadLimit";
    case ErrorCode::NonUniqueJStar: return "NonUniqueJStar";
    case ErrorCode::AllCapped: return "AllCapped";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::UnsupportedDensity: return "UnsupportedDensity";
    case ErrorCode::ResourceGuard: return "ResourceGuard";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

/// Numerical failures (as opposed to bad input) map to CLI exit code 3.
constexpr bool is_numerical(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SingularSystem:
    case ErrorCode::NoConvergence:
    case ErrorCode::NotConverged:
    case ErrorCode::DegenerateMass:
    case ErrorCode::ZeroLikelihood:
    case ErrorCode::AllCapped:
    case ErrorCode::TooFewConditionalPaths:
    case ErrorCode::InfiniteEverywhere:
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

}  // namespace hmmcpd
