#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ace {

// Error taxonomy shared across the library. The CLI maps codes to exit
// statuses, and batch drivers record them in per-item status columns.
enum class ErrorCode {
  Param,          // invalid argument or configuration value
  Graph,          // autodiff misuse (foreign tape, unrecorded leaf)
  Numeric,        // non-finite value where a finite one is required
  Contract,       // data violates a documented precondition
  RankDeficient,  // singular normal equations in a least-squares fit
  Degenerate,     // weak-instrument / constant-outcome degeneracy
  Divergence,     // training loss stayed non-finite
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Error param_error(const std::string& what) { return Error(ErrorCode::Param, what); }
inline Error graph_error(const std::string& what) { return Error(ErrorCode::Graph, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorCode::Numeric, what); }
inline Error contract_error(const std::string& what) { return Error(ErrorCode::Contract, what); }

// Divergence carries the mse curve recorded up to the failure.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<double> curve)
      : Error(ErrorCode::Divergence, what), curve_(std::move(curve)) {}
  const std::vector<double>& curve() const noexcept { return curve_; }

 private:
  std::vector<double> curve_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::Param: return "param";
    case ErrorCode::Graph: return "graph";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Contract: return "contract";
    case ErrorCode::RankDeficient: return "rank_deficient";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::Divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace ace
