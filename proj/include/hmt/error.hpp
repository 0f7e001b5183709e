#pragma once

#include <stdexcept>
#include <string>

namespace hmt {

// Structured error codes. The CLI prints the code name and exits 2; library
// callers can switch on the code instead of parsing messages.
enum class errc {
  multiple_roots,
  cycle_detected,
  dangling_parent,
  kind_mismatch,
  dimension_mismatch,
  missing_tensor_for_branching_factor,
  impossible_observation,
  zero_marginal_division,
  all_zero_likelihood,
  zero_state_occupancy,
  degenerate_data,
  budget_exceeded,
  non_finite_parameter,
  monotonicity_violation,
  invalid_model,
  invalid_forest,
  io_error,
};

inline const char* errc_name(errc code) {
  switch (code) {
    case errc::multiple_roots: return "MultipleRoots";
    case errc::cycle_detected: return "CycleDetected";
    case errc::dangling_parent: return "DanglingParent";
    case errc::kind_mismatch: return "KindMismatch";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::missing_tensor_for_branching_factor:
      return "MissingTensorForBranchingFactor";
    case errc::impossible_observation: return "ImpossibleObservation";
    case errc::zero_marginal_division: return "ZeroMarginalDivision";
    case errc::all_zero_likelihood: return "AllZeroLikelihood";
    case errc::zero_state_occupancy: return "ZeroStateOccupancy";
    case errc::degenerate_data: return "DegenerateData";
    case errc::budget_exceeded: return "BudgetExceeded";
    case errc::non_finite_parameter: return "NonFiniteParameter";
    case errc::monotonicity_violation: return "MonotonicityViolation";
    case errc::invalid_model: return "InvalidModel";
    case errc::invalid_forest: return "InvalidForest";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message, int node = -1, int state = -1)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        node_(node),
        state_(state) {}

  errc code() const { return code_; }
  // Node/state the error refers to, or -1 when not applicable.
  int node() const { return node_; }
  int state() const { return state_; }

 private:
  errc code_;
  int node_;
  int state_;
};

}  // namespace hmt
