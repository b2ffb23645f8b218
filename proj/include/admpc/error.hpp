#pragma once

#include <stdexcept>
#include <string>

namespace admpc {

enum class ErrorKind {
  DimensionMismatch,
  NotControllable,
  OriginNotInterior,
  CostNotPD,
  CouplingClosureViolated,
  CostNotDecomposable,
  BuildError,
  NotStable,
  IterationCapExceeded,
  SynthesisInfeasible,
  StructuredSynthesisInfeasible,
  IllConditionedDesign,
  StepInfeasible,
  MaxRoundsExceeded,
};

const char* to_string(ErrorKind kind);

/// Library-wide exception type. `step()` is meaningful only for
/// ErrorKind::StepInfeasible, where it carries the closed-loop time index.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what_arg, int step = -1)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what_arg),
        kind_(kind),
        step_(step) {}

  ErrorKind kind() const { return kind_; }
  int step() const { return step_; }

 private:
  ErrorKind kind_;
  int step_;
};

}  // namespace admpc
