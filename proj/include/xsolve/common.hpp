#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace xsolve {

using Complex = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RealVec = Eigen::VectorXd;

constexpr double kPi = 3.14159265358979323846;

// Base error carrying a stable machine-readable class string (kebab-case),
// used by the CLI to map failures to exit classes.
class Error : public std::runtime_error {
 public:
  Error(std::string cls, const std::string& msg)
      : std::runtime_error(cls + ": " + msg), cls_(std::move(cls)) {}
  const std::string& error_class() const { return cls_; }

 private:
  std::string cls_;
};

#define XSOLVE_DEFINE_ERROR(Name, cls)                          \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& msg) : Error(cls, msg) {}  \
  }

XSOLVE_DEFINE_ERROR(ZeroCoefficient, "zero-coefficient");
XSOLVE_DEFINE_ERROR(AdmissibilityViolation, "admissibility-violation");
XSOLVE_DEFINE_ERROR(InvalidSpec, "invalid-spec");
XSOLVE_DEFINE_ERROR(GridTooCoarse, "grid-too-coarse");
XSOLVE_DEFINE_ERROR(SingularResolvent, "singular-resolvent");
XSOLVE_DEFINE_ERROR(BranchCut, "branch-cut");
XSOLVE_DEFINE_ERROR(QuadratureNotConverged, "quadrature-not-converged");
XSOLVE_DEFINE_ERROR(SingularBoundarySystem, "singular-boundary-system");
XSOLVE_DEFINE_ERROR(SingularSystem, "singular-system");
XSOLVE_DEFINE_ERROR(NotContracting, "not-contracting");
XSOLVE_DEFINE_ERROR(MaxIterExceeded, "max-iter-exceeded");
XSOLVE_DEFINE_ERROR(StepSystemSingular, "step-system-singular");
XSOLVE_DEFINE_ERROR(ConditionViolated, "condition-violated");
XSOLVE_DEFINE_ERROR(ZeroRHS, "zero-rhs");
XSOLVE_DEFINE_ERROR(ParseError, "parse-error");
XSOLVE_DEFINE_ERROR(ValidationError, "validation-error");

#undef XSOLVE_DEFINE_ERROR

}  // namespace xsolve
