#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/SparseCore>

#include "xsolve/gridfn.hpp"
#include "xsolve/operator_core.hpp"
#include "xsolve/sector.hpp"

namespace xsolve {

using ScalarField = std::function<Complex(double)>;
using MatrixField = std::function<Mat(double)>;

// eps * a(x) u'' + (A(x) + d + lambda) u + eps^{1/2} A1(x) u' + A0(x) u = f
// with one endpoint condition per boundary point of the domain.
struct EllipticProblem {
  DomainSpec domain;
  ScalarField a;
  MatrixField A;
  MatrixField A1;  // optional; nullptr means zero
  MatrixField A0;  // optional; nullptr means zero
  int N = 1;
  double q = 2.0;
  double eps = 1.0;
  Complex lambda = Complex(0.0, 0.0);
  double d = 0.0;
  double p = 2.0;
  std::optional<BoundaryConditionSet> bc_left;   // acts at x = 0
  std::optional<BoundaryConditionSet> bc_right;  // acts at x = b

  // Checks coefficient admissibility on the grid (a != 0, Re omega_k != 0)
  // and that the boundary condition set matches the domain kind.
  void validate(const Grid& grid) const;
};

struct Solution {
  GridFunction u;
  GridFunction du;
  GridFunction d2u;
  double residual_norm = 0.0;     // PDE residual on interior points / ||f||
  Vec bc_residual_left;           // empty when the endpoint does not exist
  Vec bc_residual_right;
};

// Residual audit shared by both solvers; interior points only (boundary and
// far-field rows enforce different equations).
double pde_residual_norm(const EllipticProblem& pb, const Grid& grid,
                         const Solution& sol, const GridFunction& f);

// Green's kernel of the constant-coefficient problem on the truncated
// domain.  Every connected piece carries a decaying semigroup mode per
// endpoint; the far (truncation) endpoints impose u = 0, matching the
// finite-difference closure.
class GreenKernel {
 public:
  double eps = 1.0;
  Complex lambda = Complex(0.0, 0.0);
  double d = 0.0;
  Complex a;
  Mat A;  // constant coefficient
  double q = 2.0, p = 2.0;
  Grid grid;
  CharacteristicRoots omega;
  Mat A_lambda_sqrt;
  std::optional<BoundaryConditionSet> bc_left, bc_right;

  struct PieceData {
    double x_left, x_right;
    Mat W[2][2];    // solved boundary weights (the B_kj blocks)
    Mat FL, FR;     // functional kernels: K_L(y) = FL E(y-xl), etc.
  };
  std::vector<PieceData> piece_data;

  // Decaying semigroup factor E(s) = exp(-s eps^{-1/2} omega2 A_lambda^{1/2}),
  // s >= 0.
  Mat semigroup(double s) const;
  // G(lambda, x, y); zero when x and y lie in different pieces.
  Mat evaluate(double x, double y) const;
  // Free-space part only.
  Mat free_kernel(double dist) const;

  // Decay-rate floor used by truncation checks: min_i Re(omega2 mu_i).
  double decay_rate() const;

 private:
  friend GreenKernel assemble_greens(const EllipticProblem&);
  bool eig_ok_ = false;
  Mat V_, Vinv_;
  Vec mu_;          // eigenvalues of eps^{-1/2} A_lambda^{1/2}
  Mat S_;           // eps^{-1/2} A_lambda^{1/2}
  Mat A_inv_sqrt_;  // A_lambda^{-1/2}
  Complex c0_;      // free-kernel amplitude omega2 / (2 sqrt(eps))
};

GreenKernel assemble_greens(const EllipticProblem& pb);

Solution solve_constant(const GreenKernel& kernel, const GridFunction& f);

Solution solve_variable(const EllipticProblem& pb, const GridFunction& f);

// Sparse operator assembly for the discretized problem: PDE rows on
// interior points, boundary-functional rows on BC points, identity rows on
// far points.  `interior` marks rows carrying the PDE (and hence f and any
// time derivative).
struct AssembledOperator {
  Eigen::SparseMatrix<Complex> M;
  std::vector<bool> interior;
  Grid grid;
  int N = 1;
};

AssembledOperator assemble_operator(const EllipticProblem& pb,
                                    const Grid& grid);

// Interval-to-unit-interval rescaling: coefficients pick up b^{-2} on the
// second-order term, b^{-i} on order-i couplings and boundary terms.
struct MovingDomainTransform {
  EllipticProblem transformed;  // posed on (0, 1)
  double b;                     // the scale that was removed
  // Maps a solution on (0,1) back to the (0,b) grid (same index layout).
  GridFunction back_map(const GridFunction& u_unit) const;
  // Carries a right-hand side from the (0,b) grid to the unit grid.
  GridFunction forward_rhs(const GridFunction& f_phys) const;
};

MovingDomainTransform moving_domain_transform(const EllipticProblem& pb,
                                              double b_of_s);

// a(x) u'' + B(x, u, u') u + d u = F(x, u, u') + f, solved by iterating the
// solution map of the linearized problem a w'' + (A + d) w = g.
struct NonlinearProblem {
  EllipticProblem base;  // A(x) must equal B(x, 0)
  std::function<Mat(double, const Vec&, const Vec&)> B;
  std::function<Vec(double, const Vec&, const Vec&)> F;
  GridFunction f;
  double radius = 1.0;      // ball radius r
  double lipschitz = 0.0;   // L(r)
  double h1 = 0.0, h2 = 0.0;
};

struct NonlinearResult {
  Solution sol;
  std::vector<double> gaps;     // ||v_{k+1} - v_k||_Y
  std::vector<double> factors;  // gap ratios
  int iterations = 0;
  double c0_estimate = 0.0;           // measured coercive constant
  double contraction_prerequisite = 0.0;  // C0 (2 r L(r) + h2)
  bool prerequisite_ok = false;
  double nonlinear_residual = 0.0;
};

// Thrown when the empirical contraction factor exceeds 1 for three
// consecutive steps; carries the partial trace for reporting.
class NotContractingWithTrace : public NotContracting {
 public:
  NotContractingWithTrace(const std::string& msg, NonlinearResult r)
      : NotContracting(msg), result(std::move(r)) {}
  NonlinearResult result;
};

class MaxIterExceededWithTrace : public MaxIterExceeded {
 public:
  MaxIterExceededWithTrace(const std::string& msg, NonlinearResult r)
      : MaxIterExceeded(msg), result(std::move(r)) {}
  NonlinearResult result;
};

NonlinearResult nonlinear_solve(const NonlinearProblem& np, int max_iter,
                                double tol);

}  // namespace xsolve
