#pragma once

#include <cstdint>
#include <vector>

#include "xsolve/common.hpp"

namespace xsolve {

// Finite-dimensional stand-in for the abstract operator: a complex N x N
// matrix acting on C^N equipped with the l_q norm.
struct MatrixOperator {
  Mat mat;
  double q = 2.0;

  int n() const { return static_cast<int>(mat.rows()); }
};

// l_q norm of a vector, q in (1, inf).
double vector_norm_q(const Vec& v, double q);

// Operator norm on (C^N, l_q).  Exact (largest singular value) for q = 2;
// otherwise estimated by maximizing ||Tv||_q / ||v||_q over random
// directions followed by local power-type ascent.
double operator_norm_q(const Mat& T, double q, std::uint64_t seed = 0x9E3779B9,
                       int n_directions = 1000);

// sup over sampled lambda in S_phi of (1 + |lambda|) ||(A + lambda)^{-1}||.
// Samples the rays arg = {-phi, 0, +phi} at log-spaced moduli in
// [1e-4, 1e8].
double positivity_bound(const MatrixOperator& A, double phi,
                        int moduli_samples);

// Principal-branch fractional power A^theta, theta in (0, 1].  Throws
// BranchCut if an eigenvalue lies on (-inf, 0].
MatrixOperator fractional_power(const MatrixOperator& A, double theta);

// Principal matrix functions used by the solvers.
Mat matrix_exp(const Mat& M);
Mat matrix_sqrt(const Mat& M);   // throws BranchCut on (-inf, 0] spectrum
Mat matrix_power(const Mat& M, double theta);

// Graded norm ||u||_{E(A^theta)} = (||u||_q^p + ||A^theta u||_q^p)^{1/p}.
double graded_norm(const Vec& u, const MatrixOperator& A, double theta,
                   double p);

struct KResult {
  double value = 0.0;
  bool converged = true;
};

// K(t, u) between E(A) (theta = 1 graded norm) and E: infimum over
// u = u0 + u1 of ||u0||_{E(A)} + t ||u1||_E, by multi-start descent with
// the two trivial decompositions as analytic fallback.
KResult k_functional(double t, const Vec& u, const MatrixOperator& A,
                     double p);

// (E(A), E)_{theta,p} norm: (int_0^inf [t^{-theta} K(t,u)]^p dt/t)^{1/p}
// over t in [1e-6, 1e6] by log-spaced quadrature with step-halving check.
// Throws QuadratureNotConverged when halving changes the value by >= 0.5%.
double interpolation_norm(const Vec& u, const MatrixOperator& A, double theta,
                          double p, int min_nodes = 200);

struct RBoundEstimate {
  double value = 0.0;
  int trials = 0;
  int vectors_per_trial = 0;
  int family_size = 0;
  double standard_error = 0.0;
};

// Monte-Carlo lower estimate of the R-bound of a finite operator family on
// (C^N, l_q): max over randomized subfamily/vector configurations of
//   E_r ||sum_i r_i T_i u_i||_q / E_r ||sum_i r_i u_i||_q
// with independent uniform signs r.  Subfamily sizes cycle through
// {2, 4, 8}; unit vectors are normalized Gaussian draws.  Singleton operator
// norms are always included as configurations, so the estimate dominates the
// largest single-operator norm up to sampling error.
RBoundEstimate r_bound_estimate(const std::vector<Mat>& family, double q,
                                int trials, int vectors_per_trial,
                                std::uint64_t seed);

}  // namespace xsolve
