#pragma once

#include <optional>
#include <vector>

#include "xsolve/common.hpp"

namespace xsolve {

// Closed complex sector of half-angle phi around the positive real axis,
// together with the origin.
struct Sector {
  double phi = 0.0;  // in [0, pi)

  bool contains(Complex lambda) const {
    if (lambda == Complex(0.0, 0.0)) return true;
    return std::abs(std::arg(lambda)) <= phi + 1e-14;
  }
};

// Roots of a*w^2 + 1 = 0, ordered Re w1 <= Re w2 (ties broken by Im).
// The two roots are exact negatives of each other.
struct CharacteristicRoots {
  Complex omega1;
  Complex omega2;
  bool degenerate = false;  // Re w1 = Re w2 = 0
};

CharacteristicRoots characteristic_roots(Complex a);

// Per-root sampled diagnostic of lambda/omega_k sector membership plus the
// hard gate Re omega_k != 0.
struct AdmissibilityReport {
  CharacteristicRoots roots;
  bool gate_pass = false;
  int offending_root = 0;  // 1 or 2 when the gate fails, 0 otherwise
  double fail_fraction[2] = {0.0, 0.0};
  struct Sample {
    Complex lambda;
    bool in_sector[2];
  };
  std::vector<Sample> samples;
};

AdmissibilityReport sector_admissibility(Complex a, double phi, int n_samples);

enum class DomainKind { FullLine, HalfLine, Interval, Exterior };

// FullLine: [-L, L].  HalfLine: [0, L].  Interval: [0, b].
// Exterior: [-L, 0] u [b, b+L] (truncation of R \ [0, b]).
struct DomainSpec {
  DomainKind kind = DomainKind::Interval;
  double b = 1.0;
  double L = 10.0;
  int n_cells = 200;  // per connected piece
};

enum class EndpointId { AtZero, AtB };

// A grid point at which a boundary condition row acts.  `direction` is the
// index step that walks from the endpoint into the domain (one-sided
// stencils use indices e, e+dir, e+2*dir, ...).
struct BoundaryPoint {
  int index = 0;
  int direction = +1;
  EndpointId which = EndpointId::AtZero;
};

struct Grid {
  DomainKind kind = DomainKind::Interval;
  double b = 1.0;
  double L = 10.0;
  std::vector<double> x;
  std::vector<std::pair<int, int>> pieces;  // inclusive index ranges
  std::vector<BoundaryPoint> bc_points;
  std::vector<int> far_points;  // truncation points carrying u = 0 rows

  int size() const { return static_cast<int>(x.size()); }
  int piece_of(int idx) const;
  double spacing(int piece) const {
    return x[pieces[piece].first + 1] - x[pieces[piece].first];
  }
  const BoundaryPoint* bc_point(EndpointId which) const;
  // Trapezoid quadrature weights, per piece.
  std::vector<double> quad_weights() const;
};

Grid build_grid(const DomainSpec& spec);

// Default truncation length when a config leaves L unset: several resolvent
// decay lengths, clamped relative to the interval size.
double default_truncation_length(double b, double eps, Complex lambda);

// One endpoint's boundary condition  sum_i c_i eps^{nu_i} u^(i)(endpoint)
// with nu_i = i/2 + 1/(2p).
struct BoundaryConditionSet {
  std::vector<Complex> coeff;  // size mu + 1
  int mu = 0;                  // in {0, 1}
  double p = 2.0;

  double nu(int i) const { return 0.5 * i + 0.5 / p; }
  Complex leading() const { return coeff.at(mu); }
  void validate() const;
};

struct GridFunction {
  Grid grid;
  Eigen::MatrixXcd values;  // n_points x N
  double p = 2.0;

  int components() const { return static_cast<int>(values.cols()); }
};

Vec boundary_functional(const GridFunction& u, const BoundaryConditionSet& bc,
                        double eps, EndpointId end);

// One-sided second-order endpoint derivatives of a grid function, used by
// boundary rows and residual audits.  `order` in {0, 1, 2}.
Vec one_sided_derivative(const GridFunction& u, const BoundaryPoint& bp,
                         int order);

}  // namespace xsolve
