#pragma once

#include "xsolve/sector.hpp"

namespace xsolve {

// L_p norm by trapezoid quadrature, with the pointwise E-norm taken as l_q
// over components.
double lp_norm(const GridFunction& u, double q);

// Centered second-order first/second derivatives, one-sided second-order at
// piece endpoints.
GridFunction derivative(const GridFunction& u);
GridFunction second_derivative(const GridFunction& u);

// Inner product weights are occasionally needed directly.
inline GridFunction make_grid_function(const Grid& g, int n_components,
                                       double p) {
  GridFunction f;
  f.grid = g;
  f.values = Eigen::MatrixXcd::Zero(g.size(), n_components);
  f.p = p;
  return f;
}

}  // namespace xsolve
