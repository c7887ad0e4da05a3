#include "xsolve/gridfn.hpp"

#include <cmath>

#include "xsolve/operator_core.hpp"

namespace xsolve {

double lp_norm(const GridFunction& u, double q) {
  auto w = u.grid.quad_weights();
  double acc = 0.0;
  for (int i = 0; i < u.grid.size(); ++i) {
    double e = vector_norm_q(u.values.row(i).transpose(), q);
    acc += w[i] * std::pow(e, u.p);
  }
  return std::pow(acc, 1.0 / u.p);
}

namespace {

GridFunction differentiate(const GridFunction& u, int order) {
  GridFunction out = u;
  out.values.setZero();
  for (size_t pc = 0; pc < u.grid.pieces.size(); ++pc) {
    auto [lo, hi] = u.grid.pieces[pc];
    double h = u.grid.spacing(static_cast<int>(pc));
    for (int i = lo; i <= hi; ++i) {
      auto row = [&](int j) { return u.values.row(j); };
      if (order == 1) {
        if (i == lo)
          out.values.row(i) =
              (-3.0 * row(i) + 4.0 * row(i + 1) - row(i + 2)) / (2 * h);
        else if (i == hi)
          out.values.row(i) =
              (3.0 * row(i) - 4.0 * row(i - 1) + row(i - 2)) / (2 * h);
        else
          out.values.row(i) = (row(i + 1) - row(i - 1)) / (2 * h);
      } else {
        if (i == lo)
          out.values.row(i) = (2.0 * row(i) - 5.0 * row(i + 1) +
                               4.0 * row(i + 2) - row(i + 3)) /
                              (h * h);
        else if (i == hi)
          out.values.row(i) = (2.0 * row(i) - 5.0 * row(i - 1) +
                               4.0 * row(i - 2) - row(i - 3)) /
                              (h * h);
        else
          out.values.row(i) =
              (row(i + 1) - 2.0 * row(i) + row(i - 1)) / (h * h);
      }
    }
  }
  return out;
}

}  // namespace

GridFunction derivative(const GridFunction& u) { return differentiate(u, 1); }

GridFunction second_derivative(const GridFunction& u) {
  return differentiate(u, 2);
}

}  // namespace xsolve
