#include "xsolve/sector.hpp"

#include <algorithm>
#include <cmath>

namespace xsolve {

CharacteristicRoots characteristic_roots(Complex a) {
  if (a == Complex(0.0, 0.0))
    throw ZeroCoefficient("characteristic_roots: a = 0");
  Complex w = std::sqrt(-1.0 / a);  // principal branch
  CharacteristicRoots r;
  r.omega1 = -w;
  r.omega2 = w;
  if (r.omega1.real() > r.omega2.real()) std::swap(r.omega1, r.omega2);
  if (r.omega1.real() == r.omega2.real()) {
    r.degenerate = true;
    if (r.omega1.imag() > r.omega2.imag()) std::swap(r.omega1, r.omega2);
  }
  return r;
}

AdmissibilityReport sector_admissibility(Complex a, double phi,
                                         int n_samples) {
  if (n_samples < 3)
    throw InvalidSpec("sector_admissibility: n_samples must be >= 3");
  AdmissibilityReport rep;
  rep.roots = characteristic_roots(a);
  rep.gate_pass = true;
  if (rep.roots.omega1.real() == 0.0) {
    rep.gate_pass = false;
    rep.offending_root = 1;
  } else if (rep.roots.omega2.real() == 0.0) {
    rep.gate_pass = false;
    rep.offending_root = 2;
  }

  Sector sector{phi};
  const Complex omegas[2] = {rep.roots.omega1, rep.roots.omega2};
  int fails[2] = {0, 0};
  // Rays arg = -phi, 0, +phi at log-spaced moduli.
  std::vector<double> args = {0.0};
  if (phi > 0.0) {
    args.push_back(phi);
    args.push_back(-phi);
  }
  int total = 0;
  for (double th : args) {
    for (int m = 0; m < n_samples; ++m) {
      double r = std::pow(10.0, -4.0 + 12.0 * m / std::max(1, n_samples - 1));
      Complex lambda = std::polar(r, th);
      AdmissibilityReport::Sample s;
      s.lambda = lambda;
      for (int k = 0; k < 2; ++k) {
        s.in_sector[k] = sector.contains(lambda / omegas[k]);
        if (!s.in_sector[k]) ++fails[k];
      }
      rep.samples.push_back(s);
      ++total;
    }
  }
  for (int k = 0; k < 2; ++k)
    rep.fail_fraction[k] = total > 0 ? double(fails[k]) / total : 0.0;
  return rep;
}

int Grid::piece_of(int idx) const {
  for (size_t p = 0; p < pieces.size(); ++p)
    if (idx >= pieces[p].first && idx <= pieces[p].second)
      return static_cast<int>(p);
  throw InvalidSpec("grid index out of range");
}

const BoundaryPoint* Grid::bc_point(EndpointId which) const {
  for (const auto& bp : bc_points)
    if (bp.which == which) return &bp;
  return nullptr;
}

std::vector<double> Grid::quad_weights() const {
  std::vector<double> w(x.size(), 0.0);
  for (size_t p = 0; p < pieces.size(); ++p) {
    auto [lo, hi] = pieces[p];
    double h = spacing(static_cast<int>(p));
    for (int i = lo; i <= hi; ++i) w[i] += (i == lo || i == hi) ? h / 2 : h;
  }
  return w;
}

namespace {

void append_piece(Grid& g, double x0, double x1, int n_cells) {
  int lo = g.size();
  for (int i = 0; i <= n_cells; ++i)
    g.x.push_back(x0 + (x1 - x0) * i / n_cells);
  g.pieces.emplace_back(lo, lo + n_cells);
}

}  // namespace

Grid build_grid(const DomainSpec& spec) {
  if (spec.n_cells < 4)
    throw InvalidSpec("build_grid: n_cells must be >= 4 per piece");
  bool needs_b =
      spec.kind == DomainKind::Interval || spec.kind == DomainKind::Exterior;
  bool needs_L = spec.kind != DomainKind::Interval;
  if (needs_b && spec.b <= 0.0) throw InvalidSpec("build_grid: b must be > 0");
  if (needs_L && spec.L <= 0.0) throw InvalidSpec("build_grid: L must be > 0");

  Grid g;
  g.kind = spec.kind;
  g.b = spec.b;
  g.L = spec.L;
  switch (spec.kind) {
    case DomainKind::FullLine:
      append_piece(g, -spec.L, spec.L, 2 * spec.n_cells);
      g.far_points = {0, g.size() - 1};
      break;
    case DomainKind::HalfLine:
      append_piece(g, 0.0, spec.L, spec.n_cells);
      g.bc_points.push_back({0, +1, EndpointId::AtZero});
      g.far_points = {g.size() - 1};
      break;
    case DomainKind::Interval:
      append_piece(g, 0.0, spec.b, spec.n_cells);
      g.bc_points.push_back({0, +1, EndpointId::AtZero});
      g.bc_points.push_back({g.size() - 1, -1, EndpointId::AtB});
      break;
    case DomainKind::Exterior: {
      append_piece(g, -spec.L, 0.0, spec.n_cells);
      int left_end = g.size() - 1;
      append_piece(g, spec.b, spec.b + spec.L, spec.n_cells);
      g.far_points = {0, g.size() - 1};
      g.bc_points.push_back({left_end, -1, EndpointId::AtZero});
      g.bc_points.push_back({left_end + 1, +1, EndpointId::AtB});
      break;
    }
  }
  return g;
}

double default_truncation_length(double b, double eps, Complex lambda) {
  double base = b > 0.0 ? b : 1.0;
  double scale = std::sqrt(eps) / std::sqrt(std::max(1.0, std::abs(lambda)));
  double L = 10.0 * std::max(1.0, scale);
  return std::clamp(L, 5.0 * base, 100.0 * base);
}

void BoundaryConditionSet::validate() const {
  if (mu != 0 && mu != 1)
    throw ValidationError("boundary condition order mu must be 0 or 1");
  if (static_cast<int>(coeff.size()) != mu + 1)
    throw ValidationError("boundary condition needs mu + 1 coefficients");
  if (leading() == Complex(0.0, 0.0))
    throw ValidationError("leading boundary coefficient must be nonzero");
  if (p <= 1.0) throw ValidationError("norm exponent p must be in (1, inf)");
}

Vec one_sided_derivative(const GridFunction& u, const BoundaryPoint& bp,
                         int order) {
  const int n = u.grid.size();
  const int e = bp.index;
  const int d = bp.direction;
  int needed = order == 2 ? 4 : 3;
  for (int k = 0; k < needed; ++k) {
    int idx = e + k * d;
    if (idx < 0 || idx >= n)
      throw GridTooCoarse("one-sided stencil leaves the grid");
  }
  // All stencil points must stay in the endpoint's piece.
  int piece = u.grid.piece_of(e);
  if (u.grid.piece_of(e + (needed - 1) * d) != piece)
    throw GridTooCoarse("one-sided stencil crosses a piece boundary");
  double h = u.grid.spacing(piece);

  auto row = [&](int k) { return u.values.row(e + k * d).transpose(); };
  switch (order) {
    case 0:
      return row(0);
    case 1:
      return (double(d) / (2 * h)) * (-3.0 * row(0) + 4.0 * row(1) - row(2));
    case 2:
      return (1.0 / (h * h)) *
             (2.0 * row(0) - 5.0 * row(1) + 4.0 * row(2) - row(3));
    default:
      throw InvalidSpec("derivative order must be 0, 1 or 2");
  }
}

Vec boundary_functional(const GridFunction& u, const BoundaryConditionSet& bc,
                        double eps, EndpointId end) {
  bc.validate();
  const BoundaryPoint* bp = u.grid.bc_point(end);
  BoundaryPoint synth;
  if (bp == nullptr) {
    // Functional evaluation is allowed on any grid whose endpoint exists,
    // e.g. probing a full-line function at x = 0 is not supported; report it.
    throw InvalidSpec("grid has no boundary point at the requested endpoint");
  }
  // The spec guarantees >= 3 one-sided points for mu <= 1.
  Vec out = Vec::Zero(u.values.cols());
  for (int i = 0; i <= bc.mu; ++i) {
    Vec der = one_sided_derivative(u, *bp, i);
    out += bc.coeff[i] * std::pow(eps, bc.nu(i)) * der;
  }
  return out;
}

}  // namespace xsolve
