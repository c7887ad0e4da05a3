#include "xsolve/elliptic.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>

namespace xsolve {

void EllipticProblem::validate(const Grid& grid) const {
  if (!a || !A) throw InvalidSpec("problem needs coefficients a and A");
  for (double x : grid.x) {
    Complex ax = a(x);
    if (ax == Complex(0.0, 0.0))
      throw ZeroCoefficient("a(x) = 0 at x = " + std::to_string(x));
    auto roots = characteristic_roots(ax);
    if (roots.omega1.real() == 0.0 || roots.omega2.real() == 0.0)
      throw AdmissibilityViolation("Re omega_k = 0 at x = " +
                                   std::to_string(x));
  }
  bool has_zero = grid.bc_point(EndpointId::AtZero) != nullptr;
  bool has_b = grid.bc_point(EndpointId::AtB) != nullptr;
  if (has_zero != bc_left.has_value())
    throw ValidationError("domain kind and bc_left disagree");
  if (has_b != bc_right.has_value())
    throw ValidationError("domain kind and bc_right disagree");
  if (bc_left) bc_left->validate();
  if (bc_right) bc_right->validate();
  if (eps <= 0.0) throw ValidationError("eps must be > 0");
}

namespace {

struct CoefficientCache {
  std::vector<Complex> a;
  std::vector<Mat> A, A1, A0;
  bool has_A1 = false, has_A0 = false;
};

CoefficientCache evaluate_coefficients(const EllipticProblem& pb,
                                       const Grid& grid) {
  CoefficientCache c;
  c.has_A1 = static_cast<bool>(pb.A1);
  c.has_A0 = static_cast<bool>(pb.A0);
  c.a.reserve(grid.size());
  c.A.reserve(grid.size());
  for (double x : grid.x) {
    c.a.push_back(pb.a(x));
    c.A.push_back(pb.A(x));
    if (c.has_A1) c.A1.push_back(pb.A1(x));
    if (c.has_A0) c.A0.push_back(pb.A0(x));
  }
  return c;
}

const BoundaryConditionSet& bc_for(const EllipticProblem& pb, EndpointId id) {
  const auto& bc = id == EndpointId::AtZero ? pb.bc_left : pb.bc_right;
  if (!bc) throw ValidationError("missing boundary condition set");
  return *bc;
}

}  // namespace

AssembledOperator assemble_operator(const EllipticProblem& pb,
                                    const Grid& grid) {
  pb.validate(grid);
  const int N = pb.N;
  const int n = grid.size();
  CoefficientCache coef = evaluate_coefficients(pb, grid);

  std::vector<char> is_far(n, 0);
  for (int i : grid.far_points) is_far[i] = 1;
  std::vector<const BoundaryPoint*> bc_at(n, nullptr);
  for (const auto& bp : grid.bc_points) bc_at[bp.index] = &bp;

  for (const auto& bp : grid.bc_points) {
    auto [lo, hi] = grid.pieces[grid.piece_of(bp.index)];
    if (hi - lo + 1 < 4) throw GridTooCoarse("piece has fewer than 4 points");
  }

  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(static_cast<size_t>(n) * N * (2 * N + 2));
  auto add_block = [&](int row_pt, int col_pt, const Mat& B) {
    for (int r = 0; r < N; ++r)
      for (int c = 0; c < N; ++c)
        if (B(r, c) != Complex(0.0, 0.0))
          trip.emplace_back(row_pt * N + r, col_pt * N + c, B(r, c));
  };
  auto add_scaled_identity = [&](int row_pt, int col_pt, Complex s) {
    for (int r = 0; r < N; ++r)
      trip.emplace_back(row_pt * N + r, col_pt * N + r, s);
  };

  AssembledOperator out;
  out.grid = grid;
  out.N = N;
  out.interior.assign(n, false);

  const Mat I = Mat::Identity(N, N);
  for (int i = 0; i < n; ++i) {
    if (is_far[i]) {
      add_scaled_identity(i, i, 1.0);
      continue;
    }
    if (bc_at[i] != nullptr) {
      const BoundaryPoint& bp = *bc_at[i];
      const BoundaryConditionSet& bc = bc_for(pb, bp.which);
      double h = grid.spacing(grid.piece_of(i));
      for (int ord = 0; ord <= bc.mu; ++ord) {
        Complex w = bc.coeff[ord] * std::pow(pb.eps, bc.nu(ord));
        if (ord == 0) {
          add_scaled_identity(i, i, w);
        } else {
          Complex s = w * double(bp.direction) / (2.0 * h);
          add_scaled_identity(i, i, -3.0 * s);
          add_scaled_identity(i, i + bp.direction, 4.0 * s);
          add_scaled_identity(i, i + 2 * bp.direction, -s);
        }
      }
      continue;
    }
    // PDE row.
    out.interior[i] = true;
    int piece = grid.piece_of(i);
    double h = grid.spacing(piece);
    Complex c2 = pb.eps * coef.a[i] / (h * h);
    Mat diag = coef.A[i] + (pb.d + pb.lambda) * I - 2.0 * c2 * I;
    if (coef.has_A0) diag += coef.A0[i];
    Mat off_m = c2 * I, off_p = c2 * I;
    if (coef.has_A1) {
      Mat c1 = std::sqrt(pb.eps) / (2.0 * h) * coef.A1[i];
      off_m -= c1;
      off_p += c1;
    }
    add_block(i, i - 1, off_m);
    add_block(i, i, diag);
    add_block(i, i + 1, off_p);
  }

  out.M.resize(n * N, n * N);
  out.M.setFromTriplets(trip.begin(), trip.end());
  out.M.makeCompressed();
  return out;
}

double pde_residual_norm(const EllipticProblem& pb, const Grid& grid,
                         const Solution& sol, const GridFunction& f) {
  CoefficientCache coef = evaluate_coefficients(pb, grid);
  std::vector<char> skip(grid.size(), 0);
  for (int i : grid.far_points) skip[i] = 1;
  for (const auto& bp : grid.bc_points) skip[bp.index] = 1;

  GridFunction r = make_grid_function(grid, pb.N, pb.p);
  for (int i = 0; i < grid.size(); ++i) {
    if (skip[i]) continue;
    Vec ui = sol.u.values.row(i).transpose();
    Vec dui = sol.du.values.row(i).transpose();
    Vec d2ui = sol.d2u.values.row(i).transpose();
    Vec ri = pb.eps * coef.a[i] * d2ui + coef.A[i] * ui +
             (pb.d + pb.lambda) * ui - f.values.row(i).transpose();
    if (coef.has_A1) ri += std::sqrt(pb.eps) * (coef.A1[i] * dui);
    if (coef.has_A0) ri += coef.A0[i] * ui;
    r.values.row(i) = ri.transpose();
  }
  double fn = lp_norm(f, pb.q);
  return lp_norm(r, pb.q) / (fn > 0.0 ? fn : 1.0);
}

namespace {

Solution finalize_solution(const EllipticProblem& pb, const Grid& grid,
                           GridFunction u, const GridFunction& f) {
  Solution sol;
  sol.u = std::move(u);
  sol.du = derivative(sol.u);
  sol.d2u = second_derivative(sol.u);
  sol.residual_norm = pde_residual_norm(pb, grid, sol, f);
  if (pb.bc_left && grid.bc_point(EndpointId::AtZero))
    sol.bc_residual_left =
        boundary_functional(sol.u, *pb.bc_left, pb.eps, EndpointId::AtZero);
  if (pb.bc_right && grid.bc_point(EndpointId::AtB))
    sol.bc_residual_right =
        boundary_functional(sol.u, *pb.bc_right, pb.eps, EndpointId::AtB);
  return sol;
}

}  // namespace

Solution solve_variable(const EllipticProblem& pb, const GridFunction& f) {
  Grid grid = build_grid(pb.domain);
  if (f.grid.size() != grid.size())
    throw InvalidSpec("right-hand side grid does not match the domain");
  AssembledOperator op = assemble_operator(pb, grid);

  Vec rhs = Vec::Zero(grid.size() * pb.N);
  for (int i = 0; i < grid.size(); ++i)
    if (op.interior[i])
      rhs.segment(i * pb.N, pb.N) = f.values.row(i).transpose();

  Eigen::SparseLU<Eigen::SparseMatrix<Complex>> lu;
  lu.compute(op.M);
  if (lu.info() != Eigen::Success)
    throw SingularSystem("sparse factorization failed: " +
                         lu.lastErrorMessage());
  Vec x = lu.solve(rhs);
  double rel = (op.M * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
  if (!x.allFinite() || rel > 1e-8)
    throw SingularSystem("assembled system is numerically singular (linear "
                         "solve residual " +
                         std::to_string(rel) + ")");

  GridFunction u = make_grid_function(grid, pb.N, pb.p);
  for (int i = 0; i < grid.size(); ++i)
    u.values.row(i) = x.segment(i * pb.N, pb.N).transpose();
  return finalize_solution(pb, grid, std::move(u), f);
}

// ---------------------------------------------------------------------------
// Green's kernel

Mat GreenKernel::semigroup(double s) const {
  if (s < 0.0) throw InvalidSpec("semigroup argument must be >= 0");
  if (eig_ok_) {
    Vec d(mu_.size());
    for (Eigen::Index i = 0; i < mu_.size(); ++i)
      d[i] = std::exp(-s * omega.omega2 * mu_[i]);
    return V_ * d.asDiagonal() * Vinv_;
  }
  return matrix_exp((-s * omega.omega2) * S_);
}

Mat GreenKernel::free_kernel(double dist) const {
  return c0_ * (A_inv_sqrt_ * semigroup(std::abs(dist)));
}

double GreenKernel::decay_rate() const {
  double rate = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < mu_.size(); ++i)
    rate = std::min(rate, (omega.omega2 * mu_[i]).real());
  return rate;
}

Mat GreenKernel::evaluate(double x, double y) const {
  const double tol = 1e-12 * (1.0 + std::abs(grid.L) + std::abs(grid.b));
  int px = -1, py = -1;
  for (size_t k = 0; k < piece_data.size(); ++k) {
    const auto& pd = piece_data[k];
    if (x >= pd.x_left - tol && x <= pd.x_right + tol) px = static_cast<int>(k);
    if (y >= pd.x_left - tol && y <= pd.x_right + tol) py = static_cast<int>(k);
  }
  if (px < 0 || py < 0) throw InvalidSpec("kernel evaluated outside domain");
  const int N = static_cast<int>(A.rows());
  if (px != py) return Mat::Zero(N, N);
  const auto& pd = piece_data[px];
  Mat G = free_kernel(std::abs(x - y));
  Mat KL = pd.FL * semigroup(y - pd.x_left);
  Mat KR = pd.FR * semigroup(pd.x_right - y);
  Mat CL = semigroup(x - pd.x_left);
  Mat CR = semigroup(pd.x_right - x);
  G += CL * (pd.W[0][0] * KL + pd.W[0][1] * KR);
  G += CR * (pd.W[1][0] * KL + pd.W[1][1] * KR);
  return G;
}

namespace {

// sum_i c_i w_i (sgn * omega2 S)^i for a functional with coefficient/weight
// pairs; far-field rows use the single pair (1, 1).
Mat functional_polynomial(const std::vector<std::pair<Complex, double>>& cw,
                          Complex omega2, const Mat& S, int sgn) {
  const int N = static_cast<int>(S.rows());
  Mat P = Mat::Zero(N, N);
  Mat power = Mat::Identity(N, N);
  for (size_t i = 0; i < cw.size(); ++i) {
    P += cw[i].first * cw[i].second * power;
    power = (double(sgn) * omega2) * (S * power);
  }
  return P;
}

struct EndpointFunctional {
  std::vector<std::pair<Complex, double>> cw;
};

EndpointFunctional physical_functional(const BoundaryConditionSet& bc,
                                       double eps) {
  EndpointFunctional f;
  for (int i = 0; i <= bc.mu; ++i)
    f.cw.emplace_back(bc.coeff[i], std::pow(eps, bc.nu(i)));
  return f;
}

EndpointFunctional far_functional() {
  EndpointFunctional f;
  f.cw.emplace_back(Complex(1.0, 0.0), 1.0);
  return f;
}

}  // namespace

GreenKernel assemble_greens(const EllipticProblem& pb) {
  GreenKernel k;
  k.grid = build_grid(pb.domain);
  pb.validate(k.grid);
  k.eps = pb.eps;
  k.lambda = pb.lambda;
  k.d = pb.d;
  k.q = pb.q;
  k.p = pb.p;
  k.bc_left = pb.bc_left;
  k.bc_right = pb.bc_right;

  // Constant-coefficient preconditions.
  k.a = pb.a(k.grid.x.front());
  k.A = pb.A(k.grid.x.front());
  for (double x : k.grid.x) {
    if (std::abs(pb.a(x) - k.a) > 1e-12 * (1.0 + std::abs(k.a)))
      throw InvalidSpec("assemble_greens requires constant a");
    if ((pb.A(x) - k.A).cwiseAbs().maxCoeff() >
        1e-12 * (1.0 + k.A.cwiseAbs().maxCoeff()))
      throw InvalidSpec("assemble_greens requires constant A");
    if (pb.A1 && pb.A1(x).cwiseAbs().maxCoeff() > 1e-14)
      throw InvalidSpec("assemble_greens requires A1 = 0");
    if (pb.A0 && pb.A0(x).cwiseAbs().maxCoeff() > 1e-14)
      throw InvalidSpec("assemble_greens requires A0 = 0");
  }

  k.omega = characteristic_roots(k.a);
  if (!(k.omega.omega1.real() < 0.0 && k.omega.omega2.real() > 0.0))
    throw AdmissibilityViolation(
        "assemble_greens requires Re omega1 < 0 < Re omega2");

  const int N = static_cast<int>(k.A.rows());
  const Mat I = Mat::Identity(N, N);
  Mat A_lambda = k.A + (pb.d + pb.lambda) * I;
  k.A_lambda_sqrt = matrix_sqrt(A_lambda);
  k.S_ = k.A_lambda_sqrt / std::sqrt(pb.eps);
  k.A_inv_sqrt_ = Eigen::PartialPivLU<Mat>(k.A_lambda_sqrt).solve(I);
  k.c0_ = k.omega.omega2 / (2.0 * std::sqrt(pb.eps));

  Eigen::ComplexEigenSolver<Mat> es(k.S_);
  k.mu_ = es.eigenvalues();
  k.V_ = es.eigenvectors();
  Eigen::JacobiSVD<Mat> svd(k.V_);
  double cond = svd.singularValues()(0) /
                std::max(svd.singularValues().tail(1)(0), 1e-300);
  k.eig_ok_ = cond < 1e8;
  if (k.eig_ok_) k.Vinv_ = k.V_.inverse();
  for (Eigen::Index i = 0; i < k.mu_.size(); ++i)
    if ((k.omega.omega2 * k.mu_[i]).real() <= 0.0)
      throw AdmissibilityViolation(
          "semigroup factor does not decay (sector hypothesis fails for "
          "A + d + lambda)");

  for (size_t pc = 0; pc < k.grid.pieces.size(); ++pc) {
    auto [lo, hi] = k.grid.pieces[pc];
    GreenKernel::PieceData pd;
    pd.x_left = k.grid.x[lo];
    pd.x_right = k.grid.x[hi];
    double len = pd.x_right - pd.x_left;

    auto functional_at = [&](int idx) -> EndpointFunctional {
      for (const auto& bp : k.grid.bc_points)
        if (bp.index == idx)
          return physical_functional(bp.which == EndpointId::AtZero
                                         ? *pb.bc_left
                                         : *pb.bc_right,
                                     pb.eps);
      return far_functional();
    };
    EndpointFunctional fl = functional_at(lo);
    EndpointFunctional fr = functional_at(hi);

    Mat E_len = k.semigroup(len);
    Mat M(2 * N, 2 * N);
    M.block(0, 0, N, N) =
        functional_polynomial(fl.cw, k.omega.omega2, k.S_, -1);
    M.block(0, N, N, N) =
        functional_polynomial(fl.cw, k.omega.omega2, k.S_, +1) * E_len;
    M.block(N, 0, N, N) =
        functional_polynomial(fr.cw, k.omega.omega2, k.S_, -1) * E_len;
    M.block(N, N, N, N) =
        functional_polynomial(fr.cw, k.omega.omega2, k.S_, +1);

    Eigen::FullPivLU<Mat> lu(M);
    Vec piv = lu.matrixLU().diagonal();
    double pmax = piv.cwiseAbs().maxCoeff();
    double pmin = piv.cwiseAbs().minCoeff();
    if (pmax == 0.0 || pmin / pmax < 1e-12)
      throw SingularBoundarySystem(
          "boundary block system is numerically singular (relative pivot " +
          std::to_string(pmax == 0.0 ? 0.0 : pmin / pmax) + ")");
    Mat W = -lu.solve(Mat::Identity(2 * N, 2 * N));
    pd.W[0][0] = W.block(0, 0, N, N);
    pd.W[0][1] = W.block(0, N, N, N);
    pd.W[1][0] = W.block(N, 0, N, N);
    pd.W[1][1] = W.block(N, N, N, N);

    Mat amp = k.c0_ * k.A_inv_sqrt_;
    pd.FL = functional_polynomial(fl.cw, k.omega.omega2, k.S_, +1) * amp;
    pd.FR = functional_polynomial(fr.cw, k.omega.omega2, k.S_, -1) * amp;
    k.piece_data.push_back(std::move(pd));
  }
  return k;
}

Solution solve_constant(const GreenKernel& kernel, const GridFunction& f) {
  const Grid& grid = kernel.grid;
  if (f.grid.size() != grid.size())
    throw InvalidSpec("right-hand side grid does not match the kernel grid");
  const int N = static_cast<int>(kernel.A.rows());
  auto w = grid.quad_weights();

  GridFunction u = make_grid_function(grid, N, kernel.p);
  for (size_t pc = 0; pc < grid.pieces.size(); ++pc) {
    auto [lo, hi] = grid.pieces[pc];
    const auto& pd = kernel.piece_data[pc];
    int len = hi - lo;
    double h = grid.spacing(static_cast<int>(pc));

    std::vector<Mat> E(len + 1);
    for (int s = 0; s <= len; ++s) E[s] = kernel.semigroup(s * h);
    Mat amp = kernel.c0_ * kernel.A_inv_sqrt_;

    // Weighted copies of f and the two one-sided semigroup images.
    std::vector<Vec> fw(len + 1);
    Vec sum_L = Vec::Zero(N), sum_R = Vec::Zero(N);
    for (int j = lo; j <= hi; ++j) {
      fw[j - lo] = w[j] * f.values.row(j).transpose();
      sum_L += E[j - lo] * fw[j - lo];
      sum_R += E[hi - j] * fw[j - lo];
    }
    Vec vL = pd.FL * sum_L;
    Vec vR = pd.FR * sum_R;
    Vec gL = pd.W[0][0] * vL + pd.W[0][1] * vR;
    Vec gR = pd.W[1][0] * vL + pd.W[1][1] * vR;

    for (int i = lo; i <= hi; ++i) {
      Vec acc = Vec::Zero(N);
      for (int j = lo; j <= hi; ++j) acc += E[std::abs(i - j)] * fw[j - lo];
      Vec ui = amp * acc + E[i - lo] * gL + E[hi - i] * gR;
      u.values.row(i) = ui.transpose();
    }
  }

  // Residual audit against the constant-coefficient problem.
  EllipticProblem pb;
  pb.domain = {grid.kind, grid.b, grid.L,
               static_cast<int>(grid.pieces[0].second - grid.pieces[0].first)};
  Complex a0 = kernel.a;
  Mat A0m = kernel.A;
  pb.a = [a0](double) { return a0; };
  pb.A = [A0m](double) { return A0m; };
  pb.N = N;
  pb.q = kernel.q;
  pb.eps = kernel.eps;
  pb.lambda = kernel.lambda;
  pb.d = kernel.d;
  pb.p = kernel.p;
  pb.bc_left = kernel.bc_left;
  pb.bc_right = kernel.bc_right;
  return finalize_solution(pb, grid, std::move(u), f);
}

// ---------------------------------------------------------------------------
// Moving domain

GridFunction MovingDomainTransform::back_map(const GridFunction& u_unit) const {
  DomainSpec phys{DomainKind::Interval, b, 1.0,
                  static_cast<int>(u_unit.grid.pieces[0].second -
                                   u_unit.grid.pieces[0].first)};
  GridFunction out;
  out.grid = build_grid(phys);
  out.values = u_unit.values;
  out.p = u_unit.p;
  return out;
}

GridFunction MovingDomainTransform::forward_rhs(
    const GridFunction& f_phys) const {
  DomainSpec unit{DomainKind::Interval, 1.0, 1.0,
                  static_cast<int>(f_phys.grid.pieces[0].second -
                                   f_phys.grid.pieces[0].first)};
  GridFunction out;
  out.grid = build_grid(unit);
  out.values = f_phys.values;
  out.p = f_phys.p;
  return out;
}

MovingDomainTransform moving_domain_transform(const EllipticProblem& pb,
                                              double b_of_s) {
  if (b_of_s <= 0.0) throw InvalidSpec("moving domain requires b(s) > 0");
  if (pb.domain.kind != DomainKind::Interval)
    throw InvalidSpec("moving domain transform is defined on intervals");

  MovingDomainTransform tr;
  tr.b = b_of_s;
  EllipticProblem& t = tr.transformed;
  t = pb;
  t.domain.b = 1.0;
  const double b = b_of_s;
  ScalarField a_phys = pb.a;
  MatrixField A_phys = pb.A, A1_phys = pb.A1, A0_phys = pb.A0;
  t.a = [a_phys, b](double tau) { return a_phys(tau * b) / (b * b); };
  t.A = [A_phys, b](double tau) { return A_phys(tau * b); };
  if (A1_phys)
    t.A1 = [A1_phys, b](double tau) { return Mat(A1_phys(tau * b) / b); };
  if (A0_phys)
    t.A0 = [A0_phys, b](double tau) { return A0_phys(tau * b); };
  auto scale_bc = [b](std::optional<BoundaryConditionSet>& bc) {
    if (!bc) return;
    for (int i = 0; i <= bc->mu; ++i) bc->coeff[i] *= std::pow(b, -i);
  };
  scale_bc(t.bc_left);
  scale_bc(t.bc_right);
  return tr;
}

// ---------------------------------------------------------------------------
// Nonlinear fixed point

namespace {

double y_norm(const GridFunction& v, const std::vector<Mat>& Acache, double q) {
  GridFunction graded = v;
  // ||v||_{L_p(E(A))}: pointwise graded norm against A(x).
  double acc = 0.0;
  auto w = v.grid.quad_weights();
  for (int i = 0; i < v.grid.size(); ++i) {
    Vec vi = v.values.row(i).transpose();
    double n0 = vector_norm_q(vi, q);
    double n1 = vector_norm_q(Acache[i] * vi, q);
    double e = std::pow(std::pow(n0, v.p) + std::pow(n1, v.p), 1.0 / v.p);
    acc += w[i] * std::pow(e, v.p);
  }
  double term1 = std::pow(acc, 1.0 / v.p);
  return term1 + lp_norm(second_derivative(v), q);
}

}  // namespace

NonlinearResult nonlinear_solve(const NonlinearProblem& np, int max_iter,
                                double tol) {
  Grid grid = build_grid(np.base.domain);
  np.base.validate(grid);
  if (!np.B) throw InvalidSpec("nonlinear problem needs B");
  const int N = np.base.N;
  const Vec zero = Vec::Zero(N);

  std::vector<Mat> Acache;
  Acache.reserve(grid.size());
  for (double x : grid.x) Acache.push_back(np.base.A(x));
  for (int i = 0; i < grid.size(); i += std::max(1, grid.size() / 7)) {
    Mat diff = np.B(grid.x[i], zero, zero) - Acache[i];
    if (diff.cwiseAbs().maxCoeff() >
        1e-10 * (1.0 + Acache[i].cwiseAbs().maxCoeff()))
      throw ValidationError("B(x, 0) must equal A(x)");
  }

  NonlinearResult res;
  double fX = lp_norm(np.f, np.base.q);
  if (fX == 0.0) fX = 1.0;

  Solution lin = solve_variable(np.base, np.f);
  res.c0_estimate = y_norm(lin.u, Acache, np.base.q) / fX;
  res.contraction_prerequisite =
      res.c0_estimate * (2.0 * np.radius * np.lipschitz + np.h2);
  res.prerequisite_ok = res.contraction_prerequisite < 1.0;

  GridFunction v = lin.u;
  GridFunction g = make_grid_function(grid, N, np.base.p);
  int bad_streak = 0;
  for (int it = 0; it < max_iter; ++it) {
    GridFunction dv = derivative(v);
    for (int i = 0; i < grid.size(); ++i) {
      Vec vi = v.values.row(i).transpose();
      Vec dvi = dv.values.row(i).transpose();
      Vec gi = (Acache[i] - np.B(grid.x[i], vi, dvi)) * vi +
               np.f.values.row(i).transpose();
      if (np.F) gi += np.F(grid.x[i], vi, dvi);
      g.values.row(i) = gi.transpose();
    }
    Solution next = solve_variable(np.base, g);
    GridFunction diff = next.u;
    diff.values -= v.values;
    double gap = y_norm(diff, Acache, np.base.q);
    res.gaps.push_back(gap);
    if (res.gaps.size() >= 2) {
      double prev = res.gaps[res.gaps.size() - 2];
      double factor = prev > 0.0 ? gap / prev
                                 : (gap > 0.0
                                        ? std::numeric_limits<double>::infinity()
                                        : 0.0);
      res.factors.push_back(factor);
      bad_streak = factor > 1.0 ? bad_streak + 1 : 0;
    }
    v = next.u;
    res.iterations = it + 1;
    if (bad_streak >= 3)
      throw NotContractingWithTrace(
          "empirical contraction factor exceeded 1 for 3 consecutive steps",
          std::move(res));
    if (gap <= tol * std::max(1.0, y_norm(v, Acache, np.base.q))) break;
    if (it == max_iter - 1)
      throw MaxIterExceededWithTrace("fixed point iteration did not settle",
                                     std::move(res));
  }

  // Nonlinear residual of the fixed point.
  Solution sol;
  sol.u = v;
  sol.du = derivative(v);
  sol.d2u = second_derivative(v);
  GridFunction r = make_grid_function(grid, N, np.base.p);
  std::vector<char> skip(grid.size(), 0);
  for (int i : grid.far_points) skip[i] = 1;
  for (const auto& bp : grid.bc_points) skip[bp.index] = 1;
  for (int i = 0; i < grid.size(); ++i) {
    if (skip[i]) continue;
    Vec vi = sol.u.values.row(i).transpose();
    Vec dvi = sol.du.values.row(i).transpose();
    Vec ri = np.base.a(grid.x[i]) * np.base.eps *
                 sol.d2u.values.row(i).transpose().eval() +
             np.B(grid.x[i], vi, dvi) * vi + np.base.d * vi -
             np.f.values.row(i).transpose();
    if (np.F) ri -= np.F(grid.x[i], vi, dvi);
    r.values.row(i) = ri.transpose();
  }
  res.nonlinear_residual = lp_norm(r, np.base.q) / fX;
  sol.residual_norm = res.nonlinear_residual;
  if (np.base.bc_left)
    sol.bc_residual_left = boundary_functional(sol.u, *np.base.bc_left,
                                               np.base.eps, EndpointId::AtZero);
  if (np.base.bc_right)
    sol.bc_residual_right = boundary_functional(sol.u, *np.base.bc_right,
                                                np.base.eps, EndpointId::AtB);
  res.sol = std::move(sol);
  return res;
}

}  // namespace xsolve
