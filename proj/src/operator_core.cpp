#include "xsolve/operator_core.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

namespace xsolve {

double vector_norm_q(const Vec& v, double q) {
  if (v.size() == 0) return 0.0;
  double scale = v.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    acc += std::pow(std::abs(v[i]) / scale, q);
  return scale * std::pow(acc, 1.0 / q);
}

namespace {

// Gradient of v -> ||v||_q in the complex representation; zero where the
// norm vanishes.  Componentwise modulus is |v_i|^{q-1}, bounded near zero
// for q > 1.
Vec norm_gradient(const Vec& v, double q) {
  double n = vector_norm_q(v, q);
  Vec g = Vec::Zero(v.size());
  if (n == 0.0) return g;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double m = std::abs(v[i]);
    if (m > 0.0) g[i] = std::pow(m / n, q - 1) * (v[i] / m);
  }
  return g;
}

// Dual-exponent map used by the power-type ascent for l_q operator norms.
Vec dual_map(const Vec& v, double q) {
  Vec w = Vec::Zero(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double m = std::abs(v[i]);
    if (m > 0.0) w[i] = std::pow(m, q - 1) * (v[i] / m);
  }
  double n = vector_norm_q(w, q / (q - 1.0));
  if (n > 0.0) w /= n;
  return w;
}

Vec random_unit_vector(int n, double q, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = Complex(gauss(rng), gauss(rng));
  double norm = vector_norm_q(v, q);
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / norm;
}

}  // namespace

double operator_norm_q(const Mat& T, double q, std::uint64_t seed,
                       int n_directions) {
  if (T.rows() == 0) return 0.0;
  if (q == 2.0) {
    Eigen::JacobiSVD<Mat> svd(T);
    return svd.singularValues()(0);
  }
  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(T.cols());
  double best = 0.0;
  Vec best_v = Vec::Unit(n, 0);
  for (int k = 0; k < n_directions; ++k) {
    Vec v = random_unit_vector(n, q, rng);
    double r = vector_norm_q(T * v, q);
    if (r > best) {
      best = r;
      best_v = v;
    }
  }
  // Local ascent from the best direction (Boyd's power iteration for
  // induced q -> q norms).
  Vec v = best_v;
  for (int it = 0; it < 60; ++it) {
    Vec w = T * v;
    double r = vector_norm_q(w, q);
    if (r <= best * (1.0 + 1e-13) && it > 0) break;
    best = std::max(best, r);
    Vec z = T.adjoint() * dual_map(w, q);
    double zn = vector_norm_q(z, q);
    if (zn == 0.0) break;
    // Steepest direction in l_q: dualize back to the primal unit sphere.
    Vec nv = dual_map(z, q / (q - 1.0));
    double nn = vector_norm_q(nv, q);
    if (nn == 0.0) break;
    v = nv / nn;
  }
  best = std::max(best, vector_norm_q(T * v, q));
  return best;
}

double positivity_bound(const MatrixOperator& A, double phi,
                        int moduli_samples) {
  if (moduli_samples < 8)
    throw InvalidSpec("positivity_bound: moduli_samples must be >= 8");
  const int n = A.n();
  const Mat I = Mat::Identity(n, n);
  std::vector<double> args = {0.0};
  if (phi > 0.0) {
    args.push_back(phi);
    args.push_back(-phi);
  }
  double sup = 0.0;
  for (double th : args) {
    for (int m = 0; m < moduli_samples; ++m) {
      double r =
          std::pow(10.0, -4.0 + 12.0 * m / std::max(1, moduli_samples - 1));
      Complex lambda = std::polar(r, th);
      Eigen::PartialPivLU<Mat> lu(A.mat + lambda * I);
      Mat R = lu.solve(I);
      double err = ((A.mat + lambda * I) * R - I).cwiseAbs().maxCoeff();
      if (!std::isfinite(err) || err > 1e-6)
        throw SingularResolvent("resolvent singular at lambda = (" +
                                std::to_string(lambda.real()) + ", " +
                                std::to_string(lambda.imag()) + ")");
      double norm = operator_norm_q(R, A.q, 0xC0FFEE ^ m, 200);
      sup = std::max(sup, (1.0 + std::abs(lambda)) * norm);
    }
  }
  return sup;
}

namespace {

void check_branch(const Vec& eigs, double scale) {
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    const Complex e = eigs[i];
    if (std::abs(e.imag()) <= 1e-13 * scale && e.real() <= 1e-13 * scale)
      throw BranchCut("eigenvalue on the closed negative real axis: (" +
                      std::to_string(e.real()) + ", " +
                      std::to_string(e.imag()) + ")");
  }
}

}  // namespace

MatrixOperator fractional_power(const MatrixOperator& A, double theta) {
  if (theta <= 0.0 || theta > 1.0)
    throw InvalidSpec("fractional_power: theta must be in (0, 1]");
  if (theta == 1.0) return A;
  Eigen::ComplexEigenSolver<Mat> es(A.mat);
  double scale = std::max(1.0, A.mat.cwiseAbs().maxCoeff());
  check_branch(es.eigenvalues(), scale);

  const Mat& V = es.eigenvectors();
  Eigen::JacobiSVD<Mat> svd(V);
  double cond = svd.singularValues()(0) /
                std::max(svd.singularValues().tail(1)(0), 1e-300);
  MatrixOperator out;
  out.q = A.q;
  if (cond < 1e6) {
    Vec d = es.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i)
      d[i] = std::exp(theta * std::log(d[i]));
    out.mat = V * d.asDiagonal() * V.inverse();
  } else {
    // Defective or nearly defective: Schur-Pade matrix power.
    out.mat = A.mat.pow(theta);
  }
  return out;
}

Mat matrix_exp(const Mat& M) { return M.exp(); }

Mat matrix_sqrt(const Mat& M) {
  Eigen::ComplexEigenSolver<Mat> es(M, /*computeEigenvectors=*/false);
  check_branch(es.eigenvalues(), std::max(1.0, M.cwiseAbs().maxCoeff()));
  return M.sqrt();
}

Mat matrix_power(const Mat& M, double theta) {
  if (theta == 1.0) return M;
  Eigen::ComplexEigenSolver<Mat> es(M, /*computeEigenvectors=*/false);
  check_branch(es.eigenvalues(), std::max(1.0, M.cwiseAbs().maxCoeff()));
  return M.pow(theta);
}

double graded_norm(const Vec& u, const MatrixOperator& A, double theta,
                   double p) {
  Mat Ath = theta == 1.0 ? A.mat : fractional_power(A, theta).mat;
  double n0 = vector_norm_q(u, A.q);
  double n1 = vector_norm_q(Ath * u, A.q);
  return std::pow(std::pow(n0, p) + std::pow(n1, p), 1.0 / p);
}

namespace {

struct KObjective {
  const Vec& u;
  const Mat& A;
  double q, p, t;

  double norm_EA(const Vec& w, const Vec& Aw) const {
    double n0 = vector_norm_q(w, q);
    double n1 = vector_norm_q(Aw, q);
    return std::pow(std::pow(n0, p) + std::pow(n1, p), 1.0 / p);
  }

  double value(const Vec& w) const {
    return norm_EA(w, A * w) + t * vector_norm_q(u - w, q);
  }

  Vec gradient(const Vec& w) const {
    Vec Aw = A * w;
    double n0 = vector_norm_q(w, q);
    double n1 = vector_norm_q(Aw, q);
    double phi = std::pow(std::pow(n0, p) + std::pow(n1, p), 1.0 / p);
    Vec g = Vec::Zero(w.size());
    if (phi > 0.0) {
      double c = std::pow(phi, 1.0 - p);
      if (n0 > 0.0) g += c * std::pow(n0, p - 1) * norm_gradient(w, q);
      if (n1 > 0.0)
        g += c * std::pow(n1, p - 1) * (A.adjoint() * norm_gradient(Aw, q));
    }
    g -= t * norm_gradient(u - w, q);
    return g;
  }
};

}  // namespace

KResult k_functional(double t, const Vec& u, const MatrixOperator& A,
                     double p) {
  if (t <= 0.0) throw InvalidSpec("k_functional: t must be > 0");
  KResult res;
  if (vector_norm_q(u, A.q) == 0.0) {
    res.value = 0.0;
    return res;
  }
  KObjective obj{u, A.mat, A.q, p, t};
  // Trivial decompositions bound the infimum from above.
  double trivial = std::min(obj.value(u), obj.value(Vec::Zero(u.size())));

  std::mt19937_64 rng(0x5EEDu ^ u.size());
  std::vector<Vec> starts = {Vec::Zero(u.size()), u, 0.5 * u};
  for (int k = 0; k < 2; ++k)
    starts.push_back(0.5 * random_unit_vector(static_cast<int>(u.size()),
                                              A.q, rng) *
                     vector_norm_q(u, A.q));

  double best = trivial;
  bool converged = false;
  for (const Vec& w0 : starts) {
    Vec w = w0;
    double f = obj.value(w);
    for (int it = 0; it < 300; ++it) {
      Vec g = obj.gradient(w);
      double gn = g.norm();
      if (gn <= 1e-10 * (1.0 + std::abs(f))) {
        converged = true;
        break;
      }
      // Armijo backtracking.
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 50; ++ls) {
        Vec w_try = w - step * g;
        double f_try = obj.value(w_try);
        if (f_try <= f - 1e-4 * step * gn * gn) {
          w = w_try;
          f = f_try;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    best = std::min(best, f);
  }
  res.value = best;
  res.converged = converged || best == trivial;
  return res;
}

namespace {

// K(t_j, u) on an increasing t grid, warm-starting each minimization at the
// previous minimizer.  Matches k_functional to optimizer tolerance but is
// much cheaper inside quadratures.
std::vector<double> k_sweep(const std::vector<double>& ts, const Vec& u,
                            const MatrixOperator& A, double p) {
  std::vector<double> out(ts.size(), 0.0);
  if (vector_norm_q(u, A.q) == 0.0) return out;
  Vec w = Vec::Zero(u.size());
  for (size_t j = 0; j < ts.size(); ++j) {
    KObjective obj{u, A.mat, A.q, p, ts[j]};
    double f = obj.value(w);
    double trivial = std::min(obj.value(u), obj.value(Vec::Zero(u.size())));
    if (trivial < f) {
      f = trivial;
      w = obj.value(u) <= obj.value(Vec::Zero(u.size())) ? u
                                                         : Vec::Zero(u.size());
      f = obj.value(w);
    }
    for (int it = 0; it < 200; ++it) {
      Vec g = obj.gradient(w);
      double gn = g.norm();
      if (gn <= 1e-11 * (1.0 + std::abs(f))) break;
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 50; ++ls) {
        Vec w_try = w - step * g;
        double f_try = obj.value(w_try);
        if (f_try <= f - 1e-4 * step * gn * gn) {
          w = w_try;
          f = f_try;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    out[j] = std::min(f, trivial);
  }
  return out;
}

double interp_quadrature(const std::vector<double>& ts,
                         const std::vector<double>& ks, double theta,
                         double p) {
  // Trapezoid in s = log t of [t^{-theta} K(t)]^p.
  double acc = 0.0;
  for (size_t j = 0; j + 1 < ts.size(); ++j) {
    double s0 = std::log(ts[j]), s1 = std::log(ts[j + 1]);
    double f0 = std::pow(std::pow(ts[j], -theta) * ks[j], p);
    double f1 = std::pow(std::pow(ts[j + 1], -theta) * ks[j + 1], p);
    acc += 0.5 * (f0 + f1) * (s1 - s0);
  }
  return std::pow(acc, 1.0 / p);
}

}  // namespace

double interpolation_norm(const Vec& u, const MatrixOperator& A, double theta,
                          double p, int min_nodes) {
  if (theta <= 0.0 || theta >= 1.0)
    throw InvalidSpec("interpolation_norm: theta must be in (0, 1)");
  if (vector_norm_q(u, A.q) == 0.0) return 0.0;
  auto nodes = [&](int n) {
    std::vector<double> ts(n + 1);
    for (int j = 0; j <= n; ++j)
      ts[j] = std::pow(10.0, -6.0 + 12.0 * j / n);
    return ts;
  };
  int n = std::max(min_nodes, 200);
  auto t1 = nodes(n);
  auto k1 = k_sweep(t1, u, A, p);
  double v1 = interp_quadrature(t1, k1, theta, p);
  auto t2 = nodes(2 * n);
  auto k2 = k_sweep(t2, u, A, p);
  double v2 = interp_quadrature(t2, k2, theta, p);
  if (std::abs(v2 - v1) > 0.005 * std::abs(v2))
    throw QuadratureNotConverged(
        "interpolation norm: halving the step changed the value by " +
        std::to_string(100.0 * std::abs(v2 - v1) / std::abs(v2)) + "%");
  return v2;
}

RBoundEstimate r_bound_estimate(const std::vector<Mat>& family, double q,
                                int trials, int vectors_per_trial,
                                std::uint64_t seed) {
  if (family.empty()) throw InvalidSpec("r_bound_estimate: empty family");
  if (trials < 1000)
    throw InvalidSpec("r_bound_estimate: trials must be >= 1000");
  const int N = static_cast<int>(family.front().rows());
  std::mt19937_64 rng(seed);

  RBoundEstimate est;
  est.trials = trials;
  est.vectors_per_trial = vectors_per_trial;
  est.family_size = static_cast<int>(family.size());

  // Singleton configurations: R-bound of {T} equals ||T||.
  double best = 0.0;
  for (size_t j = 0; j < family.size(); ++j)
    best = std::max(best,
                    operator_norm_q(family[j], q, seed ^ (0x51D0 + j), 400));
  std::vector<double> best_batch_ratios;

  const int m_cycle[3] = {2, 4, 8};
  std::uniform_int_distribution<int> pick(0,
                                          static_cast<int>(family.size()) - 1);
  std::bernoulli_distribution coin(0.5);
  const int n_batches = 10;

  for (int rep = 0; rep < vectors_per_trial; ++rep) {
    int m = m_cycle[rep % 3];
    std::vector<Vec> us(m), Tus(m);
    for (int i = 0; i < m; ++i) {
      us[i] = random_unit_vector(N, q, rng);
      Tus[i] = family[pick(rng)] * us[i];
    }
    // Paired sign samples for numerator and denominator.
    double num = 0.0, den = 0.0;
    std::vector<double> bnum(n_batches, 0.0), bden(n_batches, 0.0);
    Vec sn(N), sd(N);
    for (int s = 0; s < trials; ++s) {
      sn.setZero();
      sd.setZero();
      for (int i = 0; i < m; ++i) {
        double r = coin(rng) ? 1.0 : -1.0;
        sn += r * Tus[i];
        sd += r * us[i];
      }
      double a = vector_norm_q(sn, q);
      double b = vector_norm_q(sd, q);
      num += a;
      den += b;
      int batch = s * n_batches / trials;
      bnum[batch] += a;
      bden[batch] += b;
    }
    if (den == 0.0) continue;
    double ratio = num / den;
    if (ratio > best) {
      best = ratio;
      best_batch_ratios.clear();
      for (int bidx = 0; bidx < n_batches; ++bidx)
        if (bden[bidx] > 0.0)
          best_batch_ratios.push_back(bnum[bidx] / bden[bidx]);
    }
  }

  est.value = best;
  if (best_batch_ratios.size() >= 2) {
    double mean = 0.0;
    for (double r : best_batch_ratios) mean += r;
    mean /= best_batch_ratios.size();
    double var = 0.0;
    for (double r : best_batch_ratios) var += (r - mean) * (r - mean);
    var /= (best_batch_ratios.size() - 1);
    est.standard_error =
        std::sqrt(var / static_cast<double>(best_batch_ratios.size()));
  }
  return est;
}

}  // namespace xsolve
