// SPDX-License-Identifier: Apache-2.0
#include "stochimp/solvers.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace stochimp {

CGResult conjugate_gradient(const LinOp& apply, const Vector& rhs, Vector& x, double tol,
                            int max_iters, const DotOp& dot_in) {
  const DotOp dot = dot_in ? dot_in : DotOp([](const Vector& a, const Vector& b) {
    return a.dot(b);
  });
  if (x.size() != rhs.size()) x = Vector::Zero(rhs.size());

  const double bnorm = std::sqrt(std::max(dot(rhs, rhs), 0.0));
  CGResult result;
  if (bnorm == 0.0) {
    x.setZero();
    result.converged = true;
    return result;
  }

  Vector r = rhs - apply(x);
  Vector p = r;
  double rr = dot(r, r);
  for (int it = 0; it < max_iters; ++it) {
    result.iterations = it;
    result.rel_residual = std::sqrt(std::max(rr, 0.0)) / bnorm;
    if (result.rel_residual <= tol) {
      result.converged = true;
      return result;
    }
    const Vector ap = apply(p);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;  // loss of positive definiteness at round-off scale
    const double alpha = rr / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_next = dot(r, r);
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  result.rel_residual = std::sqrt(std::max(rr, 0.0)) / bnorm;
  result.converged = result.rel_residual <= tol;
  return result;
}

namespace {

PowerResult power_once(const LinOp& apply_a, const LinOp& solve_b, const LinOp& apply_b,
                       Vector x, double shift, double tol, int max_iters) {
  PowerResult result;
  double value_prev = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector ax = apply_a(x);
    const Vector bx = apply_b(x);
    if (shift != 0.0) ax += shift * bx;
    const double xbx = x.dot(bx);
    if (!(xbx > 0.0)) break;
    const double value = x.dot(ax) / xbx - shift;
    Vector y = solve_b(ax);
    const double norm = y.norm();
    if (!(norm > 0.0)) break;
    x = y / norm;
    result.iterations = it + 1;
    if (it > 0 && std::abs(value - value_prev) <= tol * std::max(1.0, std::abs(value))) {
      result.value = value;
      result.vector = x;
      result.converged = true;
      return result;
    }
    value_prev = value;
  }
  result.value = value_prev;
  result.vector = x;
  return result;
}

}  // namespace

PowerResult power_iteration_pencil(const LinOp& apply_a, const LinOp& solve_b,
                                   const LinOp& apply_b, Index size, double tol,
                                   int max_iters, int restarts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PowerResult best;
  bool have_best = false;
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    Vector x(size);
    for (Index i = 0; i < size; ++i) x[i] = gauss(rng);
    x.normalize();
    PowerResult run = power_once(apply_a, solve_b, apply_b, x, 0.0, tol, max_iters);
    if (run.value < 0.0) {
      // Dominant magnitude was negative; shift to expose the largest eigenvalue.
      const double shift = 2.0 * std::abs(run.value) + 1.0;
      run = power_once(apply_a, solve_b, apply_b, run.vector, shift, tol, max_iters);
    }
    if (!have_best || run.value > best.value) {
      best = run;
      have_best = true;
    }
  }
  return best;
}

double smallest_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

ScaleBisectResult min_psd_scale(const Matrix& D, const Matrix& R, double rel_tol,
                                double psd_tol, double cap) {
  ScaleBisectResult result;
  const auto feasible = [&](double l) {
    const Matrix q = l * D + R;
    const double scale = std::max(q.cwiseAbs().maxCoeff(), 1e-300);
    ++result.evaluations;
    return smallest_eigenvalue(q) >= -psd_tol * scale;
  };

  if (feasible(0.0)) {
    result.value = 0.0;
    result.feasible = true;
    return result;
  }
  double hi = 1.0;
  while (!feasible(hi)) {
    hi *= 8.0;
    if (hi > cap) {
      result.value = hi;
      result.feasible = false;
      return result;
    }
  }
  double lo = 0.0;
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) hi = mid;
    else lo = mid;
  }
  result.value = hi;
  result.feasible = true;
  return result;
}

LinearFit fit_affine(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "E_PRECONDITION",
          "affine fit needs at least two samples");
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (fit.intercept + fit.slope * x[i]);
    ssr += e * e;
  }
  fit.ssr = ssr;
  fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

}  // namespace stochimp
