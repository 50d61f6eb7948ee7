// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stochimp/types.hpp"

namespace stochimp {

using LinOp = std::function<Vector(const Vector&)>;
using DotOp = std::function<double(const Vector&, const Vector&)>;

struct CGResult {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients for an operator that is self-adjoint positive definite
/// with respect to the supplied inner product (defaults to the Euclidean one).
/// Terminates when ||r|| <= tol ||b|| in the same inner product.
CGResult conjugate_gradient(const LinOp& apply, const Vector& rhs, Vector& x, double tol,
                            int max_iters, const DotOp& dot = {});

struct PowerResult {
  double value = 0.0;
  Vector vector;
  int iterations = 0;
  bool converged = false;
};

/// Largest eigenvalue of the symmetric pencil (A, B) with B positive definite,
/// by power iteration on B^{-1}A with random restarts. Handles indefinite A by
/// re-running with a spectral shift when the dominant-magnitude eigenvalue
/// comes out negative.
PowerResult power_iteration_pencil(const LinOp& apply_a, const LinOp& solve_b,
                                   const LinOp& apply_b, Index size, double tol,
                                   int max_iters, int restarts, std::uint64_t seed);

/// Smallest eigenvalue of a symmetric matrix (eigenvalues-only solve).
double smallest_eigenvalue(const Matrix& sym);

struct ScaleBisectResult {
  double value = 0.0;
  bool feasible = false;
  int evaluations = 0;
};

/// Smallest l >= 0 such that l*D + R is positive semidefinite (D psd). R may
/// be indefinite. Feasibility is tested through the smallest eigenvalue with
/// a relative slack of psd_tol; returns feasible=false when no l up to the
/// cap works (the deficiency then lives in the kernel of D).
ScaleBisectResult min_psd_scale(const Matrix& D, const Matrix& R, double rel_tol = 1e-13,
                                double psd_tol = 1e-12, double cap = 1e30);

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
  double ssr = 0.0;  ///< sum of squared residuals
};

/// Ordinary least squares fit y ~ intercept + slope * x.
LinearFit fit_affine(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace stochimp
