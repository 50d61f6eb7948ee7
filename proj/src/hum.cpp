// SPDX-License-Identifier: Apache-2.0
#include "stochimp/hum.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace stochimp {

int HUMProblem::control_level() const {
  return stochimp::control_level(tree, control_class);
}

void HUMProblem::validate() const {
  require(gram.matrix.rows() == model.dim, "E_PRECONDITION",
          "Gram matrix dimension does not match the model");
  require(y0.size() == model.dim, "E_PRECONDITION",
          "initial state length does not match the truncation order");
  require(epsilon > 0.0, "E_PRECONDITION", "epsilon must be positive");
  if (epsilon < 1e-12)
    fail("E_EPSILON_RANGE",
         "epsilon below 1e-12 rejected: the normal-equation conditioning scales like l/epsilon");
  if (weight) require(*weight > 0.0, "E_PRECONDITION", "the weight l must be positive when given");
  control_level();  // validates the class/window compatibility
  if (convention == Pairing::paper_reversed) {
    const int mirrored = tree.depth - tree.impulse_level;
    if (mirrored > tree.impulse_level) {
      std::ostringstream msg;
      msg << "the paper-reversed pairing requires T <= 2*T_impulse: the mirrored level "
          << mirrored << " exceeds the impulse level " << tree.impulse_level;
      fail("E_WINDOW", msg.str());
    }
  }
}

namespace {

// Pairing field of eta's backward solution, at the problem's control level
// for the adjoint convention, at the mirrored level otherwise.
AdaptedField pairing_of(const HUMProblem& p, const AdaptedField& eta) {
  const BackwardTrajectory bt = backward_evolve(p.model, p.tree, eta);
  return pairing_field(p.tree, bt, p.control_class, p.convention);
}

// Action of the observation Gramian Lambda: inject the Gram image of the
// pairing field at its native level and flow forward to the horizon. This is
// the exact adjoint of eta -> p(eta) under the node-probability pairing.
AdaptedField quadratic_map(const HUMProblem& p, const AdaptedField& eta) {
  AdaptedField pair = pairing_of(p, eta);
  const int inject_level = p.convention == Pairing::adjoint
                               ? p.tree.impulse_level
                               : p.tree.depth - p.tree.impulse_level;
  if (pair.level < inject_level) pair = lift(pair, inject_level);
  pair.values = pair.values * p.gram.matrix;
  return propagate(p.model, p.tree, std::move(pair)).back();
}

AdaptedField free_terminal(const HUMProblem& p) {
  return propagate(p.model, p.tree, constant_field(0, p.y0)).back();
}

}  // namespace

double eval_J(const HUMProblem& problem, const AdaptedField& eta, double weight) {
  require(eta.level == problem.tree.depth, "E_PRECONDITION",
          "eta must live on the deepest level");
  const BackwardTrajectory bt = backward_evolve(problem.model, problem.tree, eta);
  const AdaptedField pair =
      pairing_field(problem.tree, bt, problem.control_class, problem.convention);
  return 0.5 * weight * l2_norm2(pair, problem.gram) +
         0.5 * problem.epsilon * l2_norm2(eta) - problem.y0.dot(bt.initial());
}

AdaptedField grad_J(const HUMProblem& problem, const AdaptedField& eta, double weight) {
  const Vector quad = flatten(quadratic_map(problem, eta));
  const Vector grad =
      weight * quad + problem.epsilon * flatten(eta) - flatten(free_terminal(problem));
  return unflatten(problem.tree.depth, problem.model.dim, grad);
}

AdaptedField minimize_J(const HUMProblem& problem, double weight, CGInfo* info,
                        const AdaptedField* start) {
  problem.validate();
  const int depth = problem.tree.depth;
  const Index modes = problem.model.dim;
  const Vector rhs = flatten(free_terminal(problem));

  const LinOp apply = [&](const Vector& x) -> Vector {
    const AdaptedField eta = unflatten(depth, modes, x);
    return weight * flatten(quadratic_map(problem, eta)) + problem.epsilon * x;
  };

  Vector x = start ? flatten(*start) : Vector::Zero(rhs.size());
  const CGResult cg =
      conjugate_gradient(apply, rhs, x, problem.cg_tol, problem.cg_max_iters);
  if (info) *info = CGInfo{cg.iterations, cg.rel_residual, cg.converged};
  if (!cg.converged) {
    std::ostringstream msg;
    msg << "normal-equation CG exhausted " << problem.cg_max_iters
        << " iterations with relative residual " << cg.rel_residual << " (target "
        << problem.cg_tol << ")";
    fail("E_NO_CONVERGENCE", msg.str());
  }
  return unflatten(depth, modes, x);
}

namespace {

// Closed-form diagonal of the fiber covariance: the costate at the impulse
// level determined by terminal data eta has second-moment operator
// rho_c * e^{-2 lambda_j (T - t_impulse)} per (node, mode), with
// rho_c = prod_{k >= impulse} (1 + F_k^2 dt)/2. The cheapest preimage of a
// fiber point w has squared norm 2^{-K} <w, Sigma^{-1} w>.
Vector fiber_sqrt_sigma(const SpectralModel& model, const NoiseTree& tree) {
  double rho = 1.0;
  for (int k = tree.impulse_level; k < tree.depth; ++k) {
    const double f = tree.noise[k];
    rho *= 0.5 * (1.0 + f * f * tree.dt);
  }
  const double remaining = tree.horizon - tree.impulse_time();
  return std::sqrt(rho) * semigroup_factors(model, remaining);
}

AdaptedField scale_by_modes(const AdaptedField& f, const Vector& per_mode) {
  AdaptedField out = f;
  for (Index j = 0; j < out.num_modes(); ++j) out.values.col(j) *= per_mode[j];
  return out;
}

// Fiber image of a scaled basis field under the problem's pairing map.
AdaptedField fiber_pairing(const HUMProblem& p, const AdaptedField& w) {
  if (p.convention == Pairing::adjoint) {
    const int k_u = p.control_level();
    return k_u == w.level ? w : conditional_expectation(w, k_u);
  }
  const int mirrored = p.tree.depth - p.tree.impulse_level;
  return costate_flow(p.model, p.tree, w, mirrored).front();
}

struct FiberForms {
  Matrix numerator;    // (G sqrtSigma)^T (G sqrtSigma)
  Matrix denominator;  // pairing form through the Gram matrix
  double ridge;        // eps * 2^{-K}
};

FiberForms assemble_fiber_forms(const HUMProblem& p) {
  const int k_imp = p.tree.impulse_level;
  const Index modes = p.model.dim;
  const Index nodes = Index{1} << k_imp;
  const Index m = nodes * modes;
  const Vector sqrt_sigma = fiber_sqrt_sigma(p.model, p.tree);

  Matrix g_cols(modes, m);
  Matrix pair_cols;
  double pair_weight = 0.0;
  for (Index i = 0; i < m; ++i) {
    Vector unit = Vector::Zero(m);
    unit[i] = 1.0;
    const AdaptedField w =
        scale_by_modes(unflatten(k_imp, modes, unit), sqrt_sigma);
    g_cols.col(i) = costate_flow(p.model, p.tree, w, 0).front().values.row(0).transpose();
    const AdaptedField pair = fiber_pairing(p, w);
    if (pair_cols.size() == 0) {
      pair_cols.resize(pair.values.size(), m);
      pair_weight = std::ldexp(1.0, -pair.level);  // 2^{-level}
    }
    pair_cols.col(i) = flatten(pair);
  }

  FiberForms forms;
  forms.numerator = g_cols.transpose() * g_cols;
  // denominator(i,j) = 2^{-lp} sum_nodes p_i^T M p_j, assembled per column.
  const Index pair_nodes = pair_cols.rows() / modes;
  Matrix weighted = pair_cols;
  for (Index i = 0; i < m; ++i) {
    Eigen::Map<Matrix> block(weighted.col(i).data(), pair_nodes, modes);
    block = block * p.gram.matrix;
  }
  forms.denominator = pair_weight * (pair_cols.transpose() * weighted);
  forms.denominator = 0.5 * (forms.denominator + forms.denominator.transpose());
  forms.numerator = 0.5 * (forms.numerator + forms.numerator.transpose());
  forms.ridge = p.epsilon * std::ldexp(1.0, -p.tree.depth);
  return forms;
}

}  // namespace

MinWeightResult min_weight(const HUMProblem& problem, const MinWeightOptions& options) {
  problem.validate();
  const int k_imp = problem.tree.impulse_level;
  const Index modes = problem.model.dim;
  const Index m = (Index{1} << k_imp) * modes;

  MinWeightResult result;

  if (options.method == MinWeightOptions::Method::power || m > options.dense_limit) {
    // Matrix-free path; the pairing form must be invertible per node, which
    // holds for the at-impulse class under the adjoint pairing.
    require(problem.convention == Pairing::adjoint &&
                problem.control_class == ControlClass::at_impulse,
            "E_PRECONDITION",
            "matrix-free min_weight supports the at-impulse class with the adjoint "
            "pairing; reduce the fiber below the dense limit otherwise");
    const Vector sqrt_sigma = fiber_sqrt_sigma(problem.model, problem.tree);
    const double ridge = problem.epsilon * std::ldexp(1.0, -problem.tree.depth);
    const double node_weight = std::ldexp(1.0, -k_imp);
    const Matrix gram_inv = problem.gram.matrix.llt().solve(Matrix::Identity(modes, modes));

    const LinOp apply_a = [&](const Vector& v) -> Vector {
      AdaptedField w = scale_by_modes(unflatten(k_imp, modes, v), sqrt_sigma);
      const Vector z0 = costate_flow(problem.model, problem.tree, w, 0).front().values.row(0);
      AdaptedField back = costate_flow_transpose(
          problem.model, problem.tree, constant_field(0, z0), k_imp);
      back = scale_by_modes(back, sqrt_sigma);
      return flatten(back) - ridge * v;
    };
    const LinOp apply_b = [&](const Vector& v) -> Vector {
      AdaptedField w = scale_by_modes(unflatten(k_imp, modes, v), sqrt_sigma);
      w.values = w.values * problem.gram.matrix;
      w = scale_by_modes(w, sqrt_sigma);
      return node_weight * flatten(w);
    };
    const LinOp solve_b = [&](const Vector& v) -> Vector {
      AdaptedField w = scale_by_modes(unflatten(k_imp, modes, v), sqrt_sigma.cwiseInverse());
      w.values = w.values * gram_inv;
      w = scale_by_modes(w, sqrt_sigma.cwiseInverse());
      return flatten(w) / node_weight;
    };

    const PowerResult pr =
        power_iteration_pencil(apply_a, solve_b, apply_b, m, options.power_tol,
                               options.power_max_iters, options.power_restarts, options.seed);
    result.value = std::max(0.0, pr.value);
    result.feasible = true;
    if (!pr.converged) result.note = "power iteration stopped before full convergence";
    return result;
  }

  const FiberForms forms = assemble_fiber_forms(problem);
  const double denom_scale = forms.denominator.cwiseAbs().maxCoeff();
  if (!(denom_scale > 1e-280)) {
    fail("E_NON_OBSERVABLE",
         "the observation region does not see the reachable costates (pairing form is zero)");
  }

  if (options.method == MinWeightOptions::Method::dense_pencil) {
    Matrix shifted = forms.numerator - forms.ridge * Matrix::Identity(m, m);
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(shifted, forms.denominator);
    require(solver.info() == Eigen::Success, "E_NON_OBSERVABLE",
            "generalized eigensolve failed; pairing form is numerically singular");
    result.value = std::max(0.0, solver.eigenvalues().maxCoeff());
    return result;
  }

  const Matrix residual_form =
      forms.ridge * Matrix::Identity(m, m) - forms.numerator;
  const ScaleBisectResult bis =
      min_psd_scale(forms.denominator, residual_form, options.rel_tol);
  result.value = bis.value;
  result.feasible = bis.feasible;
  if (!bis.feasible)
    result.note =
        "no finite weight certifies the bound in this pairing class: the defect lies in "
        "directions the pairing cannot see";
  return result;
}

HUMCertificate synthesize(const HUMProblem& problem) {
  problem.validate();

  HUMCertificate cert;
  cert.convention = problem.convention;
  cert.control_class = problem.control_class;
  cert.control_level = problem.control_level();

  cert.weight_min = std::numeric_limits<double>::quiet_NaN();
  if (problem.weight) {
    cert.weight = *problem.weight;
    try {
      const MinWeightResult lmin = min_weight(problem);
      if (lmin.feasible) cert.weight_min = lmin.value;
    } catch (const Error&) {
      // l_min is informational when the weight is pinned by the caller.
    }
  } else {
    const MinWeightResult lmin = min_weight(problem);
    if (!lmin.feasible)
      fail("E_NON_OBSERVABLE",
           "automatic weight selection failed: " + (lmin.note.empty() ? "infeasible" : lmin.note));
    cert.weight = lmin.value;
    cert.weight_min = lmin.value;
  }

  cert.eta_star = minimize_J(problem, cert.weight, &cert.cg);
  const BackwardTrajectory bt = backward_evolve(problem.model, problem.tree, cert.eta_star);
  AdaptedField pair = pairing_field(problem.tree, bt, problem.control_class, problem.convention);
  cert.pairing_norm2 = l2_norm2(pair, problem.gram);

  const double sign = problem.convention == Pairing::adjoint ? -1.0 : 1.0;
  if (pair.level < cert.control_level) pair = lift(pair, cert.control_level);
  AdaptedField control = pair;
  control.values *= sign * cert.weight;
  cert.control = control;

  const ForwardTrajectory fwd =
      forward_evolve(problem.model, problem.gram, problem.tree, problem.y0, control);
  const AdaptedField& terminal = fwd.terminal();

  cert.initial_norm2 = problem.y0.squaredNorm();
  cert.eta_norm2 = l2_norm2(cert.eta_star);
  cert.terminal_norm2 = l2_norm2(terminal);
  cert.control_norm2 = l2_norm2(control, problem.gram);

  AdaptedField diff = terminal;
  diff.values -= problem.epsilon * cert.eta_star.values;
  const double target_norm = problem.epsilon * std::sqrt(cert.eta_norm2);
  const double diff_norm = std::sqrt(l2_norm2(diff));
  cert.steering_residual = target_norm > 0.0 ? diff_norm / target_norm : diff_norm;

  const double control_cost = cert.weight > 0.0 ? cert.control_norm2 / cert.weight : 0.0;
  cert.slack = cert.initial_norm2 - control_cost - cert.terminal_norm2 / problem.epsilon;

  const double chain_lhs =
      cert.weight * cert.pairing_norm2 + problem.epsilon * cert.eta_norm2;
  const double chain_rhs = control_cost + cert.terminal_norm2 / problem.epsilon;
  cert.chain_residual =
      std::abs(chain_lhs - chain_rhs) / std::max({chain_lhs, chain_rhs, 1e-30});
  return cert;
}

}  // namespace stochimp
