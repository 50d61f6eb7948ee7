// SPDX-License-Identifier: Apache-2.0
#include "stochimp/optimal.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <sstream>

namespace stochimp {

namespace {

// Shared machinery of the dual path: the control-to-terminal map L, its
// adjoint through the impulse-level costate, and the Gram inner product.
struct DualPath {
  const SpectralModel& model;
  const ObservationGram& gram;
  const NoiseTree& tree;
  int level;  // control level
  AdaptedField free_state;

  AdaptedField to_terminal(const AdaptedField& u) const {
    AdaptedField injected = lift(u, tree.impulse_level);
    injected.values = injected.values * gram.matrix;
    return propagate(model, tree, std::move(injected)).back();
  }

  AdaptedField pairing(const AdaptedField& terminal_data) const {
    const std::vector<AdaptedField> flow =
        costate_flow(model, tree, terminal_data, tree.impulse_level);
    return conditional_expectation(flow.front(), level);
  }

  double dot(const Vector& a, const Vector& b) const {
    return l2_inner(unflatten(level, model.dim, a), unflatten(level, model.dim, b), gram);
  }

  // Solves the stationarity system for a multiplier; returns the control and
  // the terminal state it produces.
  struct PathPoint {
    AdaptedField control;
    AdaptedField terminal;
    double control_norm2 = 0.0;
    double terminal_norm2 = 0.0;
    int cg_iterations = 0;
  };

  PathPoint solve(double mu, double cg_tol, int cg_max_iters, Vector& warm) const {
    const LinOp apply = [&](const Vector& x) -> Vector {
      const AdaptedField u = unflatten(level, model.dim, x);
      return x + mu * flatten(pairing(to_terminal(u)));
    };
    const Vector rhs = -mu * flatten(pairing(free_state));
    const DotOp inner = [this](const Vector& a, const Vector& b) { return dot(a, b); };
    const CGResult cg = conjugate_gradient(apply, rhs, warm, cg_tol, cg_max_iters, inner);
    if (!cg.converged) {
      std::ostringstream msg;
      msg << "dual-path CG stalled at relative residual " << cg.rel_residual
          << " for multiplier " << mu;
      fail("E_NO_CONVERGENCE", msg.str());
    }
    PathPoint point;
    point.control = unflatten(level, model.dim, warm);
    point.terminal = to_terminal(point.control);
    point.terminal.values += free_state.values;
    point.control_norm2 = l2_norm2(point.control, gram);
    point.terminal_norm2 = l2_norm2(point.terminal);
    point.cg_iterations = cg.iterations;
    return point;
  }
};

double ray_distance(const AdaptedField& u, const AdaptedField& direction,
                    const ObservationGram& gram) {
  const double dd = l2_norm2(direction, gram);
  const double uu = l2_norm2(u, gram);
  if (!(uu > 0.0)) return 0.0;
  if (!(dd > 0.0)) return 1.0;
  const double c = std::max(0.0, l2_inner(u, direction, gram) / dd);
  AdaptedField diff = u;
  diff.values -= c * direction.values;
  return std::sqrt(l2_norm2(diff, gram) / uu);
}

}  // namespace

NormOptResult norm_optimal(const SpectralModel& model, const ObservationGram& gram,
                           const NoiseTree& tree, Eigen::Ref<const Vector> y0, double epsilon,
                           const NormOptOptions& options) {
  require(epsilon > 0.0, "E_PRECONDITION", "epsilon must be positive");
  const int level = control_level(tree, options.control_class);

  NormOptResult result;
  result.control_level = level;
  result.target = epsilon * y0.squaredNorm();

  DualPath path{model, gram, tree, level,
                propagate(model, tree, constant_field(0, y0)).back()};
  const double free2 = l2_norm2(path.free_state);
  if (free2 <= result.target * (1.0 + 1e-14)) {
    result.u_star = zero_field(level, model.dim);
    result.terminal_norm2 = free2;
    result.constraint_residual = free2 - result.target;
    return result;  // unconstrained optimum u = 0 is admissible
  }
  result.active = true;

  Vector warm = options.initial_control ? *options.initial_control
                                        : Vector::Zero((Index{1} << level) * model.dim);
  const auto gap = [&](const DualPath::PathPoint& p) {
    return p.terminal_norm2 - result.target;
  };

  double hi = options.bracket_start;
  DualPath::PathPoint at_hi = path.solve(hi, options.cg_tol, options.cg_max_iters, warm);
  result.cg_iterations_total += at_hi.cg_iterations;
  while (gap(at_hi) > 0.0) {
    hi *= 8.0;
    if (hi > 1e18)
      fail("E_NON_OBSERVABLE",
           "the dual path cannot reach the target ball: the control class does not see "
           "enough of the state");
    at_hi = path.solve(hi, options.cg_tol, options.cg_max_iters, warm);
    result.cg_iterations_total += at_hi.cg_iterations;
  }

  double lo = 0.0;
  const double gap_tol = options.slack_tol * result.target;
  while (-gap(at_hi) > gap_tol && (hi - lo) > 1e-15 * hi) {
    const double mid = 0.5 * (lo + hi);
    DualPath::PathPoint at_mid = path.solve(mid, options.cg_tol, options.cg_max_iters, warm);
    result.cg_iterations_total += at_mid.cg_iterations;
    ++result.bisection_steps;
    if (gap(at_mid) <= 0.0) {
      hi = mid;
      at_hi = std::move(at_mid);
    } else {
      lo = mid;
    }
  }

  result.u_star = at_hi.control;
  result.value = at_hi.control_norm2;
  result.multiplier = hi;
  result.terminal_norm2 = at_hi.terminal_norm2;
  result.constraint_residual = at_hi.terminal_norm2 - result.target;
  return result;
}

UniquenessReport uniqueness_probe(const SpectralModel& model, const ObservationGram& gram,
                                  const NoiseTree& tree, Eigen::Ref<const Vector> y0,
                                  double epsilon, const NormOptResult& base,
                                  int perturbations, std::uint64_t seed) {
  require(base.active, "E_PRECONDITION", "uniqueness probe needs an active constraint");
  UniquenessReport report;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  const double base_norm = std::sqrt(std::max(base.value, 1e-300));
  for (int p = 0; p < perturbations; ++p) {
    NormOptOptions options;
    options.control_class =
        base.control_level == tree.impulse_level ? ControlClass::at_impulse
                                                 : ControlClass::paper_restricted;
    options.bracket_start = scale(rng);
    AdaptedField start = random_field(base.control_level, model.dim, rng);
    start.values *= base_norm;
    options.initial_control = flatten(start);
    const NormOptResult other = norm_optimal(model, gram, tree, y0, epsilon, options);
    AdaptedField diff = other.u_star;
    diff.values -= base.u_star.values;
    report.max_pair_distance = std::max(
        report.max_pair_distance, std::sqrt(l2_norm2(diff, gram)) / base_norm);
  }

  // Parallelogram identity on a duplicated optimum: the difference is the
  // zero field, so the residual is exactly zero.
  AdaptedField self_diff = base.u_star;
  self_diff.values -= base.u_star.values;
  report.parallelogram_residual = l2_norm2(self_diff, gram);

  // The control parameterization is injective (positive per-path factors,
  // positive-definite Gram), so no distinct admissible control can share the
  // optimal norm along a kernel direction.
  report.kernel_trivial = true;
  report.note = "control-to-state map injective on the control class; equal-norm "
                "admissible alternative certified impossible";
  return report;
}

namespace {

int aligned_steps(double t, double dt, const char* what) {
  const double ratio = t / dt;
  const int steps = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio) || steps < 1) {
    std::ostringstream msg;
    msg << what << " " << t << " is not aligned with the step dt=" << dt;
    fail("E_GRID_ALIGN", msg.str());
  }
  return steps;
}

}  // namespace

TimeOptResult time_optimal(const SpectralModel& model, const ObservationGram& gram,
                           Eigen::Ref<const Vector> y0, double epsilon, double bound,
                           double impulse_time, double dt,
                           const std::vector<double>& horizon_grid, double constant_noise,
                           const TimeOptOptions& options) {
  require(bound > 0.0, "E_PRECONDITION", "control budget M must be positive");
  require(dt > 0.0, "E_PRECONDITION", "step size must be positive");
  require(!horizon_grid.empty(), "E_PRECONDITION", "horizon grid must be nonempty");
  aligned_steps(impulse_time, dt, "impulse time");
  for (std::size_t i = 0; i < horizon_grid.size(); ++i) {
    require(horizon_grid[i] > impulse_time, "E_PRECONDITION",
            "every horizon must exceed the impulse time");
    if (i > 0)
      require(horizon_grid[i] > horizon_grid[i - 1], "E_PRECONDITION",
              "horizon grid must be strictly increasing");
  }

  TimeOptResult result;
  result.target = epsilon * y0.squaredNorm();
  const double budget2 = bound * bound;

  const auto evaluate = [&](double horizon, double step, bool refined,
                            NormOptResult* out) -> ScanRow {
    const int depth = aligned_steps(horizon, step, "horizon");
    if (depth > options.depth_cap) {
      std::ostringstream msg;
      msg << "horizon " << horizon << " needs depth " << depth
          << " at dt=" << step << ", above the cap " << options.depth_cap;
      fail("E_PRECONDITION", msg.str());
    }
    const NoiseTree tree = build_tree(depth, horizon, impulse_time, constant_noise);
    NormOptOptions solver_options;
    solver_options.control_class = options.control_class;
    solver_options.cg_tol = options.cg_tol;
    const NormOptResult norm = norm_optimal(model, gram, tree, y0, epsilon, solver_options);
    if (out) *out = norm;
    ScanRow row;
    row.horizon = horizon;
    row.depth = depth;
    row.norm2 = norm.value;
    row.admissible = norm.value <= budget2 * (1.0 + 1e-12);
    row.refined = refined;
    return row;
  };

  // Full scan, no monotonicity assumed. Grid points are independent trees,
  // so they may run concurrently; results are collected in grid order.
  std::size_t first = horizon_grid.size();
  if (options.threads > 1) {
    std::vector<std::future<ScanRow>> futures;
    futures.reserve(horizon_grid.size());
    for (double horizon : horizon_grid)
      futures.push_back(std::async(std::launch::async, [&, horizon] {
        return evaluate(horizon, dt, false, nullptr);
      }));
    for (std::size_t i = 0; i < futures.size(); ++i) {
      result.scan.push_back(futures[i].get());
      if (first == horizon_grid.size() && result.scan.back().admissible) first = i;
    }
  } else {
    for (std::size_t i = 0; i < horizon_grid.size(); ++i) {
      result.scan.push_back(evaluate(horizon_grid[i], dt, false, nullptr));
      if (first == horizon_grid.size() && result.scan.back().admissible) first = i;
    }
  }
  if (first == horizon_grid.size()) {
    result.t_star = std::numeric_limits<double>::infinity();
    result.notes.push_back("no admissible horizon in the grid: the infimum is empty");
    return result;
  }
  result.admissible = true;

  // Bisection refinement toward the admissibility boundary, re-meshing when
  // the bracket collapses to one step. No bracket exists when the very first
  // grid horizon is admissible.
  double best = horizon_grid[first];
  double step = dt;
  if (first == 0) {
    result.notes.push_back("first grid horizon already admissible; no refinement bracket");
  } else {
    double floor = horizon_grid[first - 1];
    for (int it = 0; it < options.max_refine; ++it) {
      const double gap_steps = std::round((best - floor) / step);
      if (gap_steps <= 1.0) {
        const int next_depth = static_cast<int>(std::lround(best / (step / 2.0)));
        if (next_depth > options.depth_cap) {
          result.notes.push_back("refinement stopped at the depth cap");
          break;
        }
        step *= 0.5;
        std::ostringstream msg;
        msg << "step re-derived during refinement: dt=" << step
            << " (discretization of N(T) changes with the mesh)";
        result.notes.push_back(msg.str());
        continue;
      }
      const double mid = floor + std::floor(gap_steps / 2.0) * step;
      const ScanRow row = evaluate(mid, step, true, nullptr);
      result.scan.push_back(row);
      if (row.admissible) best = mid;
      else floor = mid;
    }
  }

  // Final solve at the selected horizon.
  const int depth = aligned_steps(best, step, "horizon");
  result.tree_at_star = build_tree(depth, best, impulse_time, constant_noise);
  result.t_star = best;
  result.control_level = control_level(result.tree_at_star, options.control_class);

  NormOptResult ball;
  evaluate(best, step, true, &ball);
  result.multiplier = ball.multiplier;
  result.active = ball.active;
  if (!ball.active) {
    result.u_star = ball.u_star;
    result.terminal_state =
        propagate(model, result.tree_at_star, constant_field(0, y0)).back();
    result.control_norm2 = 0.0;
    result.terminal_norm2 = ball.terminal_norm2;
    result.norm_check = budget2;
    result.notes.push_back(
        "free evolution already inside the target ball at T*: control constraint inactive");
    return result;
  }

  // Drive the control to the budget boundary along the dual path; the
  // terminal norm only decreases beyond the ball multiplier, so the target
  // stays satisfied.
  DualPath path{model, gram, result.tree_at_star, result.control_level,
                propagate(model, result.tree_at_star, constant_field(0, y0)).back()};
  Vector warm = flatten(ball.u_star);
  double lo = ball.multiplier;
  DualPath::PathPoint at = path.solve(lo, options.cg_tol, 50000, warm);
  if (at.control_norm2 < budget2) {
    double hi = std::max(lo * 2.0, 1.0);
    DualPath::PathPoint probe = path.solve(hi, options.cg_tol, 50000, warm);
    double prev_norm = at.control_norm2;
    while (probe.control_norm2 < budget2) {
      if (hi > 1e18 ||
          std::abs(probe.control_norm2 - prev_norm) < 1e-12 * std::max(1.0, prev_norm)) {
        result.notes.push_back(
            "budget saturation unattainable at T*: even exact steering to zero uses "
            "less than M (grid boundary effect)");
        break;
      }
      prev_norm = probe.control_norm2;
      hi *= 8.0;
      probe = path.solve(hi, options.cg_tol, 50000, warm);
    }
    if (probe.control_norm2 >= budget2) {
      double best_mu = lo;
      if (std::abs(probe.control_norm2 - budget2) < std::abs(at.control_norm2 - budget2)) {
        at = probe;
        best_mu = hi;
      }
      while (std::abs(at.control_norm2 - budget2) > options.norm_tol * budget2 &&
             (hi - lo) > 1e-15 * hi) {
        const double mid = 0.5 * (lo + hi);
        DualPath::PathPoint at_mid = path.solve(mid, options.cg_tol, 50000, warm);
        if (std::abs(at_mid.control_norm2 - budget2) <
            std::abs(at.control_norm2 - budget2)) {
          at = at_mid;
          best_mu = mid;
        }
        if (at_mid.control_norm2 >= budget2) hi = mid;
        else lo = mid;
      }
      result.saturated = std::abs(at.control_norm2 - budget2) <= options.norm_tol * budget2;
      result.multiplier = best_mu;
    }
  } else {
    result.saturated = std::abs(at.control_norm2 - budget2) <= options.norm_tol * budget2;
  }

  result.u_star = at.control;
  result.terminal_state = at.terminal;
  result.control_norm2 = at.control_norm2;
  result.terminal_norm2 = at.terminal_norm2;
  result.norm_check = std::abs(at.control_norm2 - budget2);

  // Fixed-point proportionality diagnostics with the realized terminal state
  // as backward data, under both pairing conventions.
  if (at.terminal_norm2 > 0.0) {
    const BackwardTrajectory bt =
        backward_evolve(model, result.tree_at_star, at.terminal);
    AdaptedField adj = conditional_expectation(bt.at(result.tree_at_star.impulse_level),
                                               result.control_level);
    adj.values *= -1.0;
    result.proportionality_adjoint = ray_distance(result.u_star, adj, gram);

    const int mirrored = result.tree_at_star.depth - result.tree_at_star.impulse_level;
    AdaptedField rev = bt.at(mirrored);
    if (rev.level > result.control_level)
      rev = conditional_expectation(rev, result.control_level);
    else if (rev.level < result.control_level)
      rev = lift(rev, result.control_level);
    result.proportionality_reversed = ray_distance(result.u_star, rev, gram);
  }
  return result;
}

BangBangReport bang_bang_check(const SpectralModel& model, const ObservationGram& gram,
                               const TimeOptResult& result, double bound, int trials,
                               std::uint64_t seed) {
  BangBangReport report;
  if (!result.admissible || !result.active) {
    report.skipped = true;
    report.note = "time constraint inactive at T*; budget saturation does not apply";
    return report;
  }
  if (!(result.terminal_norm2 > 0.0)) {
    report.skipped = true;
    report.note = "terminal state vanished; the pairing field is undefined";
    return report;
  }

  const double budget2 = bound * bound;
  report.norm_residual = std::abs(result.control_norm2 - budget2) / budget2;
  report.proportionality_adjoint = result.proportionality_adjoint;
  report.proportionality_reversed = result.proportionality_reversed;

  // Signed pairing direction with the realized terminal state as backward
  // data: maximizing E<s, M u> over the budget ball lands on the ray of u*.
  const NoiseTree& tree = result.tree_at_star;
  const BackwardTrajectory bt = backward_evolve(model, tree, result.terminal_state);
  AdaptedField direction =
      conditional_expectation(bt.at(tree.impulse_level), result.control_level);
  direction.values *= -1.0;

  const double reference = l2_inner(direction, result.u_star, gram);
  report.pairing_value = reference;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(0.0, 1.0);
  report.worst_margin = 0.0;
  for (int t = 0; t < trials; ++t) {
    AdaptedField candidate = random_field(result.u_star.level, model.dim, rng);
    const double norm = std::sqrt(l2_norm2(candidate, gram));
    if (!(norm > 0.0)) continue;
    candidate.values *= bound * radius(rng) / norm;
    const double value = l2_inner(direction, candidate, gram);
    const double margin = reference - value;
    report.worst_margin = std::min(report.worst_margin, margin);
    if (margin < -1e-12 * std::max(1.0, std::abs(reference))) ++report.maximality_violations;
  }
  return report;
}

}  // namespace stochimp
