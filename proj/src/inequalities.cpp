// SPDX-License-Identifier: Apache-2.0
#include "stochimp/inequalities.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace stochimp {

SpectralWindow spectral_window(const SpectralModel& model, const ObservationGram& gram,
                               double cutoff) {
  require(cutoff >= model.eigenvalues[0], "E_PRECONDITION",
          "spectral window is empty below the first eigenvalue");
  std::vector<Index> window;
  for (Index j = 0; j < model.dim; ++j)
    if (model.eigenvalues[j] <= cutoff) window.push_back(j);

  const Index w = static_cast<Index>(window.size());
  Matrix sub(w, w);
  for (Index a = 0; a < w; ++a)
    for (Index b = 0; b < w; ++b) sub(a, b) = gram.matrix(window[a], window[b]);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(sub);
  const double sigma = solver.eigenvalues()(0);
  // Below ~64 eps relative to the window's top eigenvalue the computed
  // smallest eigenvalue is dominated by rounding of the Gram entries; the
  // constant would be meaningless, so refuse the window.
  const double trust = 64.0 * std::numeric_limits<double>::epsilon() *
                       solver.eigenvalues()(w - 1);
  if (!(sigma > trust))
    fail("E_NON_OBSERVABLE",
         "the window Gram smallest eigenvalue is below double-precision resolution "
         "for this region; shrink the window or enlarge the region");

  SpectralWindow out;
  out.cutoff = cutoff;
  out.sigma_min = sigma;
  out.constant = 1.0 / std::sqrt(sigma);
  out.extremal = Vector::Zero(model.dim);
  for (Index a = 0; a < w; ++a) out.extremal[window[a]] = solver.eigenvectors()(a, 0);
  return out;
}

double spectral_constant(const SpectralModel& model, const ObservationGram& gram,
                         double cutoff) {
  return spectral_window(model, gram, cutoff).constant;
}

SpectralIneqReport spectral_sweep(const SpectralModel& model, const ObservationGram& gram,
                                  const std::vector<double>& cutoffs) {
  require(cutoffs.size() >= 2, "E_PRECONDITION", "sweep needs at least two cutoffs");
  SpectralIneqReport report;
  report.cutoffs = cutoffs;
  std::vector<double> log_c, sqrt_x, lin_x;
  double num = 0.0, den = 0.0;
  for (double cutoff : cutoffs) {
    const double c = spectral_constant(model, gram, cutoff);
    report.constants.push_back(c);
    const double y = std::log(c);
    const double shape = 1.0 + std::pow(cutoff, report.gamma);
    num += y * shape;
    den += shape * shape;
    log_c.push_back(y);
    sqrt_x.push_back(std::sqrt(cutoff));
    lin_x.push_back(cutoff);
  }
  report.fitted_N = den > 0.0 ? num / den : 0.0;
  report.fit_sqrt = fit_affine(sqrt_x, log_c);
  report.fit_linear = fit_affine(lin_x, log_c);
  return report;
}

DecayReport decay_check(const SpectralModel& model, const NoiseTree& tree, double cutoff,
                        int trials, std::uint64_t seed) {
  require(trials >= 1, "E_PRECONDITION", "decay check needs at least one trial");
  std::vector<Index> high;
  for (Index j = 0; j < model.dim; ++j)
    if (model.eigenvalues[j] > cutoff) high.push_back(j);

  DecayReport report;
  report.trials = trials;
  report.max_violation = -1.0;
  if (high.empty()) return report;  // vacuous: no modes above the cutoff

  // Growth factors of the remaining steps, prod_{m=k}^{K-1} (1 + F_m^2 dt).
  Vector growth = Vector::Ones(tree.depth + 1);
  for (int k = tree.depth - 1; k >= 0; --k) {
    const double f = tree.noise[k];
    growth[k] = growth[k + 1] * (1.0 + f * f * tree.dt);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    AdaptedField eta = zero_field(tree.depth, model.dim);
    for (Index n = 0; n < eta.num_nodes(); ++n)
      for (Index j : high) eta.values(n, j) = unit(rng);
    const double eta2 = l2_norm2(eta);
    if (eta2 == 0.0) continue;
    const BackwardTrajectory bt = backward_evolve(model, tree, eta);
    for (int k = 0; k <= tree.depth; ++k) {
      const double remaining = tree.horizon - tree.time_at(k);
      const double bound = growth[k] * std::exp(-2.0 * cutoff * remaining) * eta2;
      const double ratio = l2_norm2(bt.at(k)) / bound;
      report.max_violation = std::max(report.max_violation, ratio - 1.0);
      ++report.levels_checked;
    }
  }
  return report;
}

namespace {

// Everything the observability quotient needs factors through the costate at
// the deepest observed level; both quadratic forms are assembled (or applied)
// on that fiber.
struct ObsFiber {
  int top = 0;
  Index modes = 0;
  Index size = 0;
  std::vector<int> levels;
};

Vector obs_numerator_apply(const SpectralModel& model, const NoiseTree& tree,
                           const ObsFiber& fiber, const Vector& v) {
  const AdaptedField w = unflatten(fiber.top, fiber.modes, v);
  const Vector z0 = costate_flow(model, tree, w, 0).front().values.row(0);
  return flatten(costate_flow_transpose(model, tree, constant_field(0, z0), fiber.top));
}

Vector obs_denominator_apply(const SpectralModel& model, const ObservationGram& gram,
                             const NoiseTree& tree, const ObsFiber& fiber, const Vector& v) {
  const AdaptedField w = unflatten(fiber.top, fiber.modes, v);
  const std::vector<AdaptedField> flow = costate_flow(model, tree, w, fiber.levels.front());
  Vector out = Vector::Zero(v.size());
  for (int level : fiber.levels) {
    AdaptedField zk = flow[level - fiber.levels.front()];
    zk.values = zk.values * gram.matrix;
    zk.values *= tree.dt * std::ldexp(1.0, -level);
    AdaptedField back = costate_flow_transpose(model, tree, zk, fiber.top);
    out += flatten(back);
  }
  return out;
}

}  // namespace

double observability_constant(const SpectralModel& model, const ObservationGram& gram,
                              const NoiseTree& tree, const std::vector<int>& levels_in,
                              const ObservabilityOptions& options) {
  require(!levels_in.empty(), "E_PRECONDITION", "the observation level set must be nonempty");
  std::vector<int> levels = levels_in;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  require(levels.front() >= 0 && levels.back() <= tree.depth, "E_PRECONDITION",
          "observation levels must lie in [0, K]");

  ObsFiber fiber;
  fiber.top = levels.back();
  fiber.modes = model.dim;
  fiber.size = (Index{1} << fiber.top) * fiber.modes;
  fiber.levels = levels;

  if (!options.force_power && fiber.size <= options.dense_limit) {
    Matrix numerator(fiber.size, fiber.size), denominator(fiber.size, fiber.size);
    for (Index i = 0; i < fiber.size; ++i) {
      Vector unit = Vector::Zero(fiber.size);
      unit[i] = 1.0;
      numerator.col(i) = obs_numerator_apply(model, tree, fiber, unit);
      denominator.col(i) = obs_denominator_apply(model, gram, tree, fiber, unit);
    }
    numerator = 0.5 * (numerator + numerator.transpose());
    denominator = 0.5 * (denominator + denominator.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(numerator, denominator);
    require(solver.info() == Eigen::Success, "E_NON_OBSERVABLE",
            "observation form is numerically singular on the fiber");
    return std::max(0.0, solver.eigenvalues().maxCoeff());
  }

  const LinOp apply_a = [&](const Vector& v) { return obs_numerator_apply(model, tree, fiber, v); };
  const LinOp apply_b = [&](const Vector& v) {
    return obs_denominator_apply(model, gram, tree, fiber, v);
  };
  const LinOp solve_b = [&](const Vector& rhs) {
    Vector x = Vector::Zero(rhs.size());
    const CGResult cg = conjugate_gradient(apply_b, rhs, x, 1e-13, 50000);
    require(cg.converged || cg.rel_residual < 1e-8, "E_NON_OBSERVABLE",
            "inner solve on the observation form failed to converge");
    return x;
  };
  const PowerResult pr =
      power_iteration_pencil(apply_a, solve_b, apply_b, fiber.size, options.power_tol,
                             options.power_max_iters, options.power_restarts, options.seed);
  return std::max(0.0, pr.value);
}

InterpolationReport interpolation_check(const SpectralModel& model, const ObservationGram& gram,
                                        const NoiseTree& tree, int t_level, double theta,
                                        int trials, std::uint64_t seed) {
  require(theta > 0.0 && theta < 1.0, "E_PRECONDITION", "theta must lie in (0,1)");
  require(t_level >= 0 && t_level < tree.depth, "E_PRECONDITION",
          "interpolation level must be below the terminal level");
  require(trials >= 1, "E_PRECONDITION", "interpolation check needs at least one trial");

  InterpolationReport report;
  report.t_level = t_level;
  report.theta = theta;
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const AdaptedField eta = random_field(tree.depth, model.dim, rng);
    const BackwardTrajectory bt = backward_evolve(model, tree, eta);
    const AdaptedField& zt = bt.at(t_level);
    const double lhs = l2_norm2(zt);
    const double observed = l2_norm2(zt, gram);
    const double eta2 = l2_norm2(eta);
    require(observed > 0.0 && eta2 > 0.0, "E_NON_OBSERVABLE",
            "interpolation trial degenerated to a zero observation");
    const double constant =
        lhs / (std::pow(observed, 1.0 - theta) * std::pow(eta2, theta));
    report.constants.push_back(constant);
    report.max_constant = std::max(report.max_constant, constant);
  }
  return report;
}

LinearFit interpolation_growth_fit(const SpectralModel& model, const ObservationGram& gram,
                                   const NoiseTree& tree, double theta, int trials,
                                   std::uint64_t seed) {
  std::vector<double> xs, ys;
  for (int level = 0; level < tree.depth; ++level) {
    const InterpolationReport rep =
        interpolation_check(model, gram, tree, level, theta, trials, seed + level);
    xs.push_back(1.0 / (tree.horizon - tree.time_at(level)));
    ys.push_back(std::log(rep.max_constant));
  }
  return fit_affine(xs, ys);
}

double po1_constant(const SpectralModel& model, const ObservationGram& gram,
                    const NoiseTree& tree, int t_level, double epsilon) {
  require(t_level >= 0 && t_level < tree.depth, "E_PRECONDITION",
          "level must be below the terminal level");
  require(epsilon > 0.0, "E_PRECONDITION", "epsilon must be positive");

  // Fiber covariance diagonal per mode for the flow from the terminal level
  // down to t_level, and the min-preimage ridge. Node-uniform, so one J x J
  // least-scale problem decides the constant.
  double rho = 1.0;
  for (int k = t_level; k < tree.depth; ++k) {
    const double f = tree.noise[k];
    rho *= 0.5 * (1.0 + f * f * tree.dt);
  }
  const double remaining = tree.horizon - tree.time_at(t_level);
  const Vector sigma =
      rho * (-2.0 * remaining * model.eigenvalues.array()).exp().matrix();
  const Vector sqrt_sigma = sigma.cwiseSqrt();

  const double ridge = epsilon * std::ldexp(1.0, t_level - tree.depth);
  const Matrix denominator =
      sqrt_sigma.asDiagonal() * gram.matrix * sqrt_sigma.asDiagonal();
  Matrix residual = Matrix::Zero(model.dim, model.dim);
  residual.diagonal() = (ridge - sigma.array()).matrix();

  const ScaleBisectResult bis = min_psd_scale(denominator, residual);
  require(bis.feasible, "E_NON_OBSERVABLE",
          "no finite constant certifies the bound at this level");
  return bis.value;
}

Po1SweepReport po1_sweep(const SpectralModel& model, const ObservationGram& gram,
                         const NoiseTree& tree, int t_level,
                         const std::vector<double>& epsilons) {
  Po1SweepReport report;
  std::vector<double> xs, ys;
  for (double eps : epsilons) {
    const double c = po1_constant(model, gram, tree, t_level, eps);
    report.epsilons.push_back(eps);
    report.constants.push_back(c);
    if (c > 0.0) {
      xs.push_back(std::sqrt(std::log(std::exp(1.0) + 1.0 / eps)));
      ys.push_back(std::log(c));
    }
  }
  if (xs.size() >= 2) {
    report.fit = fit_affine(xs, ys);
    const double remaining = tree.horizon - tree.time_at(t_level);
    report.fitted_c3 = report.fit.slope * report.fit.slope * remaining;
  }
  return report;
}

}  // namespace stochimp
