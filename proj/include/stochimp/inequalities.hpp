// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "stochimp/dynamics.hpp"
#include "stochimp/solvers.hpp"

namespace stochimp {

/// Smallest-singular-value window of the Gram matrix at a spectral cutoff.
struct SpectralWindow {
  double cutoff = 0.0;
  double constant = 0.0;   ///< tight C with ||f|| <= C ||B* f|| on the window
  double sigma_min = 0.0;
  Vector extremal;         ///< attaining coefficient vector, zero off-window
};

SpectralWindow spectral_window(const SpectralModel& model, const ObservationGram& gram,
                               double cutoff);
double spectral_constant(const SpectralModel& model, const ObservationGram& gram,
                         double cutoff);

/// Sweep of the window constants with log-linear fits used for the
/// growth-exponent diagnostics (sqrt-of-cutoff model against linear model).
struct SpectralIneqReport {
  std::vector<double> cutoffs;
  std::vector<double> constants;
  double fitted_N = 0.0;  ///< one-parameter fit of ln C on (1 + cutoff^gamma)
  double gamma = 0.5;
  LinearFit fit_sqrt;     ///< ln C ~ a + b sqrt(cutoff)
  LinearFit fit_linear;   ///< ln C ~ a + b cutoff
};

SpectralIneqReport spectral_sweep(const SpectralModel& model, const ObservationGram& gram,
                                  const std::vector<double>& cutoffs);

/// Fuzzed check of the high-frequency decay bound: for terminal data
/// supported on modes above the cutoff,
///   E||z_k||^2 <= prod_{m>=k} (1 + F_m^2 dt) * e^{-2 cutoff (T - t_k)} * E||eta||^2.
/// Returns the worst ratio minus one (negative when the bound holds strictly).
struct DecayReport {
  double max_violation = 0.0;
  int trials = 0;
  int levels_checked = 0;
};

DecayReport decay_check(const SpectralModel& model, const NoiseTree& tree, double cutoff,
                        int trials, std::uint64_t seed);

struct ObservabilityOptions {
  Index dense_limit = 1024;
  bool force_power = false;
  double power_tol = 1e-10;
  int power_restarts = 3;
  int power_max_iters = 20000;
  std::uint64_t seed = 2718281;
};

/// Tight constant C of the discrete observability inequality
///   E||z_0(eta)||^2 <= C sum_{k in levels} dt E<z_k, M z_k>,
/// the largest generalized Rayleigh quotient of the two forms.
double observability_constant(const SpectralModel& model, const ObservationGram& gram,
                              const NoiseTree& tree, const std::vector<int>& levels,
                              const ObservabilityOptions& options = {});

/// Per-trial interpolation constants: the smallest factor closing
///   E||z_t||^2 <= c (E<z_t, M z_t>)^{1-theta} (E||eta||^2)^theta.
struct InterpolationReport {
  int t_level = 0;
  double theta = 0.0;
  double max_constant = 0.0;
  std::vector<double> constants;
};

InterpolationReport interpolation_check(const SpectralModel& model, const ObservationGram& gram,
                                        const NoiseTree& tree, int t_level, double theta,
                                        int trials, std::uint64_t seed);

/// Fit of ln(max interpolation constant) against 1/(T - t) over a level
/// sweep; the slope is the growth diagnostic for gamma = 1/2.
LinearFit interpolation_growth_fit(const SpectralModel& model, const ObservationGram& gram,
                                   const NoiseTree& tree, double theta, int trials,
                                   std::uint64_t seed);

/// Smallest C with E||z_t||^2 <= C E<z_t, M z_t> + eps E||eta||^2 over all
/// terminal data. Node-uniformity collapses the search to one J x J
/// least-psd-scale problem per call.
double po1_constant(const SpectralModel& model, const ObservationGram& gram,
                    const NoiseTree& tree, int t_level, double epsilon);

struct Po1SweepReport {
  std::vector<double> epsilons;
  std::vector<double> constants;
  double fitted_c3 = 0.0;  ///< from ln C ~ a + sqrt(c3/(T-t)) sqrt(ln(e+1/eps))
  LinearFit fit;
};

Po1SweepReport po1_sweep(const SpectralModel& model, const ObservationGram& gram,
                         const NoiseTree& tree, int t_level,
                         const std::vector<double>& epsilons);

}  // namespace stochimp
