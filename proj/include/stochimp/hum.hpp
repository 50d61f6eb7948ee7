// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "stochimp/dynamics.hpp"
#include "stochimp/solvers.hpp"

namespace stochimp {

/// Variational synthesis problem: choose terminal costate data eta minimizing
///   J(eta) = (l/2) E<p, M p> + (eps/2) E||eta||^2 - E<y0, z_0(eta)>
/// where p is the pairing field of the backward solution under the problem's
/// conventions. The minimizer yields an impulse control steering the terminal
/// state onto eps * eta_star (exactly, under the adjoint convention).
struct HUMProblem {
  SpectralModel model;
  ObservationGram gram;
  NoiseTree tree;
  Vector y0;
  double epsilon = 1e-2;
  std::optional<double> weight;  ///< l; resolved through min_weight when absent
  ControlClass control_class = ControlClass::at_impulse;
  Pairing convention = Pairing::adjoint;
  double cg_tol = 1e-10;
  int cg_max_iters = 20000;

  int control_level() const;
  void validate() const;
};

struct CGInfo {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

double eval_J(const HUMProblem& problem, const AdaptedField& eta, double weight);

/// Gradient of J with respect to the node-probability inner product, computed
/// with one backward and two forward sweeps. Central finite differences of
/// eval_J reproduce its directional derivatives to rounding accuracy.
AdaptedField grad_J(const HUMProblem& problem, const AdaptedField& eta, double weight);

/// Minimizes J by conjugate gradients on the normal equations
/// (l*Lambda + eps*I) eta = y(T; y0, 0), with Lambda the observation Gramian
/// implied by grad_J. Throws E_NO_CONVERGENCE when the iteration budget is
/// exhausted (the final residual is reported in the message).
AdaptedField minimize_J(const HUMProblem& problem, double weight, CGInfo* info = nullptr,
                        const AdaptedField* start = nullptr);

struct MinWeightOptions {
  enum class Method { bisect, dense_pencil, power };
  Method method = Method::bisect;
  Index dense_limit = 1024;   ///< largest impulse-level fiber handled densely
  double rel_tol = 1e-13;
  double power_tol = 1e-10;
  int power_restarts = 3;
  int power_max_iters = 20000;
  std::uint64_t seed = 12345;
};

struct MinWeightResult {
  double value = 0.0;
  bool feasible = true;
  std::string note;
};

/// Smallest weight l such that, for every terminal datum eta,
///   E||z_0(eta)||^2 <= l E<p(eta), M p(eta)> + eps E||eta||^2.
/// The search is reduced to the impulse-level fiber (the costate at the
/// impulse level determines both z_0 and the pairing field, and the cheapest
/// preimage norm is available in closed form), then solved as a least
/// positive-semidefinite scaling problem. Returns 0 when eps alone certifies
/// the bound; feasible=false when no finite weight works in the restricted
/// pairing (the deficiency sits in the pairing kernel).
MinWeightResult min_weight(const HUMProblem& problem, const MinWeightOptions& options = {});

/// Synthesis certificate. All norms are taken under the node-probability
/// expectation; control norms pair through the Gram matrix.
struct HUMCertificate {
  AdaptedField eta_star;
  AdaptedField control;
  int control_level = 0;
  double weight = 0.0;       ///< l actually used
  double weight_min = 0.0;   ///< smallest certifying l (NaN when not computed)
  double initial_norm2 = 0.0;
  double eta_norm2 = 0.0;
  double terminal_norm2 = 0.0;
  double control_norm2 = 0.0;
  double pairing_norm2 = 0.0;  ///< E<p, M p> at the minimizer
  double slack = 0.0;          ///< E||y0||^2 - (1/l)E||u||^2 - (1/eps)E||y(T)||^2
  double steering_residual = 0.0;  ///< relative norm of y(T) - eps*eta_star
  double chain_residual = 0.0;     ///< relative defect of the certificate identity
  CGInfo cg;
  Pairing convention = Pairing::adjoint;
  ControlClass control_class = ControlClass::at_impulse;
};

/// Runs the full synthesis: resolve the weight, minimize J, build the control
/// u = -l * p(eta_star) (sign flipped under the time-reversed convention),
/// simulate, and assemble the certificate.
HUMCertificate synthesize(const HUMProblem& problem);

}  // namespace stochimp
