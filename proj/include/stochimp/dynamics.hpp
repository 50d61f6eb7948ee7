// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stochimp/spectral.hpp"
#include "stochimp/tree.hpp"
#include "stochimp/types.hpp"

namespace stochimp {

/// Forward impulse-controlled evolution. One step from level k to k+1 maps a
/// node value y to e^{-lambda dt} (1 +- F_k sqrt(dt)) y on the two branches;
/// immediately after stepping into the impulse level the state jumps by
/// gram.matrix * u per node (control lifted to the impulse level first).
///
/// With no control the terminal state is exactly the semigroup decay of y0
/// times the per-path discrete stochastic exponential.
struct ForwardTrajectory {
  std::vector<AdaptedField> states;  ///< levels 0..K
  int control_level = -1;            ///< -1 when no impulse was applied
  std::optional<AdaptedField> control;

  const AdaptedField& terminal() const { return states.back(); }
};

/// Backward costate evolution. One step from level k+1 down to k averages the
/// children with the signed weights (1 +- F_k sqrt(dt))/2 and applies the
/// semigroup factor; this is the exact adjoint of the forward step under the
/// node-probability pairing, so E<y_k, z_k> is conserved on uncontrolled
/// steps. A deterministic terminal condition propagates as pure semigroup
/// decay with zero martingale integrand.
struct BackwardTrajectory {
  std::vector<AdaptedField> costates;  ///< levels 0..K, costates[K] = terminal

  Vector initial() const { return costates.front().values.row(0).transpose(); }
  const AdaptedField& at(int level) const { return costates.at(level); }
};

/// Runs the controlled forward dynamics from y0. The control, when present,
/// must live at a level not past the impulse level (it is replicated forward
/// to the impulse level before injection); anything later would make the
/// post-impulse state depend on information not yet revealed.
ForwardTrajectory forward_evolve(const SpectralModel& model, const ObservationGram& gram,
                                 const NoiseTree& tree, Eigen::Ref<const Vector> y0,
                                 const std::optional<AdaptedField>& control = {});

/// Free forward flow started from an arbitrary level; returns the states at
/// levels from.level..K.
std::vector<AdaptedField> propagate(const SpectralModel& model, const NoiseTree& tree,
                                    AdaptedField from);

BackwardTrajectory backward_evolve(const SpectralModel& model, const NoiseTree& tree,
                                   const AdaptedField& terminal);

/// Costate flow restricted to levels [floor_level, terminal.level].
std::vector<AdaptedField> costate_flow(const SpectralModel& model, const NoiseTree& tree,
                                       const AdaptedField& terminal, int floor_level);

/// Transpose (plain coordinates) of the map terminal -> costate at the floor
/// level; sends a level-lo field to a level-hi field.
AdaptedField costate_flow_transpose(const SpectralModel& model, const NoiseTree& tree,
                                    const AdaptedField& from, int to_level);

/// Which duality pairing the synthesis uses.
///  - adjoint: pair the control with the costate at the impulse level,
///    conditioned down to the control level. This is the exact discrete
///    adjoint identity and carries the machine-precision contract.
///  - paper_reversed: pair with the costate at the mirrored time T - T~ and
///    flip the sign, the time-reversed variant. Computed for comparison; no
///    exactness contract.
enum class Pairing { adjoint, paper_reversed };

/// Measurability class of the control: at the impulse level (natural), or
/// restricted to the mirrored level K - impulse_level (requires T <= 2 T~).
enum class ControlClass { at_impulse, paper_restricted };

const char* to_string(Pairing p);
const char* to_string(ControlClass c);
Pairing pairing_from_string(const std::string& s);
ControlClass control_class_from_string(const std::string& s);

/// Level at which controls of the given class live.
int control_level(const NoiseTree& tree, ControlClass cls);

/// Pairing field of a backward trajectory under the given conventions,
/// conditioned or time-shifted as required. Under `adjoint` with control
/// level k_u this is E[z_{k~} | level k_u].
AdaptedField pairing_field(const NoiseTree& tree, const BackwardTrajectory& backward,
                           ControlClass cls, Pairing convention);

/// Stochastic duality identity between the controlled forward state and a
/// backward costate. Under the adjoint convention,
///   E<y(T), eta> - E<y0, z_0> = E<u, M z^>,   z^ = E[z_{k~} | level of u],
/// and the relative residual is within machine precision for all valid
/// inputs. Under paper_reversed the report evaluates the sign- and
/// time-flipped pairing instead (diagnostic only).
struct DualityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;      ///< |lhs - rhs| / scale
  double state_term = 0.0;    ///< E<y0, z_0>
  double terminal_term = 0.0; ///< E<y(T), eta>
  double control_term = 0.0;  ///< control pairing
  Pairing convention = Pairing::adjoint;
};

DualityReport duality_report(const SpectralModel& model, const ObservationGram& gram,
                             const NoiseTree& tree, Eigen::Ref<const Vector> y0,
                             const AdaptedField& control, const AdaptedField& terminal,
                             Pairing convention = Pairing::adjoint);

double duality_residual(const SpectralModel& model, const ObservationGram& gram,
                        const NoiseTree& tree, Eigen::Ref<const Vector> y0,
                        const AdaptedField& control, const AdaptedField& terminal,
                        Pairing convention = Pairing::adjoint);

/// Diagnostic extraction of the martingale integrand at a level:
/// Z_k = E[dW_k z_{k+1} | node] / dt, the child difference scaled by the
/// step. Not contract-bearing.
AdaptedField martingale_integrand(const NoiseTree& tree, const BackwardTrajectory& backward,
                                  int level);

}  // namespace stochimp
