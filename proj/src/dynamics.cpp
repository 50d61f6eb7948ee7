// SPDX-License-Identifier: Apache-2.0
#include "stochimp/dynamics.hpp"

#include <cmath>
#include <sstream>

namespace stochimp {

namespace {

void check_dims(const SpectralModel& model, const ObservationGram& gram,
                const NoiseTree& tree) {
  require(gram.matrix.rows() == model.dim, "E_PRECONDITION",
          "Gram matrix dimension does not match the model");
  require(tree.depth >= 2, "E_PRECONDITION", "tree is not initialized");
}

// One forward step: children pick up the semigroup factor and the signed
// noise factor of their branch.
Matrix forward_step(const Vector& decay, double bump, const Matrix& v) {
  Matrix fine(2 * v.rows(), v.cols());
  for (Index n = 0; n < v.rows(); ++n) {
    const auto damped = (v.row(n).array() * decay.transpose().array()).matrix();
    fine.row(2 * n) = (1.0 + bump) * damped;
    fine.row(2 * n + 1) = (1.0 - bump) * damped;
  }
  return fine;
}

// One backward step: weighted children average, then the semigroup factor.
Matrix backward_step(const Vector& decay, double bump, const Matrix& v) {
  const double up = 0.5 * (1.0 + bump);
  const double down = 0.5 * (1.0 - bump);
  Matrix coarse(v.rows() / 2, v.cols());
  for (Index n = 0; n < coarse.rows(); ++n) {
    coarse.row(n) =
        ((up * v.row(2 * n) + down * v.row(2 * n + 1)).array() * decay.transpose().array())
            .matrix();
  }
  return coarse;
}

}  // namespace

std::vector<AdaptedField> propagate(const SpectralModel& model, const NoiseTree& tree,
                                    AdaptedField from) {
  require(from.num_modes() == model.dim, "E_PRECONDITION",
          "field modes must match the truncation order");
  require(from.level >= 0 && from.level <= tree.depth, "E_PRECONDITION",
          "start level out of range");
  const Vector decay = semigroup_factors(model, tree.dt);
  std::vector<AdaptedField> states;
  states.reserve(tree.depth - from.level + 1);
  states.push_back(std::move(from));
  for (int k = states.front().level; k < tree.depth; ++k) {
    const double bump = tree.noise[k] * tree.sqrt_dt;
    states.push_back(AdaptedField{k + 1, forward_step(decay, bump, states.back().values)});
  }
  return states;
}

ForwardTrajectory forward_evolve(const SpectralModel& model, const ObservationGram& gram,
                                 const NoiseTree& tree, Eigen::Ref<const Vector> y0,
                                 const std::optional<AdaptedField>& control) {
  check_dims(model, gram, tree);
  require(y0.size() == model.dim, "E_PRECONDITION",
          "initial state length does not match the truncation order");
  require(y0.allFinite(), "E_PRECONDITION", "initial state must be finite");

  if (control) {
    require(control->num_modes() == model.dim, "E_PRECONDITION",
            "control modes must match the truncation order");
    if (control->level > tree.impulse_level) {
      std::ostringstream msg;
      msg << "control at level " << control->level << " is measurable after the impulse level "
          << tree.impulse_level << "; the impulse state would not be adapted";
      fail("E_PRECONDITION", msg.str());
    }
  }

  const Vector decay = semigroup_factors(model, tree.dt);
  ForwardTrajectory traj;
  traj.states.reserve(tree.depth + 1);
  traj.states.push_back(constant_field(0, y0));
  for (int k = 0; k < tree.depth; ++k) {
    const double bump = tree.noise[k] * tree.sqrt_dt;
    traj.states.push_back(
        AdaptedField{k + 1, forward_step(decay, bump, traj.states.back().values)});
    if (k + 1 == tree.impulse_level && control) {
      const AdaptedField lifted = lift(*control, tree.impulse_level);
      traj.states.back().values.noalias() += lifted.values * gram.matrix;
    }
  }
  if (control) {
    traj.control_level = control->level;
    traj.control = *control;
  }
  return traj;
}

std::vector<AdaptedField> costate_flow(const SpectralModel& model, const NoiseTree& tree,
                                       const AdaptedField& terminal, int floor_level) {
  require(terminal.num_modes() == model.dim, "E_PRECONDITION",
          "terminal field modes must match the truncation order");
  require(floor_level >= 0 && floor_level <= terminal.level, "E_PRECONDITION",
          "floor level out of range");
  require(terminal.level <= tree.depth, "E_PRECONDITION", "terminal level out of range");
  const Vector decay = semigroup_factors(model, tree.dt);
  std::vector<AdaptedField> costates(terminal.level - floor_level + 1);
  costates.back() = terminal;
  for (int k = terminal.level; k > floor_level; --k) {
    const double bump = tree.noise[k - 1] * tree.sqrt_dt;
    costates[k - 1 - floor_level] = AdaptedField{
        k - 1, backward_step(decay, bump, costates[k - floor_level].values)};
  }
  return costates;
}

BackwardTrajectory backward_evolve(const SpectralModel& model, const NoiseTree& tree,
                                   const AdaptedField& terminal) {
  require(terminal.level == tree.depth, "E_PRECONDITION",
          "terminal data must live on the deepest level");
  return BackwardTrajectory{costate_flow(model, tree, terminal, 0)};
}

AdaptedField costate_flow_transpose(const SpectralModel& model, const NoiseTree& tree,
                                    const AdaptedField& from, int to_level) {
  require(to_level >= from.level && to_level <= tree.depth, "E_PRECONDITION",
          "transpose flow target level out of range");
  const Vector decay = semigroup_factors(model, tree.dt);
  Matrix v = from.values;
  for (int k = from.level; k < to_level; ++k) {
    const double bump = tree.noise[k] * tree.sqrt_dt;
    const double up = 0.5 * (1.0 + bump);
    const double down = 0.5 * (1.0 - bump);
    Matrix fine(2 * v.rows(), v.cols());
    for (Index n = 0; n < v.rows(); ++n) {
      const auto damped = (v.row(n).array() * decay.transpose().array()).matrix();
      fine.row(2 * n) = up * damped;
      fine.row(2 * n + 1) = down * damped;
    }
    v.swap(fine);
  }
  return AdaptedField{to_level, std::move(v)};
}

const char* to_string(Pairing p) {
  return p == Pairing::adjoint ? "adjoint" : "paper-reversed";
}

const char* to_string(ControlClass c) {
  return c == ControlClass::at_impulse ? "at-impulse" : "paper-restricted";
}

Pairing pairing_from_string(const std::string& s) {
  if (s == "adjoint") return Pairing::adjoint;
  if (s == "paper-reversed") return Pairing::paper_reversed;
  fail("E_SCHEMA", "unknown pairing convention '" + s + "' (adjoint | paper-reversed)");
}

ControlClass control_class_from_string(const std::string& s) {
  if (s == "at-impulse") return ControlClass::at_impulse;
  if (s == "paper-restricted") return ControlClass::paper_restricted;
  fail("E_SCHEMA", "unknown control class '" + s + "' (at-impulse | paper-restricted)");
}

int control_level(const NoiseTree& tree, ControlClass cls) {
  if (cls == ControlClass::at_impulse) return tree.impulse_level;
  const int mirrored = tree.depth - tree.impulse_level;
  if (mirrored > tree.impulse_level) {
    std::ostringstream msg;
    msg << "paper-restricted control class requires T <= 2*T_impulse (mirrored level "
        << mirrored << " must not exceed the impulse level " << tree.impulse_level << ")";
    fail("E_WINDOW", msg.str());
  }
  return mirrored;
}

AdaptedField pairing_field(const NoiseTree& tree, const BackwardTrajectory& backward,
                           ControlClass cls, Pairing convention) {
  const int k_u = control_level(tree, cls);
  if (convention == Pairing::adjoint)
    return conditional_expectation(backward.at(tree.impulse_level), k_u);
  return backward.at(tree.depth - tree.impulse_level);
}

DualityReport duality_report(const SpectralModel& model, const ObservationGram& gram,
                             const NoiseTree& tree, Eigen::Ref<const Vector> y0,
                             const AdaptedField& control, const AdaptedField& terminal,
                             Pairing convention) {
  require(terminal.level == tree.depth, "E_PRECONDITION",
          "duality terminal data must live on the deepest level");
  const ForwardTrajectory fwd = forward_evolve(model, gram, tree, y0, control);
  const BackwardTrajectory bwd = backward_evolve(model, tree, terminal);

  DualityReport report;
  report.convention = convention;
  report.terminal_term = l2_inner(fwd.terminal(), terminal);
  report.state_term = y0.dot(bwd.initial());

  if (convention == Pairing::adjoint) {
    const AdaptedField paired =
        conditional_expectation(bwd.at(tree.impulse_level), control.level);
    report.control_term = l2_inner(control, paired, gram);
    report.lhs = report.terminal_term - report.state_term;
  } else {
    const int mirrored = tree.depth - tree.impulse_level;
    AdaptedField paired = bwd.at(mirrored);
    if (control.level > mirrored) paired = lift(paired, control.level);
    else if (control.level < mirrored)
      paired = conditional_expectation(paired, control.level);
    report.control_term = l2_inner(control, paired, gram);
    report.lhs = report.state_term - report.terminal_term;
  }
  report.rhs = report.control_term;
  const double scale = std::max(std::abs(report.terminal_term) + std::abs(report.state_term) +
                                    std::abs(report.control_term),
                                1e-30);
  report.residual = std::abs(report.lhs - report.rhs) / scale;
  return report;
}

double duality_residual(const SpectralModel& model, const ObservationGram& gram,
                        const NoiseTree& tree, Eigen::Ref<const Vector> y0,
                        const AdaptedField& control, const AdaptedField& terminal,
                        Pairing convention) {
  return duality_report(model, gram, tree, y0, control, terminal, convention).residual;
}

AdaptedField martingale_integrand(const NoiseTree& tree, const BackwardTrajectory& backward,
                                  int level) {
  require(level >= 0 && level < tree.depth, "E_PRECONDITION",
          "integrand level must be below the terminal level");
  const Matrix& fine = backward.at(level + 1).values;
  Matrix z(fine.rows() / 2, fine.cols());
  for (Index n = 0; n < z.rows(); ++n)
    z.row(n) = (fine.row(2 * n) - fine.row(2 * n + 1)) / (2.0 * tree.sqrt_dt);
  return AdaptedField{level, std::move(z)};
}

}  // namespace stochimp
