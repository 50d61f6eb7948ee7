// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stochimp/hum.hpp"
#include "stochimp/io.hpp"
#include "stochimp/optimal.hpp"

namespace stochimp {

/// Fully resolved experiment description. Parsed and schema-validated before
/// any computation; the resolved form is echoed into the run manifest.
struct ExperimentConfig {
  Index dim = 8;
  std::string domain = "dirichlet-laplacian-1d";
  std::vector<Interval> region{{0.2, 0.7}};
  double horizon = 1.0;
  double impulse_time = 0.5;
  int depth = 8;
  Vector noise_schedule;          ///< resolved to `depth` entries
  bool noise_is_constant = true;  ///< schedule came from a single coefficient
  std::string problem = "verify";
  Vector y0;                      ///< resolved initial coefficients
  double epsilon = 1e-2;
  double bound = 1.0;             ///< M for the time-optimal problem
  std::optional<double> weight;   ///< l; absent means automatic
  Pairing convention = Pairing::adjoint;
  ControlClass control_class = ControlClass::at_impulse;
  double cg_tol = 1e-10;
  int trials = 100;
  std::uint64_t seed = 0;         ///< governs fuzz corpora only
  std::vector<double> horizon_grid;
  std::vector<double> epsilon_grid;
  std::map<std::string, double> tolerances;  ///< contract overrides
  std::string output_dir = "out";
  int threads = 1;

  NoiseTree build_noise_tree() const;
  SpectralModel build_model() const;
  HUMProblem build_hum_problem() const;
};

ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config(const std::string& path);
Json config_to_json(const ExperimentConfig& config);

/// One contract evaluated by a run: pass iff residual <= tolerance.
struct Contract {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::vector<Contract> items;
  bool all_pass = true;
};

/// Runs the built-in identity/inequality suite on the configured problem:
/// duality fuzz, martingale mean, projector orthogonality, Gram contraction,
/// high-frequency decay, window attainment, steering, certificate chain and
/// slack. Tolerances may be overridden through config.tolerances.
VerifyReport verify_suite(const ExperimentConfig& config);

struct RunOutcome {
  int status = 0;  ///< number of failed contracts
  std::vector<std::string> failed_contracts;
  Json result;
};

/// Dispatches the configured problem, writes manifest.json, result.json and
/// the per-problem CSV artifacts into config.output_dir, and reports contract
/// failures through the status.
RunOutcome run(const ExperimentConfig& config);

}  // namespace stochimp
