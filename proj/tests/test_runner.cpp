// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "stochimp/inequalities.hpp"
#include "stochimp/runner.hpp"

using namespace stochimp;
namespace fs = std::filesystem;

namespace {

Json base_config() {
  return Json::parse(R"({
    "model": {"J": 4, "domain": "dirichlet-laplacian-1d"},
    "G": [[0.2, 0.7]],
    "time": {"T": 0.2, "T_tilde": 0.1, "K": 4},
    "noise": {"constant": 1.0},
    "y0": [1.0, 0.5, 0.25, 0.125],
    "problem": "verify",
    "parameters": {"epsilon": 1e-2, "l": "auto", "cg_tol": 1e-12, "trials": 25},
    "seed": 7,
    "output_dir": "runner_out/base"
  })");
}

std::string read_file(const fs::path& path) { return read_text_file(path.string()); }

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("round trip through the resolved form") {
    const ExperimentConfig config = parse_config(base_config());
    const ExperimentConfig again = parse_config(config_to_json(config));
    CHECK(again.dim == config.dim);
    CHECK(again.depth == config.depth);
    CHECK(again.epsilon == config.epsilon);
    CHECK((again.noise_schedule - config.noise_schedule).cwiseAbs().maxCoeff() == 0.0);
    CHECK((again.y0 - config.y0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(again.control_class == config.control_class);
    CHECK(again.convention == config.convention);
  }
  SUBCASE("schema violations carry the E_SCHEMA code") {
    for (const char* broken : {
             R"({"model": {"J": 0}})",
             R"({"model": {"J": 4, "domain": "unknown"}})",
             R"({"problem": "solve-everything"})",
             R"({"noise": {"constant": 1.0, "schedule": [1.0]}})",
             R"({"parameters": {"l": "automatic"}})",
             R"({"parameters": {"l": -2.0}})",
             R"({"G": [[0.9, 0.2]], "model": {"J": 2}})",
             R"({"y0": "zeros"})",
             R"({"threads": 0})",
         }) {
      try {
        const ExperimentConfig config = parse_config(Json::parse(broken));
        // Region errors surface at Gram construction; force it.
        (void)gram_matrix(config.build_model(), config.region);
        FAIL_CHECK("expected a rejection for ", broken);
      } catch (const Error& error) {
        CHECK((error.code() == "E_SCHEMA" || error.code() == "E_PRECONDITION"));
      }
    }
  }
  SUBCASE("schedule length must match the depth") {
    Json doc = base_config();
    doc["noise"] = Json{{"schedule", Json::array({1.0, 1.0})}};
    CHECK_THROWS_AS(parse_config(doc), Error);
  }
}

TEST_CASE("simulate run matches the closed-form decay and is reproducible") {
  Json doc = base_config();
  doc["problem"] = "simulate";
  doc["output_dir"] = "runner_out/simulate_a";
  const RunOutcome first = run(parse_config(doc));
  CHECK(first.status == 0);
  CHECK(first.result.at("terminal_norm2").get<double>() ==
        doctest::Approx(first.result.at("product_form_reference").get<double>())
            .epsilon(1e-12));

  doc["output_dir"] = "runner_out/simulate_b";
  const RunOutcome second = run(parse_config(doc));

  // Byte-identical artifacts modulo the manifest timestamp.
  CHECK(read_file("runner_out/simulate_a/result.json") ==
        read_file("runner_out/simulate_b/result.json"));
  CHECK(read_file("runner_out/simulate_a/trajectory.csv") ==
        read_file("runner_out/simulate_b/trajectory.csv"));
  Json manifest_a = Json::parse(read_file("runner_out/simulate_a/manifest.json"));
  Json manifest_b = Json::parse(read_file("runner_out/simulate_b/manifest.json"));
  // The manifests may differ only in the timestamp and the output directory
  // this test varies on purpose.
  CHECK(manifest_a.at("config").at("output_dir").get<std::string>() ==
        "runner_out/simulate_a");
  manifest_a.erase("generated_at_unix_ms");
  manifest_b.erase("generated_at_unix_ms");
  manifest_a.at("config").erase("output_dir");
  manifest_b.at("config").erase("output_dir");
  CHECK(manifest_a == manifest_b);
}

TEST_CASE("verify suite passes on the base config and reflects fault injection") {
  Json doc = base_config();
  doc["output_dir"] = "runner_out/verify";
  const RunOutcome good = run(parse_config(doc));
  CHECK(good.status == 0);
  CHECK(good.failed_contracts.empty());

  // Tightening a tolerance to an impossible value must fail the run and
  // enumerate the contract.
  doc["parameters"]["tolerances"] = Json{{"duality", 1e-30}};
  doc["output_dir"] = "runner_out/verify_fault";
  const RunOutcome bad = run(parse_config(doc));
  CHECK(bad.status == 1);
  REQUIRE(bad.failed_contracts.size() == 1);
  CHECK(bad.failed_contracts[0] == "duality");
}

TEST_CASE("full region makes every spectral window constant one") {
  Json doc = base_config();
  doc["G"] = Json::array({Json::array({0.0, 1.0})});
  const ExperimentConfig config = parse_config(doc);
  const SpectralModel model = config.build_model();
  const ObservationGram gram = gram_matrix(model, config.region);
  for (Index j = 0; j < model.dim; ++j)
    CHECK(spectral_constant(model, gram, model.eigenvalues[j]) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("restricted class with a late impulse is rejected with the window code") {
  Json doc = base_config();
  doc["time"] = Json{{"T", 0.3}, {"T_tilde", 0.075}, {"K", 4}};  // T > 2 T~
  doc["parameters"]["class"] = "paper-restricted";
  doc["problem"] = "hum";
  const ExperimentConfig config = parse_config(doc);
  try {
    run(config);
    FAIL_CHECK("expected the window rejection");
  } catch (const Error& error) {
    CHECK(error.code() == "E_WINDOW");
    CHECK(std::string(error.what()).find("T <= 2*T_impulse") != std::string::npos);
  }
}

TEST_CASE("hum run emits the certificate artifacts") {
  Json doc = base_config();
  doc["problem"] = "hum";
  doc["output_dir"] = "runner_out/hum";
  const RunOutcome outcome = run(parse_config(doc));
  CHECK(outcome.status == 0);
  const Json certificate = outcome.result.at("certificate");
  CHECK(certificate.at("steering_residual").get<double>() <= 1e-8);
  CHECK(certificate.at("l").get<double>() >= 0.0);
  CHECK(fs::exists("runner_out/hum/eta_star.json"));
  CHECK(fs::exists("runner_out/hum/control.csv"));
  CHECK(outcome.result.at("duality").at("residual").get<double>() <= 1e-12);
}

TEST_CASE("norm-opt run satisfies its constraint contract") {
  Json doc = base_config();
  doc["problem"] = "norm-opt";
  doc["parameters"]["epsilon"] = 1e-3;
  doc["output_dir"] = "runner_out/norm_opt";
  const RunOutcome outcome = run(parse_config(doc));
  CHECK(outcome.status == 0);
  CHECK(outcome.result.at("active").get<bool>());
  CHECK(outcome.result.at("value").get<double>() > 0.0);
}

TEST_CASE("time-opt run writes the scan and satisfies the target contract") {
  Json doc = base_config();
  doc["problem"] = "time-opt";
  doc["parameters"]["epsilon"] = 1e-3;
  doc["parameters"]["M"] = 0.22;  // M^2 sits between N(0.25) and N(0.3)
  doc["parameters"]["T_grid"] = Json::array({0.15, 0.2, 0.25, 0.3});
  doc["output_dir"] = "runner_out/time_opt";
  const RunOutcome outcome = run(parse_config(doc));
  CHECK(outcome.status == 0);
  CHECK(outcome.result.at("admissible").get<bool>());
  CHECK(outcome.result.at("T_star").get<double>() > 0.25);
  CHECK(fs::exists("runner_out/time_opt/scan.csv"));
  const std::string scan = read_file("runner_out/time_opt/scan.csv");
  CHECK(scan.rfind("T,N_of_T,admissible\n", 0) == 0);
}

TEST_CASE("sweep runs deterministically across worker counts") {
  Json doc = base_config();
  doc["problem"] = "sweep";
  doc["parameters"]["epsilon_grid"] = Json::array({1e-1, 1e-2, 1e-3});
  doc["output_dir"] = "runner_out/sweep_serial";
  doc["threads"] = 1;
  const RunOutcome serial = run(parse_config(doc));
  CHECK(serial.status == 0);

  doc["output_dir"] = "runner_out/sweep_parallel";
  doc["threads"] = 3;
  const RunOutcome parallel = run(parse_config(doc));
  CHECK(parallel.status == 0);

  CHECK(read_file("runner_out/sweep_serial/sweep.csv") ==
        read_file("runner_out/sweep_parallel/sweep.csv"));
}
