// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "stochimp/hum.hpp"

using namespace stochimp;

namespace {

HUMProblem small_problem(Index dim = 2, int depth = 3, double noise = 0.8,
                         double epsilon = 1e-2) {
  HUMProblem problem;
  problem.model = build_dirichlet_laplacian_1d(dim);
  problem.gram = gram_matrix(problem.model, {{0.2, 0.8}});
  const int impulse = std::max(1, depth / 2);
  const double horizon = 0.3;
  problem.tree = build_tree(depth, horizon, horizon * impulse / depth, noise);
  problem.y0 = Vector::Zero(dim);
  problem.y0[0] = 1.0;
  if (dim > 1) problem.y0[1] = -0.5;
  problem.epsilon = epsilon;
  return problem;
}

// Dense solve of the normal equations assembled by applying grad_J to unit
// vectors (the reference route for the iterative minimizer).
AdaptedField dense_minimizer(const HUMProblem& problem, double weight) {
  const Index n = (Index{1} << problem.tree.depth) * problem.model.dim;
  const AdaptedField zero = zero_field(problem.tree.depth, problem.model.dim);
  const Vector minus_b = flatten(grad_J(problem, zero, weight));
  Matrix normal(n, n);
  for (Index i = 0; i < n; ++i) {
    Vector unit = Vector::Zero(n);
    unit[i] = 1.0;
    const AdaptedField eta = unflatten(problem.tree.depth, problem.model.dim, unit);
    normal.col(i) = flatten(grad_J(problem, eta, weight)) - minus_b;
  }
  const Vector eta = normal.ldlt().solve(-minus_b);
  return unflatten(problem.tree.depth, problem.model.dim, eta);
}

}  // namespace

TEST_CASE("eval_J basics") {
  const HUMProblem problem = small_problem();
  std::mt19937_64 rng(61);

  SUBCASE("zero data gives zero value") {
    CHECK(eval_J(problem, zero_field(3, 2), 1.0) == 0.0);
  }
  SUBCASE("zero initial state makes J nonnegative") {
    HUMProblem p = problem;
    p.y0.setZero();
    for (int trial = 0; trial < 10; ++trial)
      CHECK(eval_J(p, random_field(3, 2, rng), 0.7) >= 0.0);
  }
  SUBCASE("quadratic/linear scaling split") {
    const AdaptedField eta = random_field(3, 2, rng);
    AdaptedField doubled = eta;
    doubled.values *= 2.0;
    const double j1 = eval_J(problem, eta, 0.7);
    const double j2 = eval_J(problem, doubled, 0.7);
    HUMProblem p = problem;
    p.y0.setZero();
    const double quad = eval_J(p, eta, 0.7);
    const double linear = quad - j1;  // linear part evaluated at eta
    CHECK(j2 == doctest::Approx(4.0 * quad - 2.0 * linear).epsilon(1e-12));
  }
}

TEST_CASE("grad_J matches central differences") {
  const HUMProblem problem = small_problem();
  std::mt19937_64 rng(67);
  const AdaptedField eta = random_field(3, 2, rng);
  const AdaptedField grad = grad_J(problem, eta, 0.7);

  const double delta = 1e-5;
  for (int dir = 0; dir < 20; ++dir) {
    const AdaptedField h = random_field(3, 2, rng);
    AdaptedField plus = eta, minus = eta;
    plus.values += delta * h.values;
    minus.values -= delta * h.values;
    const double fd =
        (eval_J(problem, plus, 0.7) - eval_J(problem, minus, 0.7)) / (2.0 * delta);
    const double analytic = l2_inner(grad, h);
    CHECK(std::abs(fd - analytic) <= 1e-6 * std::max(1.0, std::abs(analytic)));
  }
}

TEST_CASE("grad vanishes at zero for zero data") {
  HUMProblem problem = small_problem();
  problem.y0.setZero();
  const AdaptedField grad = grad_J(problem, zero_field(3, 2), 1.3);
  CHECK(grad.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("minimize_J") {
  const HUMProblem problem = small_problem();

  SUBCASE("zero initial state gives the zero minimizer") {
    HUMProblem p = problem;
    p.y0.setZero();
    const AdaptedField eta = minimize_J(p, 1.0);
    CHECK(eta.values.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches the dense normal-equation solve") {
    HUMProblem p = small_problem(2, 2, 0.6);
    const double weight = 0.9;
    const AdaptedField via_cg = minimize_J(p, weight);
    const AdaptedField via_dense = dense_minimizer(p, weight);
    CHECK((via_cg.values - via_dense.values).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("gradient at the solution is numerically zero") {
    const AdaptedField eta = minimize_J(problem, 0.8);
    const AdaptedField grad = grad_J(problem, eta, 0.8);
    const double scale = std::sqrt(l2_norm2(eta)) + problem.y0.norm();
    CHECK(std::sqrt(l2_norm2(grad)) <= 1e-9 * scale);
  }
  SUBCASE("solution is independent of the starting point") {
    std::mt19937_64 rng(71);
    const AdaptedField start = random_field(3, 2, rng);
    const AdaptedField from_zero = minimize_J(problem, 0.8);
    const AdaptedField from_start = minimize_J(problem, 0.8, nullptr, &start);
    const double scale = std::max(std::sqrt(l2_norm2(from_zero)), 1e-30);
    CHECK(std::sqrt(l2_norm2(AdaptedField{
              3, from_zero.values - from_start.values})) <= 10.0 * problem.cg_tol * scale);
  }
  SUBCASE("starting-point independence at scale (J=16, K=10)") {
    HUMProblem big;
    big.model = build_dirichlet_laplacian_1d(16);
    big.gram = gram_matrix(big.model, {{0.2, 0.7}});
    big.tree = build_tree(10, 0.1, 0.05, 1.0);
    std::mt19937_64 rng(72);
    big.y0 = Vector::Zero(16);
    for (Index j = 0; j < 16; ++j)
      big.y0[j] = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    big.epsilon = 1e-2;
    big.cg_tol = 1e-10;
    const double weight = min_weight(big).value;
    const AdaptedField start = random_field(10, 16, rng);
    const AdaptedField from_zero = minimize_J(big, weight);
    const AdaptedField from_start = minimize_J(big, weight, nullptr, &start);
    AdaptedField diff = from_zero;
    diff.values -= from_start.values;
    const double scale = std::max(std::sqrt(l2_norm2(from_zero)), 1e-30);
    CHECK(std::sqrt(l2_norm2(diff)) <= 1e-8 * scale);
  }
}

TEST_CASE("strict convexity with the epsilon margin") {
  const HUMProblem problem = small_problem();
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const AdaptedField a = random_field(3, 2, rng);
    const AdaptedField b = random_field(3, 2, rng);
    AdaptedField mid = a;
    mid.values = 0.5 * (a.values + b.values);
    AdaptedField diff = a;
    diff.values -= b.values;
    const double margin = problem.epsilon / 8.0 * l2_norm2(diff);
    const double lhs = eval_J(problem, mid, 0.7);
    const double rhs = 0.5 * (eval_J(problem, a, 0.7) + eval_J(problem, b, 0.7)) - margin;
    CHECK(lhs <= rhs + 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("min_weight") {
  SUBCASE("large epsilon certifies the bound for free") {
    HUMProblem problem = small_problem(2, 3, 0.5, 0.9);
    // The backward flow is a strict contraction, so eps ~ 1 dominates.
    const MinWeightResult result = min_weight(problem);
    CHECK(result.feasible);
    CHECK(result.value == 0.0);
  }
  SUBCASE("single-mode closed form") {
    HUMProblem problem;
    problem.model = build_dirichlet_laplacian_1d(1);
    problem.gram = gram_matrix(problem.model, {{0.0, 0.6}});
    problem.tree = build_tree(2, 0.1, 0.05, 0.0);
    problem.y0 = Vector::Constant(1, 1.0);
    problem.epsilon = 0.1;
    const double lambda = problem.model.eigenvalues[0];
    const double m11 = problem.gram.matrix(0, 0);
    const double expected =
        (std::exp(-2.0 * lambda * 0.1) - problem.epsilon) /
        (m11 * std::exp(-2.0 * lambda * 0.05));
    CHECK(expected > 0.0);
    const MinWeightResult result = min_weight(problem);
    CHECK(result.value == doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("bisect, dense pencil and power iteration agree on a random region") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> unit(0.05, 0.45);
    for (int trial = 0; trial < 5; ++trial) {
      HUMProblem problem;
      problem.model = build_dirichlet_laplacian_1d(2);
      const double a = unit(rng);
      problem.gram = gram_matrix(problem.model, {{a, a + 0.5}});
      problem.tree = build_tree(2, 0.12, 0.06, 0.5);
      problem.y0 = Vector::Constant(2, 1.0);
      problem.epsilon = 1e-3;

      MinWeightOptions bisect;
      MinWeightOptions pencil;
      pencil.method = MinWeightOptions::Method::dense_pencil;
      MinWeightOptions power;
      power.method = MinWeightOptions::Method::power;
      const double v1 = min_weight(problem, bisect).value;
      const double v2 = min_weight(problem, pencil).value;
      const double v3 = min_weight(problem, power).value;
      CHECK(std::abs(v1 - v2) <= 1e-8 * std::max(1.0, v1));
      CHECK(std::abs(v1 - v3) <= 1e-8 * std::max(1.0, v1));
    }
  }
  SUBCASE("fiber answer certifies the full terminal-data space") {
    HUMProblem problem = small_problem(2, 3, 0.7, 1e-3);
    problem.tree = build_tree(3, 0.15, 0.05, 0.7);
    const double l_min = min_weight(problem).value;

    // Assemble both quadratic forms over all terminal data and verify the
    // positive-semidefiniteness at l_min, and its failure slightly below.
    const Index n = (Index{1} << 3) * 2;
    Matrix z0_cols(2, n);
    Matrix pair_cols;
    for (Index i = 0; i < n; ++i) {
      Vector unit = Vector::Zero(n);
      unit[i] = 1.0;
      const AdaptedField eta = unflatten(3, 2, unit);
      const BackwardTrajectory bt = backward_evolve(problem.model, problem.tree, eta);
      z0_cols.col(i) = bt.initial();
      const AdaptedField pair =
          pairing_field(problem.tree, bt, problem.control_class, problem.convention);
      if (pair_cols.size() == 0) pair_cols.resize(pair.values.size(), n);
      pair_cols.col(i) = flatten(pair);
    }
    const Matrix big_n = z0_cols.transpose() * z0_cols;
    const Index pair_nodes = pair_cols.rows() / 2;
    Matrix weighted = pair_cols;
    for (Index i = 0; i < n; ++i) {
      Eigen::Map<Matrix> block(weighted.col(i).data(), pair_nodes, 2);
      block = block * problem.gram.matrix;
    }
    const double w_pair = 1.0 / static_cast<double>(pair_nodes);
    const Matrix big_b = w_pair * (pair_cols.transpose() * weighted);
    const double ridge = problem.epsilon * std::ldexp(1.0, -3);

    const auto lambda_min_at = [&](double weight) {
      const Matrix q = weight * big_b + ridge * Matrix::Identity(n, n) - big_n;
      Eigen::SelfAdjointEigenSolver<Matrix> solver(q, Eigen::EigenvaluesOnly);
      return solver.eigenvalues()(0);
    };
    CHECK(lambda_min_at(l_min * (1.0 + 1e-9)) >= -1e-12);
    CHECK(lambda_min_at(l_min * (1.0 - 1e-4)) < 0.0);
  }
}

TEST_CASE("synthesize") {
  SUBCASE("zero initial state yields the zero certificate") {
    HUMProblem problem = small_problem();
    problem.y0.setZero();
    const HUMCertificate cert = synthesize(problem);
    CHECK(cert.control_norm2 == 0.0);
    CHECK(cert.terminal_norm2 == 0.0);
    CHECK(cert.eta_norm2 == 0.0);
    CHECK(cert.steering_residual == 0.0);
  }
  SUBCASE("single-mode problem matches the scalar algebra throughout") {
    HUMProblem problem;
    problem.model = build_dirichlet_laplacian_1d(1);
    problem.gram = gram_matrix(problem.model, {{0.0, 1.0}});
    problem.tree = build_tree(2, 0.1, 0.05, 0.0);
    problem.y0 = Vector::Constant(1, 2.0);
    problem.epsilon = 0.1;
    const HUMCertificate cert = synthesize(problem);

    const double lambda = problem.model.eigenvalues[0];
    const double d = std::exp(-lambda * 0.1);
    const double s = std::exp(-lambda * 0.05);
    const double l = (d * d - problem.epsilon) / (s * s);
    CHECK(cert.weight == doctest::Approx(l).epsilon(1e-10));
    const double eta = d * 2.0 / (l * s * s + problem.epsilon);
    CHECK(std::sqrt(cert.eta_norm2) == doctest::Approx(std::abs(eta)).epsilon(1e-9));
    const double control = -l * s * eta;
    CHECK(std::sqrt(cert.control_norm2) == doctest::Approx(std::abs(control)).epsilon(1e-9));
    CHECK(cert.steering_residual <= 1e-10);
    CHECK(cert.slack >= -1e-10 * cert.initial_norm2);
    CHECK(cert.chain_residual <= 1e-10);
  }
  SUBCASE("full-interval no-noise certificate with a large epsilon") {
    HUMProblem problem;
    problem.model = build_dirichlet_laplacian_1d(1);
    problem.gram = gram_matrix(problem.model, {{0.0, 1.0}});
    problem.tree = build_tree(2, 1.0, 0.5, 0.0);
    problem.y0 = Vector::Constant(1, 1.0);
    problem.epsilon = 0.1;
    // Free decay already beats the target, so the weight collapses to zero
    // and the control vanishes.
    const HUMCertificate cert = synthesize(problem);
    CHECK(cert.weight == 0.0);
    CHECK(cert.control_norm2 == 0.0);
    CHECK(cert.steering_residual <= 1e-12);
    CHECK(cert.slack >= 0.0);
  }
  SUBCASE("certificate contracts hold on a noisy multimode problem") {
    HUMProblem problem = small_problem(4, 5, 1.0, 1e-2);
    problem.gram = gram_matrix(problem.model, {{0.15, 0.55}, {0.7, 0.95}});
    problem.cg_tol = 1e-12;
    const HUMCertificate cert = synthesize(problem);
    CHECK(cert.steering_residual <= 1e-8);
    CHECK(cert.chain_residual <= 1e-10);
    CHECK(cert.slack >= -1e-10 * cert.initial_norm2);
    CHECK(cert.terminal_norm2 ==
          doctest::Approx(problem.epsilon * problem.epsilon * cert.eta_norm2).epsilon(1e-8));
    // With the minimal weight the terminal bound of the certificate holds.
    CHECK(cert.terminal_norm2 <= problem.epsilon * cert.initial_norm2 + 1e-10);
  }
  SUBCASE("noise makes the minimizer genuinely random") {
    HUMProblem noisy = small_problem(2, 5, 1.0, 1e-2);
    noisy.cg_tol = 1e-12;
    const HUMCertificate with_noise = synthesize(noisy);
    const Vector mean_noisy = expectation(with_noise.eta_star);
    const double var_noisy =
        l2_norm2(with_noise.eta_star) - mean_noisy.squaredNorm();
    CHECK(var_noisy > 1e-8 * l2_norm2(with_noise.eta_star));

    HUMProblem quiet = small_problem(2, 5, 0.0, 1e-2);
    quiet.cg_tol = 1e-12;
    const HUMCertificate without = synthesize(quiet);
    const Vector mean_quiet = expectation(without.eta_star);
    const double var_quiet = l2_norm2(without.eta_star) - mean_quiet.squaredNorm();
    CHECK(var_quiet <= 1e-14 * std::max(1.0, l2_norm2(without.eta_star)));
  }
  SUBCASE("restricted class requires the window condition") {
    HUMProblem problem = small_problem(2, 3, 0.5);
    // impulse level 1 of depth 3: mirrored level 2 > 1.
    problem.control_class = ControlClass::paper_restricted;
    CHECK_THROWS_AS(synthesize(problem), Error);
  }
  SUBCASE("restricted class synthesizes when the window allows it") {
    HUMProblem problem;
    problem.model = build_dirichlet_laplacian_1d(2);
    problem.gram = gram_matrix(problem.model, {{0.2, 0.8}});
    problem.tree = build_tree(4, 0.2, 0.15, 0.8);  // impulse level 3, mirrored 1
    problem.y0 = Vector::Constant(2, 1.0);
    problem.epsilon = 1e-2;
    problem.control_class = ControlClass::paper_restricted;
    problem.cg_tol = 1e-12;
    const HUMCertificate cert = synthesize(problem);
    CHECK(cert.control_level == 1);
    CHECK(cert.control.level == 1);
    CHECK(cert.steering_residual <= 1e-8);
    CHECK(cert.slack >= -1e-10 * cert.initial_norm2);
  }
  SUBCASE("time-reversed convention synthesizes and reports, without exactness") {
    HUMProblem problem;
    problem.model = build_dirichlet_laplacian_1d(2);
    problem.gram = gram_matrix(problem.model, {{0.2, 0.8}});
    problem.tree = build_tree(4, 0.2, 0.1, 0.8);  // T = 2 T~: reversed is legal
    problem.y0 = Vector::Constant(2, 1.0);
    problem.epsilon = 1e-2;
    problem.convention = Pairing::paper_reversed;
    problem.weight = 0.5;
    const HUMCertificate cert = synthesize(problem);
    CHECK(std::isfinite(cert.steering_residual));
    CHECK(cert.control_norm2 > 0.0);

    // The adjoint convention on the same data steers exactly.
    problem.convention = Pairing::adjoint;
    problem.cg_tol = 1e-12;
    const HUMCertificate exact = synthesize(problem);
    CHECK(exact.steering_residual <= 1e-8);
    CHECK(exact.steering_residual < cert.steering_residual);
  }
  SUBCASE("epsilon below the conditioning floor is rejected") {
    HUMProblem problem = small_problem();
    problem.epsilon = 1e-13;
    CHECK_THROWS_AS(synthesize(problem), Error);
  }
}
