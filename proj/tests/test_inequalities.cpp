// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "stochimp/inequalities.hpp"

using namespace stochimp;

TEST_CASE("spectral constant") {
  SUBCASE("full region gives constant one at every cutoff") {
    const SpectralModel model = build_dirichlet_laplacian_1d(6);
    const ObservationGram gram = gram_matrix(model, {{0.0, 1.0}});
    for (Index j = 0; j < 6; ++j)
      CHECK(spectral_constant(model, gram, model.eigenvalues[j]) ==
            doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two-mode half region matches the 2x2 eigen oracle") {
    const SpectralModel model = build_dirichlet_laplacian_1d(2);
    const ObservationGram gram = gram_matrix(model, {{0.0, 0.5}});
    Matrix reference(2, 2);
    const double off = 4.0 / (3.0 * std::numbers::pi);
    reference << 0.5, off, off, 0.5;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(reference);
    const double expected = 1.0 / std::sqrt(solver.eigenvalues()(0));
    CHECK(spectral_constant(model, gram, model.eigenvalues[1]) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("constant is attained by the extremal vector") {
    // Reconstruction at 1e-10 needs sigma_min well above the rounding floor
    // of the Gram entries, which holds on this region through all 8 windows.
    const SpectralModel model = build_dirichlet_laplacian_1d(8);
    const ObservationGram gram = gram_matrix(model, {{0.2, 0.7}});
    for (Index j = 0; j < 8; ++j) {
      const SpectralWindow window = spectral_window(model, gram, model.eigenvalues[j]);
      const double observed =
          std::sqrt(window.extremal.dot(gram.matrix * window.extremal));
      CHECK(window.extremal.norm() ==
            doctest::Approx(window.constant * observed).epsilon(1e-10));
    }
  }
  SUBCASE("constants are nondecreasing in the cutoff") {
    const SpectralModel model = build_dirichlet_laplacian_1d(12);
    const ObservationGram gram = gram_matrix(model, {{0.2, 0.7}});
    double previous = 0.0;
    for (Index j = 0; j < 12; ++j) {
      const double constant = spectral_constant(model, gram, model.eigenvalues[j]);
      CHECK(constant >= previous * (1.0 - 1e-13));
      previous = constant;
    }
  }
  SUBCASE("empty window is rejected") {
    const SpectralModel model = build_dirichlet_laplacian_1d(4);
    const ObservationGram gram = gram_matrix(model, {{0.2, 0.8}});
    CHECK_THROWS_AS(spectral_constant(model, gram, 1.0), Error);
  }
  SUBCASE("windows below double-precision resolution are refused, not faked") {
    const SpectralModel model = build_dirichlet_laplacian_1d(32);
    const ObservationGram gram = gram_matrix(model, {{0.3, 0.6}});
    CHECK_THROWS_AS(spectral_constant(model, gram, model.eigenvalues[31]), Error);
  }
  SUBCASE("sqrt-growth model beats the linear model on interior regions") {
    for (const auto& [region, top] :
         {std::pair<Interval, Index>{{0.3, 0.6}, 12},
          std::pair<Interval, Index>{{0.2, 0.7}, 14}}) {
      const SpectralModel model = build_dirichlet_laplacian_1d(top);
      const ObservationGram gram = gram_matrix(model, {region});
      std::vector<double> cutoffs;
      for (Index j = 1; j < top; ++j) cutoffs.push_back(model.eigenvalues[j]);
      const SpectralIneqReport report = spectral_sweep(model, gram, cutoffs);
      CHECK(report.fit_sqrt.ssr < report.fit_linear.ssr);
      CHECK(report.fit_sqrt.r2 >= 0.95);
      CHECK(report.fitted_N > 0.0);
    }
  }
}

TEST_CASE("decay check") {
  const SpectralModel model = build_dirichlet_laplacian_1d(6);

  SUBCASE("single top mode without noise decays at the exact exponential gap") {
    const NoiseTree tree = build_tree(4, 0.4, 0.2, 0.0);
    const double cutoff = model.eigenvalues[4];
    AdaptedField eta = zero_field(4, 6);
    eta.values.col(5).setConstant(1.0);
    const BackwardTrajectory bt = backward_evolve(model, tree, eta);
    for (int k = 0; k <= 4; ++k) {
      const double remaining = tree.horizon - tree.time_at(k);
      const double expected =
          std::exp(-2.0 * (model.eigenvalues[5] - cutoff) * remaining) *
          std::exp(-2.0 * cutoff * remaining) * l2_norm2(eta);
      CHECK(l2_norm2(bt.at(k)) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(l2_norm2(bt.at(k)) <= std::exp(-2.0 * cutoff * remaining) * l2_norm2(eta) *
                                      (1.0 + 1e-14));
    }
  }
  SUBCASE("no violations across the fuzz corpus") {
    const NoiseTree tree = build_tree(6, 0.5, 0.25, 1.1);
    const DecayReport report =
        decay_check(model, tree, model.eigenvalues[4], 100, 424242);
    CHECK(report.max_violation <= 1e-12);
  }
  SUBCASE("at the terminal level the bound reduces to the projector contraction") {
    const NoiseTree tree = build_tree(4, 0.4, 0.2, 0.9);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      AdaptedField eta = zero_field(4, 6);
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      for (Index n = 0; n < eta.num_nodes(); ++n)
        for (Index j = 3; j < 6; ++j) eta.values(n, j) = unit(rng);
      const BackwardTrajectory bt = backward_evolve(model, tree, eta);
      CHECK(l2_norm2(bt.at(4)) <= l2_norm2(eta) * (1.0 + 1e-15));
    }
  }
}

TEST_CASE("observability constant") {
  SUBCASE("full region, no noise: mode-by-mode diagonal reduction") {
    const SpectralModel model = build_dirichlet_laplacian_1d(3);
    const ObservationGram gram = gram_matrix(model, {{0.0, 1.0}});
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 0.0);
    std::vector<int> levels{0, 1, 2, 3};
    double expected = 0.0;
    for (Index j = 0; j < 3; ++j) {
      const double lambda = model.eigenvalues[j];
      double denom = 0.0;
      for (int k = 0; k <= 3; ++k)
        denom += tree.dt * std::exp(-2.0 * lambda * (tree.horizon - tree.time_at(k)));
      expected = std::max(expected, std::exp(-2.0 * lambda * tree.horizon) / denom);
    }
    CHECK(observability_constant(model, gram, tree, levels) ==
          doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("shrinking the level set increases the constant") {
    const SpectralModel model = build_dirichlet_laplacian_1d(2);
    const ObservationGram gram = gram_matrix(model, {{0.2, 0.7}});
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 0.8);
    const double all = observability_constant(model, gram, tree, {0, 1, 2, 3});
    const double fewer = observability_constant(model, gram, tree, {2, 3});
    const double fewest = observability_constant(model, gram, tree, {3});
    CHECK(all <= fewer * (1.0 + 1e-12));
    CHECK(fewer <= fewest * (1.0 + 1e-12));
  }
  SUBCASE("power iteration matches the dense solve on random level sets") {
    const SpectralModel model = build_dirichlet_laplacian_1d(2);
    const ObservationGram gram = gram_matrix(model, {{0.35, 0.75}});
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 1.0);
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<int> levels;
      for (int k = 0; k <= 3; ++k)
        if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.5) levels.push_back(k);
      if (levels.empty()) levels.push_back(3);
      ObservabilityOptions dense;
      ObservabilityOptions power;
      power.force_power = true;
      power.seed = 1000 + trial;
      const double a = observability_constant(model, gram, tree, levels, dense);
      const double b = observability_constant(model, gram, tree, levels, power);
      CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, a));
    }
  }
  SUBCASE("the quotient is scale invariant") {
    // Homogeneity is structural (both forms are quadratic); check that the
    // realized quotient of a scaled field matches the unscaled one.
    const SpectralModel model = build_dirichlet_laplacian_1d(2);
    const ObservationGram gram = gram_matrix(model, {{0.2, 0.7}});
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 0.8);
    std::mt19937_64 rng(11);
    const AdaptedField eta = random_field(3, 2, rng);
    AdaptedField scaled = eta;
    scaled.values *= 3.7;
    const auto quotient = [&](const AdaptedField& field) {
      const BackwardTrajectory bt = backward_evolve(model, tree, field);
      double denom = 0.0;
      for (int k : {1, 3}) denom += tree.dt * l2_norm2(bt.at(k), gram);
      return bt.initial().squaredNorm() / denom;
    };
    CHECK(quotient(eta) == doctest::Approx(quotient(scaled)).epsilon(1e-12));
    // And the certified constant dominates the realized quotient.
    CHECK(quotient(eta) <=
          observability_constant(model, gram, tree, {1, 3}) * (1.0 + 1e-10));
  }
}

TEST_CASE("interpolation inequality") {
  const SpectralModel model = build_dirichlet_laplacian_1d(3);

  SUBCASE("full region: the constant collapses to one as theta -> 0") {
    const ObservationGram gram = gram_matrix(model, {{0.0, 1.0}});
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 0.7);
    const InterpolationReport report =
        interpolation_check(model, gram, tree, 1, 1e-9, 25, 31);
    // With B* the identity, E||z||^2 <= (E||z||^2)^{1-theta} (E||eta||^2)^theta
    // holds with constant one up to the vanishing theta exponent.
    CHECK(report.max_constant <= 1.0 + 1e-6);
  }
  SUBCASE("single-mode data admits the closed-form constant without noise") {
    const ObservationGram gram = gram_matrix(model, {{0.2, 0.9}});
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 0.0);
    const double theta = 0.4;
    const int level = 1;
    AdaptedField eta = zero_field(3, 3);
    eta.values.col(0).setConstant(1.0);
    const BackwardTrajectory bt = backward_evolve(model, tree, eta);
    const double z2 = l2_norm2(bt.at(level));
    const double obs = l2_norm2(bt.at(level), gram);
    const double expected = z2 / (std::pow(obs, 1.0 - theta) * std::pow(l2_norm2(eta), theta));
    // Deterministic single-mode data: z_t = e^{-lambda (T-t)} e_1, so the
    // needed constant is (decay^2)^theta (1/m11)^{1-theta}.
    const double decay = std::exp(-model.eigenvalues[0] * (tree.horizon - tree.time_at(level)));
    const double reference =
        std::pow(decay * decay, theta) / std::pow(gram.matrix(0, 0), 1.0 - theta);
    CHECK(expected == doctest::Approx(reference).epsilon(1e-10));
  }
  SUBCASE("fitted growth in 1/(T-t) is positive and stable across seeds") {
    const ObservationGram gram = gram_matrix(model, {{0.55, 0.8}});
    const NoiseTree tree = build_tree(4, 0.4, 0.2, 0.8);
    const LinearFit fit_a = interpolation_growth_fit(model, gram, tree, 0.5, 40, 101);
    const LinearFit fit_b = interpolation_growth_fit(model, gram, tree, 0.5, 40, 202);
    CHECK(fit_a.slope > 0.0);
    CHECK(fit_b.slope > 0.0);
    CHECK(std::abs(fit_a.slope - fit_b.slope) <= 0.5 * std::max(fit_a.slope, fit_b.slope));
  }
}

TEST_CASE("po1 constant") {
  const SpectralModel model = build_dirichlet_laplacian_1d(2);
  const ObservationGram gram = gram_matrix(model, {{0.25, 0.75}});

  SUBCASE("large epsilon certifies the bound with zero constant") {
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 0.5);
    CHECK(po1_constant(model, gram, tree, 1, 50.0) == 0.0);
  }
  SUBCASE("single mode closed form") {
    const SpectralModel scalar = build_dirichlet_laplacian_1d(1);
    const ObservationGram g1 = gram_matrix(scalar, {{0.1, 0.7}});
    const NoiseTree tree = build_tree(4, 0.2, 0.05, 0.9);
    const int level = 1;
    const double eps = 1e-3;
    double growth = 1.0;
    for (int k = level; k < 4; ++k)
      growth *= 1.0 + tree.noise[k] * tree.noise[k] * tree.dt;
    const double lambda = scalar.eigenvalues[0];
    const double remaining = tree.horizon - tree.time_at(level);
    const double expected =
        std::max(0.0, (1.0 - eps * std::exp(2.0 * lambda * remaining) / growth) /
                          g1.matrix(0, 0));
    CHECK(po1_constant(scalar, g1, tree, level, eps) ==
          doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("certifies the inequality over fuzzed terminal data") {
    const NoiseTree tree = build_tree(4, 0.2, 0.05, 0.8);
    const int level = 1;
    const double eps = 1e-2;
    const double constant = po1_constant(model, gram, tree, level, eps);
    std::mt19937_64 rng(303);
    double worst = -1.0;
    for (int trial = 0; trial < 200; ++trial) {
      const AdaptedField eta = random_field(4, 2, rng);
      const BackwardTrajectory bt = backward_evolve(model, tree, eta);
      const double lhs = l2_norm2(bt.at(level));
      const double rhs = constant * l2_norm2(bt.at(level), gram) + eps * l2_norm2(eta);
      worst = std::max(worst, lhs / rhs - 1.0);
    }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("tightness: some terminal datum nearly attains the constant") {
    // Assemble the full quadratic forms and compare the pencil maximum with
    // the node-collapsed answer.
    const NoiseTree tree = build_tree(3, 0.3, 0.1, 0.9);
    const int level = 1;
    const double eps = 1e-3;
    const double constant = po1_constant(model, gram, tree, level, eps);
    const Index n = (Index{1} << 3) * 2;
    Matrix z_cols;
    Matrix eta_cols = Matrix::Identity(n, n);
    for (Index i = 0; i < n; ++i) {
      const AdaptedField eta = unflatten(3, 2, eta_cols.col(i));
      const BackwardTrajectory bt = backward_evolve(model, tree, eta);
      if (z_cols.size() == 0) z_cols.resize(bt.at(level).values.size(), n);
      z_cols.col(i) = flatten(bt.at(level));
    }
    const double w_level = std::ldexp(1.0, -level);
    const double w_terminal = std::ldexp(1.0, -3);
    const Matrix lhs_form = w_level * (z_cols.transpose() * z_cols);
    Matrix weighted = z_cols;
    const Index nodes = z_cols.rows() / 2;
    for (Index i = 0; i < n; ++i) {
      Eigen::Map<Matrix> block(weighted.col(i).data(), nodes, 2);
      block = block * gram.matrix;
    }
    const Matrix obs_form = w_level * (z_cols.transpose() * weighted);
    const Matrix q = constant * obs_form +
                     eps * w_terminal * Matrix::Identity(n, n) - lhs_form;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(q, Eigen::EigenvaluesOnly);
    CHECK(solver.eigenvalues()(0) >= -1e-12 * q.cwiseAbs().maxCoeff());
    const Matrix q_below = 0.999 * constant * obs_form +
                           eps * w_terminal * Matrix::Identity(n, n) - lhs_form;
    Eigen::SelfAdjointEigenSolver<Matrix> below(q_below, Eigen::EigenvaluesOnly);
    CHECK(below.eigenvalues()(0) < 0.0);
  }
  SUBCASE("nonincreasing in epsilon and sqrt-log growth diagnostics") {
    const NoiseTree tree = build_tree(4, 0.2, 0.05, 0.8);
    const std::vector<double> epsilons{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    const Po1SweepReport report = po1_sweep(model, gram, tree, 1, epsilons);
    for (std::size_t i = 1; i < report.constants.size(); ++i)
      CHECK(report.constants[i] >= report.constants[i - 1] * (1.0 - 1e-12));
    CHECK(report.fitted_c3 > 0.0);
  }
}
