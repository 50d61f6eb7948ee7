// SPDX-License-Identifier: Apache-2.0
#include "stochimp/tree.hpp"

#include <cmath>
#include <sstream>

namespace stochimp {

NoiseTree build_tree(int depth, double horizon, double impulse_time, Vector noise_schedule) {
  require(depth >= 2, "E_PRECONDITION", "tree depth must be at least 2");
  if (depth > NoiseTree::kMaxDepth) {
    std::ostringstream msg;
    msg << "tree depth " << depth << " exceeds the desk-scale bound "
        << NoiseTree::kMaxDepth;
    fail("E_PRECONDITION", msg.str());
  }
  require(horizon > 0.0, "E_PRECONDITION", "horizon must be positive");
  require(impulse_time > 0.0 && impulse_time < horizon, "E_PRECONDITION",
          "impulse time must lie strictly inside (0, T)");

  const double ratio = impulse_time / horizon * static_cast<double>(depth);
  const int level = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - static_cast<double>(level)) > 1e-9 * depth || level < 1 ||
      level > depth - 1) {
    std::ostringstream msg;
    msg << "impulse time " << impulse_time << " is not on the step grid: with T=" << horizon
        << " and K=" << depth << " the step is dt=" << horizon / depth
        << " and the impulse time must be j*dt for an integer 0 < j < K";
    fail("E_GRID_ALIGN", msg.str());
  }

  require(noise_schedule.size() == depth, "E_PRECONDITION",
          "noise schedule must provide one coefficient per step");

  NoiseTree tree;
  tree.depth = depth;
  tree.horizon = horizon;
  tree.dt = horizon / static_cast<double>(depth);
  tree.sqrt_dt = std::sqrt(tree.dt);
  tree.impulse_level = level;
  tree.noise = std::move(noise_schedule);

  const double worst = tree.noise.cwiseAbs().maxCoeff() * tree.sqrt_dt;
  if (!(worst < 1.0)) {
    std::ostringstream msg;
    msg << "noise bound violated: max |F_k| sqrt(dt) = " << worst
        << " must be < 1 so the step factors 1 + F_k dW_k stay positive";
    fail("E_NOISE_BOUND", msg.str());
  }
  return tree;
}

NoiseTree build_tree(int depth, double horizon, double impulse_time, double constant_noise) {
  return build_tree(depth, horizon, impulse_time,
                    Vector::Constant(depth, constant_noise));
}

AdaptedField make_field(int level, Matrix values) {
  require(level >= 0 && level <= NoiseTree::kMaxDepth, "E_PRECONDITION",
          "field level out of range");
  require(values.rows() == (Index{1} << level), "E_PRECONDITION",
          "field must have exactly 2^level rows");
  return AdaptedField{level, std::move(values)};
}

AdaptedField constant_field(int level, Eigen::Ref<const Vector> v) {
  const Index nodes = Index{1} << level;
  return AdaptedField{level, v.transpose().replicate(nodes, 1)};
}

AdaptedField zero_field(int level, Index modes) {
  return AdaptedField{level, Matrix::Zero(Index{1} << level, modes)};
}

AdaptedField random_field(int level, Index modes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix values(Index{1} << level, modes);
  for (Index n = 0; n < values.rows(); ++n)
    for (Index j = 0; j < modes; ++j) values(n, j) = unit(rng);
  return AdaptedField{level, std::move(values)};
}

AdaptedField conditional_expectation(const AdaptedField& field, int level) {
  require(level >= 0 && level <= field.level, "E_PRECONDITION",
          "conditioning level must not exceed the field level");
  Matrix v = field.values;
  for (int k = field.level; k > level; --k) {
    const Index parents = Index{1} << (k - 1);
    Matrix coarse(parents, v.cols());
    for (Index n = 0; n < parents; ++n)
      coarse.row(n) = 0.5 * (v.row(2 * n) + v.row(2 * n + 1));
    v.swap(coarse);
  }
  return AdaptedField{level, std::move(v)};
}

AdaptedField lift(const AdaptedField& field, int level) {
  require(level >= field.level && level <= NoiseTree::kMaxDepth, "E_PRECONDITION",
          "lift target level must be at least the field level");
  Matrix v = field.values;
  for (int k = field.level; k < level; ++k) {
    const Index children = Index{1} << (k + 1);
    Matrix fine(children, v.cols());
    for (Index n = 0; n < v.rows(); ++n) {
      fine.row(2 * n) = v.row(n);
      fine.row(2 * n + 1) = v.row(n);
    }
    v.swap(fine);
  }
  return AdaptedField{level, std::move(v)};
}

Vector expectation(const AdaptedField& field) {
  return conditional_expectation(field, 0).values.row(0).transpose();
}

namespace {

// Sibling pairwise fold of one scalar per node down to the root.
double fold_mean(Vector values) {
  Index count = values.size();
  while (count > 1) {
    count /= 2;
    for (Index n = 0; n < count; ++n)
      values[n] = 0.5 * (values[2 * n] + values[2 * n + 1]);
  }
  return values[0];
}

}  // namespace

double l2_inner(const AdaptedField& f, const AdaptedField& g) {
  require(f.level == g.level, "E_PRECONDITION", "fields must live on the same level");
  require(f.num_modes() == g.num_modes(), "E_PRECONDITION",
          "fields must have the same number of modes");
  Vector dots(f.num_nodes());
  for (Index n = 0; n < f.num_nodes(); ++n) dots[n] = f.values.row(n).dot(g.values.row(n));
  return fold_mean(std::move(dots));
}

double l2_inner(const AdaptedField& f, const AdaptedField& g, const ObservationGram& gram) {
  require(f.level == g.level, "E_PRECONDITION", "fields must live on the same level");
  require(f.num_modes() == gram.matrix.rows() && g.num_modes() == gram.matrix.rows(),
          "E_PRECONDITION", "field modes must match the Gram dimension");
  const Matrix weighted = g.values * gram.matrix;  // symmetric Gram
  Vector dots(f.num_nodes());
  for (Index n = 0; n < f.num_nodes(); ++n) dots[n] = f.values.row(n).dot(weighted.row(n));
  return fold_mean(std::move(dots));
}

double l2_norm2(const AdaptedField& f) { return l2_inner(f, f); }

double l2_norm2(const AdaptedField& f, const ObservationGram& gram) {
  return l2_inner(f, f, gram);
}

Vector flatten(const AdaptedField& field) {
  return Eigen::Map<const Vector>(field.values.data(), field.values.size());
}

AdaptedField unflatten(int level, Index modes, Eigen::Ref<const Vector> flat) {
  const Index nodes = Index{1} << level;
  require(flat.size() == nodes * modes, "E_PRECONDITION",
          "flat vector length does not match the field shape");
  Matrix values = Eigen::Map<const Matrix>(flat.data(), nodes, modes);
  return AdaptedField{level, std::move(values)};
}

AdaptedField doleans(const NoiseTree& tree, int from_level, int to_level) {
  require(0 <= from_level && from_level <= to_level && to_level <= tree.depth,
          "E_PRECONDITION", "doleans levels must satisfy 0 <= a <= b <= K");
  Matrix v = Matrix::Ones(Index{1} << from_level, 1);
  for (int k = from_level; k < to_level; ++k) {
    const double bump = tree.noise[k] * tree.sqrt_dt;
    Matrix fine(Index{1} << (k + 1), 1);
    for (Index n = 0; n < v.rows(); ++n) {
      const double shift = v(n, 0) * bump;
      fine(2 * n, 0) = v(n, 0) + shift;
      fine(2 * n + 1, 0) = v(n, 0) - shift;
    }
    v.swap(fine);
  }
  return AdaptedField{to_level, std::move(v)};
}

}  // namespace stochimp
