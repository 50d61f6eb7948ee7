// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "stochimp/spectral.hpp"
#include "stochimp/types.hpp"

namespace stochimp {

/// Binary Bernoulli discretization of the driving Brownian motion on [0, T]:
/// K uniform steps of length dt = T/K, increment +sqrt(dt) or -sqrt(dt) per
/// branch with probability 1/2. Node n at level k (n in [0, 2^k)) has
/// children 2n (up move) and 2n+1 (down move) at level k+1, so every level-k
/// node carries probability 2^{-k}.
///
/// The deterministic noise coefficient F is piecewise constant per step.
/// Immutable after construction.
struct NoiseTree {
  int depth = 0;          ///< K
  double horizon = 0.0;   ///< T
  double dt = 0.0;        ///< T/K
  double sqrt_dt = 0.0;
  int impulse_level = 0;  ///< grid index of the impulse time, 0 < level < K
  Vector noise;           ///< F_0..F_{K-1}

  /// Desk-scale depth bound (2^14 nodes on the deepest level).
  static constexpr int kMaxDepth = 14;

  double impulse_time() const { return static_cast<double>(impulse_level) * dt; }
  double time_at(int level) const { return static_cast<double>(level) * dt; }
  /// Largest squared noise coefficient (the growth rate of second moments).
  double tau() const { return noise.size() ? noise.cwiseAbs().maxCoeff() * noise.cwiseAbs().maxCoeff() : 0.0; }
  /// Signed increment on the edge leading into a level-(k+1) node.
  double increment(Index child_node) const { return (child_node % 2 == 0) ? sqrt_dt : -sqrt_dt; }
};

/// Builds a tree with a per-step noise schedule. The impulse time must sit on
/// the step grid strictly inside (0, T), and |F_k| sqrt(dt) < 1 must hold so
/// the discrete stochastic exponential keeps its sign.
NoiseTree build_tree(int depth, double horizon, double impulse_time, Vector noise_schedule);

/// Convenience overload for a constant noise coefficient.
NoiseTree build_tree(int depth, double horizon, double impulse_time, double constant_noise);

/// A random variable measurable at a given tree level: one coefficient vector
/// (a row) per node. By construction its value is constant on each atom of
/// the level-k partition of path space.
struct AdaptedField {
  int level = 0;
  Matrix values;  ///< 2^level rows, one column per mode

  Index num_nodes() const { return values.rows(); }
  Index num_modes() const { return values.cols(); }
};

AdaptedField make_field(int level, Matrix values);
AdaptedField constant_field(int level, Eigen::Ref<const Vector> v);
AdaptedField zero_field(int level, Index modes);
/// Entries uniform in [-1, 1]; used by fuzz corpora, never by the dynamics.
AdaptedField random_field(int level, Index modes, std::mt19937_64& rng);

/// Mean over nodes with the uniform weights 2^{-k}. Reduction is a sibling
/// pairwise fold (children averaged into parents, level by level), a fixed
/// deterministic order under which the +/- branch arithmetic cancels exactly.
Vector expectation(const AdaptedField& field);

/// Projects a field down to a coarser level by iterated sibling averaging.
/// Iterating step by step makes the tower property hold bitwise.
AdaptedField conditional_expectation(const AdaptedField& field, int level);

/// Copies parent values to all descendants at a finer level (the adjoint of
/// conditional_expectation under the node-probability pairing).
AdaptedField lift(const AdaptedField& field, int level);

/// E<f,g> under uniform node weights; both fields at the same level.
double l2_inner(const AdaptedField& f, const AdaptedField& g);
/// E<f, M g>: the control-space pairing through the observation Gram matrix.
double l2_inner(const AdaptedField& f, const AdaptedField& g, const ObservationGram& gram);
double l2_norm2(const AdaptedField& f);
double l2_norm2(const AdaptedField& f, const ObservationGram& gram);

/// Discrete stochastic exponential: per path, the product of (1 + F_k dW_k)
/// over steps from_level..to_level-1, stored as a one-mode field at to_level.
/// Its expectation is 1 (discrete martingale).
AdaptedField doleans(const NoiseTree& tree, int from_level, int to_level);

/// Column-major flattening of a field's node-by-mode value matrix.
Vector flatten(const AdaptedField& field);
AdaptedField unflatten(int level, Index modes, Eigen::Ref<const Vector> flat);

}  // namespace stochimp
