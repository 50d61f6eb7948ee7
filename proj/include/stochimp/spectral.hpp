// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stochimp/types.hpp"

namespace stochimp {

/// Truncated eigenbasis of a self-adjoint elliptic operator with discrete
/// spectrum. The built-in instance is -d^2/dx^2 on (0,1) with Dirichlet
/// boundary conditions: lambda_j = (j*pi)^2 and e_j(x) = sqrt(2) sin(j*pi*x)
/// for j = 1..J. Coefficient vectors are always expressed in this basis.
///
/// Immutable after construction; safe to share across threads.
struct SpectralModel {
  Index dim = 0;          ///< truncation order J
  Vector eigenvalues;     ///< strictly increasing, positive
  std::string domain_tag;
};

/// Builds the 1-D Dirichlet Laplacian model at truncation order `dim`.
SpectralModel build_dirichlet_laplacian_1d(Index dim);

using Interval = std::pair<double, double>;

/// Compression of the observation/control operator (multiplication by the
/// indicator of a region G, a finite union of intervals in [0,1]) to the
/// truncated basis: matrix(i,j) = integral over G of e_i e_j.
///
/// Conventions carried by this object:
///  - injecting a control w into the state adds matrix*w to the coefficients;
///  - the control-space inner product of coefficient vectors u, v is
///    u^T matrix v (u represents the function chi_G * sum u_j e_j).
struct ObservationGram {
  std::vector<Interval> intervals;  ///< sorted, pairwise disjoint
  Matrix matrix;                    ///< J x J, symmetric, spectrum in [0,1]

  double total_length() const;
};

/// Closed-form Gram matrix of the region over the model's basis.
/// Rejects overlapping or out-of-range intervals and zero-measure regions.
ObservationGram gram_matrix(const SpectralModel& model, std::vector<Interval> intervals);

/// Diagonal heat semigroup factors e^{-lambda_j t}.
Vector semigroup_factors(const SpectralModel& model, double t);

/// Applies the semigroup at time t >= 0 to a coefficient vector.
Vector apply_semigroup(const SpectralModel& model, double t, Eigen::Ref<const Vector> v);

/// Index window of the spectral projector at a cutoff (ties included).
struct SpectralProjector {
  double cutoff = 0.0;
  std::vector<Index> index_set;  ///< 0-based indices with lambda_j <= cutoff
};

SpectralProjector spectral_projector(const SpectralModel& model, double cutoff);

/// Splits v into (low, high) parts across the cutoff; the parts sum to v and
/// have disjoint coefficient support.
std::pair<Vector, Vector> project(const SpectralModel& model, double cutoff,
                                  Eigen::Ref<const Vector> v);

}  // namespace stochimp
