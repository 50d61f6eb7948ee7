// SPDX-License-Identifier: Apache-2.0
#include "stochimp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stochimp {

namespace {

constexpr double kPi = std::numbers::pi;

// Antiderivative of e_i e_j = 2 sin(i pi x) sin(j pi x) evaluated on [a,b],
// with 1-based mode numbers.
double overlap(Index i1, Index j1, double a, double b) {
  if (i1 == j1) {
    const double w = 2.0 * kPi * static_cast<double>(i1);
    return (b - a) - (std::sin(w * b) - std::sin(w * a)) / w;
  }
  const double wm = kPi * static_cast<double>(i1 - j1);
  const double wp = kPi * static_cast<double>(i1 + j1);
  return (std::sin(wm * b) - std::sin(wm * a)) / wm -
         (std::sin(wp * b) - std::sin(wp * a)) / wp;
}

}  // namespace

SpectralModel build_dirichlet_laplacian_1d(Index dim) {
  require(dim >= 1, "E_PRECONDITION", "truncation order J must be at least 1");
  SpectralModel model;
  model.dim = dim;
  model.eigenvalues.resize(dim);
  for (Index j = 0; j < dim; ++j) {
    const double k = kPi * static_cast<double>(j + 1);
    model.eigenvalues[j] = k * k;
  }
  model.domain_tag = "dirichlet_laplacian_1d(0,1)";
  return model;
}

double ObservationGram::total_length() const {
  double len = 0.0;
  for (const auto& [a, b] : intervals) len += b - a;
  return len;
}

ObservationGram gram_matrix(const SpectralModel& model, std::vector<Interval> intervals) {
  require(!intervals.empty(), "E_PRECONDITION",
          "control region must be a nonempty union of intervals (positive measure)");
  std::sort(intervals.begin(), intervals.end());
  for (const auto& [a, b] : intervals) {
    if (!(a >= 0.0 && b <= 1.0 && a < b)) {
      std::ostringstream msg;
      msg << "interval [" << a << "," << b << "] must satisfy 0 <= a < b <= 1";
      fail("E_PRECONDITION", msg.str());
    }
  }
  for (std::size_t k = 1; k < intervals.size(); ++k) {
    if (!(intervals[k - 1].second < intervals[k].first)) {
      std::ostringstream msg;
      msg << "intervals [" << intervals[k - 1].first << "," << intervals[k - 1].second
          << "] and [" << intervals[k].first << "," << intervals[k].second
          << "] overlap; the region must be a disjoint union";
      fail("E_PRECONDITION", msg.str());
    }
  }

  const Index n = model.dim;
  ObservationGram gram;
  gram.intervals = std::move(intervals);
  gram.matrix = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      double entry = 0.0;
      for (const auto& [a, b] : gram.intervals) entry += overlap(i + 1, j + 1, a, b);
      gram.matrix(i, j) = entry;
      gram.matrix(j, i) = entry;
    }
  }
  return gram;
}

Vector semigroup_factors(const SpectralModel& model, double t) {
  require(t >= 0.0, "E_PRECONDITION", "semigroup time must be nonnegative");
  return (-t * model.eigenvalues.array()).exp();
}

Vector apply_semigroup(const SpectralModel& model, double t, Eigen::Ref<const Vector> v) {
  require(v.size() == model.dim, "E_PRECONDITION",
          "coefficient vector length does not match the truncation order");
  return semigroup_factors(model, t).cwiseProduct(v);
}

SpectralProjector spectral_projector(const SpectralModel& model, double cutoff) {
  require(cutoff > 0.0, "E_PRECONDITION", "spectral cutoff must be positive");
  SpectralProjector proj;
  proj.cutoff = cutoff;
  for (Index j = 0; j < model.dim; ++j) {
    if (model.eigenvalues[j] <= cutoff) proj.index_set.push_back(j);
  }
  return proj;
}

std::pair<Vector, Vector> project(const SpectralModel& model, double cutoff,
                                  Eigen::Ref<const Vector> v) {
  require(v.size() == model.dim, "E_PRECONDITION",
          "coefficient vector length does not match the truncation order");
  const SpectralProjector proj = spectral_projector(model, cutoff);
  Vector low = Vector::Zero(model.dim);
  for (Index j : proj.index_set) low[j] = v[j];
  Vector high = v - low;
  return {std::move(low), std::move(high)};
}

}  // namespace stochimp
