#pragma once

// Scalar test functions with optional differentials.
//
// The differential is an ambient covector dF: for a tangent vector v at x,
// df(v) = dF . v with the plain Euclidean dot product. For a g_t-orthonormal
// frame u this gives u^{-1} grad^t f = u^T dF.

#include "mfl/geometry.hpp"

#include <functional>
#include <optional>
#include <string>

namespace mfl {

struct ScalarField {
  std::function<double(double t, const Vec& x)> value;
  std::function<Vec(double t, const Vec& x)> differential;
  std::string descriptor;
  /// Known range of values, when the builder can bound them.
  std::optional<double> lower;
  std::optional<double> upper;

  bool has_gradient() const { return static_cast<bool>(differential); }
  double operator()(double t, const Vec& x) const { return value(t, x); }
};

namespace fields {

ScalarField constant(double v);
/// offset + scale * x_index.
ScalarField coordinate(const MetricFlow& flow, int index, double offset = 0.0, double scale = 1.0);
/// offset + a . x.
ScalarField linear(const Vec& a, double offset = 0.0);
/// scale * x_index^2.
ScalarField square(int index, double scale = 1.0);
/// offset + scale * sin(x_index).
ScalarField sine(int index, double offset = 0.0, double scale = 1.0);
/// offset + scale * exp(-|x - center|^2 / (2 width^2)).
ScalarField gaussian_bump(const Vec& center, double width, double offset = 0.0, double scale = 1.0);
/// exp(cap * tanh(x_index / cap)): a smooth, bounded stand-in for exp(x_index).
ScalarField soft_exp(int index, double cap);

}  // namespace fields

/// Replaces or supplies the differential by geodesic central differences with base step h.
ScalarField with_numeric_gradient(const MetricFlow& flow, ScalarField f, double h = 1e-6);

/// u^{-1} grad^t f(x) = u^T dF.
Vec frame_gradient(const ScalarField& f, double t, const Vec& x, const Mat& u);

/// |grad^t f|_t(x).
double gradient_norm(const MetricFlow& flow, const ScalarField& f, double t, const Vec& x);

/// C^infinity cutoff: 1 on [0, 1/2], 0 on [1, inf).
double smooth_cutoff(double u);

}  // namespace mfl
