#pragma once

// Model manifolds carrying a time-dependent metric g_t and a drift Z_t.
//
// Points and tangent vectors are stored in ambient coordinates: unit vectors
// in R^{d+1} for the sphere, the upper sheet of the hyperboloid
// -x0^2 + |x|^2 = -1 for hyperbolic space, chart coordinates in [0, 2pi)^d for
// the torus and plain coordinates for Euclidean space. Geodesics of every
// builtin flow do not move with t (only their speed does), so exp_map is
// computed in base coordinates.

#include "mfl/core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mfl {

enum class FlowKind { Euclidean, Sphere, Hyperbolic, Torus };

const char* flow_kind_name(FlowKind kind) noexcept;

/// Scalar factor c(t) > 0 multiplying a base metric.
struct TimeFactor {
  enum class Form { Constant, Linear, Exponential };

  Form form = Form::Constant;
  double c0 = 1.0;
  double rate = 0.0;

  static TimeFactor constant(double c0 = 1.0) { return {Form::Constant, c0, 0.0}; }
  /// c(t) = c0 + rate * t.
  static TimeFactor linear(double c0, double rate) { return {Form::Linear, c0, rate}; }
  /// c(t) = c0 * exp(rate * t).
  static TimeFactor exponential(double c0, double rate) { return {Form::Exponential, c0, rate}; }

  double value(double t) const noexcept;
  double derivative(double t) const noexcept;
  /// First time where c would reach zero (inf when it never does).
  double horizon() const noexcept;

  bool operator==(const TimeFactor&) const = default;
};

/// Drift vector field Z_t with its covariant derivative.
struct DriftField {
  enum class Kind { Zero, LinearRadial, Custom };

  using ValueFn = std::function<Vec(double t, const Vec& x)>;
  using DerivativeFn = std::function<Vec(double t, const Vec& x, const Vec& v)>;

  Kind kind = Kind::Zero;
  double lambda = 0.0;
  ValueFn custom_value;
  DerivativeFn custom_derivative;

  static DriftField zero() { return {}; }
  /// Z(x) = lambda * x; Euclidean only.
  static DriftField linear_radial(double lambda);
  static DriftField custom(ValueFn value, DerivativeFn derivative);

  Vec value(double t, const Vec& x) const;
  /// nabla_v Z at x.
  Vec covariant_derivative(double t, const Vec& x, const Vec& v) const;
};

/// Time t, base point and a g_t-orthonormal frame stored as d ambient columns.
struct FramePoint {
  double t = 0.0;
  Vec x;
  Mat u;
};

struct Geodesic {
  FlowKind kind = FlowKind::Euclidean;
  Vec x;
  Vec y;
  double length = 0.0;  ///< g_t length
  double angle = 0.0;   ///< base-metric length (sphere and hyperbolic)
  Vec e;                ///< base-unit initial direction at x
  Vec v0;               ///< g_t-unit velocity at x
  Vec v1;               ///< g_t-unit velocity at y

  /// Point at g_t arclength s along the geodesic.
  Vec sample(double s) const;
};

/// Lower bound K for R^Z_t. Time-only when spatially constant.
struct CurvatureData {
  std::function<double(double t, const Vec& x)> K;
  bool time_only = true;
  std::string label;
  std::optional<double> constant_value;

  double at(double t, const Vec& x) const { return K(t, x); }
  double at(double t) const;
  /// Integral of K over [a, b] (time-only bounds).
  double integral(double a, double b) const;
  /// Integral over [a, b] of exp(2 * int_a^r K).
  double exp2_integral(double a, double b) const;

  static CurvatureData constant(double k);
  static CurvatureData time_function(std::function<double(double)> k, std::string label);
};

/// exp in base coordinates: the curve r -> exp(x, r v) is a geodesic for
/// every g_t of the builtin families.
Vec exp_base(FlowKind kind, const Vec& x, const Vec& v);

/// Parallel transport of w along r -> exp(x, r v), r in [0, 1].
Vec transport_along(FlowKind kind, const Vec& x, const Vec& v, VecRef w);

/// Minkowski product -a0 b0 + sum_i ai bi.
double minkowski(VecRef a, VecRef b);

class MetricFlow {
 public:
  static MetricFlow euclidean(int d, TimeFactor c = TimeFactor::constant(), DriftField z = {});
  static MetricFlow sphere(int d, TimeFactor c = TimeFactor::constant(), DriftField z = {});
  static MetricFlow hyperbolic(int d, TimeFactor c = TimeFactor::constant(), DriftField z = {});
  /// `axes` holds one factor (shared) or one per axis.
  static MetricFlow torus(int d, std::vector<TimeFactor> axes, DriftField z = {});
  /// Unit sphere under Ricci flow, c(t) = 1 - 2(d-1)t.
  static MetricFlow ricci_sphere(int d);

  FlowKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  int ambient_dim() const noexcept;
  double horizon() const noexcept { return horizon_; }
  const DriftField& drift() const noexcept { return drift_; }
  const TimeFactor& factor() const noexcept { return factors_.front(); }
  const std::vector<TimeFactor>& axis_factors() const noexcept { return factors_; }
  bool conformal() const noexcept { return kind_ != FlowKind::Torus || factors_.size() == 1; }
  /// Sectional curvature of the base metric: +1, -1 or 0.
  double base_curvature() const noexcept;

  double factor_at(double t, int axis = 0) const;
  double factor_derivative(double t, int axis = 0) const;

  void check_time(double t) const;
  void check_point(const Vec& x) const;
  Vec project_point(const Vec& x) const;
  Vec project_tangent(const Vec& x, const Vec& v) const;

  /// d ambient columns, orthonormal for the base metric (chart axes on the torus).
  Mat tangent_basis(const Vec& x) const;
  /// A g_t-orthonormal frame at x.
  Mat orthonormal_frame(double t, const Vec& x) const;

  double inner(double t, const Vec& x, VecRef v, VecRef w) const;
  double norm(double t, const Vec& x, VecRef v) const;
  /// partial_t g_t(v, w).
  double dt_inner(double t, const Vec& x, VecRef v, VecRef w) const;
  /// u^T g_t u for ambient frame columns.
  Mat gram(double t, const Vec& x, const Mat& u) const;
  /// u^T (partial_t g_t) u.
  Mat dt_gram(double t, const Vec& x, const Mat& u) const;
  /// max |u^T g_t u - I|.
  double frame_defect(double t, const Vec& x, const Mat& u) const;
  void require_orthonormal(double t, const Vec& x, const Mat& u, double tol = 1e-6) const;

  /// g_t on tangent_basis(x).
  Mat metric_at(double t, const Vec& x) const;
  Mat metric_time_derivative(double t, const Vec& x) const;

  Vec exp_map(double t, const Vec& x, const Vec& v) const;
  Geodesic distance(double t, const Vec& x, const Vec& y) const;
  double dist(double t, const Vec& x, const Vec& y) const { return distance(t, x, y).length; }
  /// log_x(y): tangent at x of g_t length rho_t(x, y).
  Vec log_map(double t, const Vec& x, const Vec& y) const;

  Vec parallel_transport(double t, const Geodesic& geo, const Vec& v) const;
  Vec mirror_map(double t, const Geodesic& geo, const Vec& v) const;
  Vec mirror_map(double t, const Vec& x, const Vec& y, const Vec& v) const;

  double cut_margin(double t, const Vec& x, const Vec& y) const;
  /// Injectivity radius of g_t (inf for Euclidean and hyperbolic).
  double injectivity_radius(double t) const;
  /// Sectional curvature of g_t on conformal flows.
  double sectional_curvature(double t) const;

  /// Entries R^Z_t(u e_a, u e_b).
  Mat rz_matrix(const FramePoint& fp) const;
  /// Entries partial_t g_t(u e_a, u e_b).
  Mat g_dot_matrix(const FramePoint& fp) const;
  /// Components of Z_t(x) in the frame u.
  Vec drift_in_frame(double t, const Vec& x, const Mat& u) const;

  /// L_t f(x) by geodesic central differences; h_fd <= 0 selects 1e-4 max(1, |x|).
  double apply_generator(double t, const std::function<double(const Vec&)>& f, const Vec& x,
                         double h_fd = 0.0) const;

  /// Ambient covector dF with dF . v = sum_a w_a <v, E_a>_base for E = tangent_basis(x).
  Vec covector_from_basis(const Vec& x, const Vec& w) const;

  /// Closed-form lower bound for R^Z_t; falls back to the pointwise smallest
  /// eigenvalue of rz_matrix for custom drifts.
  CurvatureData curvature_bound() const;

 private:
  MetricFlow(FlowKind kind, int dim, std::vector<TimeFactor> factors, DriftField drift);

  FlowKind kind_;
  int dim_;
  std::vector<TimeFactor> factors_;
  DriftField drift_;
  double horizon_;
};

/// Wrap an angle to [0, 2pi).
double wrap_angle(double a);
/// Wrap a difference to (-pi, pi].
double wrap_difference(double a);

}  // namespace mfl
