#include "mfl/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace mfl {

namespace {

constexpr double kTwoPi = 2.0 * kPi;
constexpr double kPointTol = 1e-9;
constexpr double kAntipodalTol = 1e-10;

// sin(a)/a and sinh(a)/a without cancellation near zero.
double sinc(double a) { return std::abs(a) < 1e-6 ? 1.0 - a * a / 6.0 : std::sin(a) / a; }
double sinhc(double a) { return std::abs(a) < 1e-6 ? 1.0 + a * a / 6.0 : std::sinh(a) / a; }

double base_inner(FlowKind kind, VecRef v, VecRef w) {
  return kind == FlowKind::Hyperbolic ? minkowski(v, w) : v.dot(w);
}

Vec renormalize(FlowKind kind, Vec x) {
  if (kind == FlowKind::Sphere) {
    x /= x.norm();
  } else if (kind == FlowKind::Hyperbolic) {
    const double s = x.tail(x.size() - 1).squaredNorm();
    x[0] = std::sqrt(1.0 + s);
  } else if (kind == FlowKind::Torus) {
    for (int i = 0; i < x.size(); ++i) x[i] = wrap_angle(x[i]);
  }
  return x;
}

}  // namespace

const char* flow_kind_name(FlowKind kind) noexcept {
  switch (kind) {
    case FlowKind::Euclidean: return "euclidean";
    case FlowKind::Sphere: return "sphere";
    case FlowKind::Hyperbolic: return "hyperbolic";
    case FlowKind::Torus: return "torus";
  }
  return "unknown";
}

double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

double wrap_difference(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

double minkowski(VecRef a, VecRef b) {
  return -a[0] * b[0] + a.tail(a.size() - 1).dot(b.tail(b.size() - 1));
}

// ---------------------------------------------------------------------------
// TimeFactor

double TimeFactor::value(double t) const noexcept {
  switch (form) {
    case Form::Constant: return c0;
    case Form::Linear: return c0 + rate * t;
    case Form::Exponential: return c0 * std::exp(rate * t);
  }
  return c0;
}

double TimeFactor::derivative(double t) const noexcept {
  switch (form) {
    case Form::Constant: return 0.0;
    case Form::Linear: return rate;
    case Form::Exponential: return c0 * rate * std::exp(rate * t);
  }
  return 0.0;
}

double TimeFactor::horizon() const noexcept {
  if (form == Form::Linear && rate < 0.0) return -c0 / rate;
  return kInf;
}

// ---------------------------------------------------------------------------
// DriftField

DriftField DriftField::linear_radial(double lambda) {
  DriftField z;
  z.kind = Kind::LinearRadial;
  z.lambda = lambda;
  return z;
}

DriftField DriftField::custom(ValueFn value, DerivativeFn derivative) {
  if (!value || !derivative) throw Error(ErrorCode::InvalidArgument, "custom drift needs value and derivative");
  DriftField z;
  z.kind = Kind::Custom;
  z.custom_value = std::move(value);
  z.custom_derivative = std::move(derivative);
  return z;
}

Vec DriftField::value(double t, const Vec& x) const {
  switch (kind) {
    case Kind::Zero: return Vec::Zero(x.size());
    case Kind::LinearRadial: return lambda * x;
    case Kind::Custom: return custom_value(t, x);
  }
  return Vec::Zero(x.size());
}

Vec DriftField::covariant_derivative(double t, const Vec& x, const Vec& v) const {
  switch (kind) {
    case Kind::Zero: return Vec::Zero(v.size());
    case Kind::LinearRadial: return lambda * v;
    case Kind::Custom: return custom_derivative(t, x, v);
  }
  return Vec::Zero(v.size());
}

// ---------------------------------------------------------------------------
// Free helpers

Vec exp_base(FlowKind kind, const Vec& x, const Vec& v) {
  switch (kind) {
    case FlowKind::Euclidean: return x + v;
    case FlowKind::Torus: return renormalize(kind, x + v);
    case FlowKind::Sphere: {
      const double a = v.norm();
      return renormalize(kind, std::cos(a) * x + sinc(a) * v);
    }
    case FlowKind::Hyperbolic: {
      const double a = std::sqrt(std::max(0.0, minkowski(v, v)));
      return renormalize(kind, std::cosh(a) * x + sinhc(a) * v);
    }
  }
  return x;
}

Vec transport_along(FlowKind kind, const Vec& x, const Vec& v, VecRef w) {
  if (kind == FlowKind::Euclidean || kind == FlowKind::Torus) return w;
  const double a = kind == FlowKind::Sphere ? v.norm() : std::sqrt(std::max(0.0, minkowski(v, v)));
  if (a < 1e-300) return w;
  const Vec e = v / a;
  const double alpha = base_inner(kind, w, e);
  Vec e1;
  if (kind == FlowKind::Sphere) {
    e1 = -std::sin(a) * x + std::cos(a) * e;
  } else {
    e1 = std::sinh(a) * x + std::cosh(a) * e;
  }
  return w + alpha * (e1 - e);
}

Vec Geodesic::sample(double s) const {
  if (length == 0.0) return x;
  return exp_base(kind, x, s * v0);
}

// ---------------------------------------------------------------------------
// CurvatureData

namespace {
constexpr int kQuadIntervals = 2000;
}

double CurvatureData::at(double t) const {
  static const Vec empty;
  return K(t, empty);
}

double CurvatureData::integral(double a, double b) const {
  if (!time_only) throw Error(ErrorCode::InvalidArgument, "integral needs a time-only bound");
  if (b == a) return 0.0;
  if (constant_value) return *constant_value * (b - a);
  const int n = kQuadIntervals;
  const double h = (b - a) / n;
  double acc = at(a) + at(b);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * at(a + i * h);
  return acc * h / 3.0;
}

double CurvatureData::exp2_integral(double a, double b) const {
  if (!time_only) throw Error(ErrorCode::InvalidArgument, "integral needs a time-only bound");
  if (b == a) return 0.0;
  if (constant_value) {
    const double k = *constant_value;
    return k == 0.0 ? b - a : std::expm1(2.0 * k * (b - a)) / (2.0 * k);
  }
  const int n = kQuadIntervals;
  const double h = (b - a) / n;
  double inner = 0.0;
  double prev = at(a);
  double acc = 1.0;  // node 0 weight 1, exp(0)
  for (int j = 1; j <= n; ++j) {
    const double r = a + j * h;
    const double mid = at(r - 0.5 * h);
    const double cur = at(r);
    inner += h / 6.0 * (prev + 4.0 * mid + cur);
    prev = cur;
    const double w = (j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
    acc += w * std::exp(2.0 * inner);
  }
  return acc * h / 3.0;
}

CurvatureData CurvatureData::constant(double k) {
  CurvatureData c;
  c.K = [k](double, const Vec&) { return k; };
  c.time_only = true;
  c.label = "constant";
  c.constant_value = k;
  return c;
}

CurvatureData CurvatureData::time_function(std::function<double(double)> k, std::string label) {
  CurvatureData c;
  c.K = [k = std::move(k)](double t, const Vec&) { return k(t); };
  c.time_only = true;
  c.label = std::move(label);
  return c;
}

// ---------------------------------------------------------------------------
// MetricFlow construction

MetricFlow::MetricFlow(FlowKind kind, int dim, std::vector<TimeFactor> factors, DriftField drift)
    : kind_(kind), dim_(dim), factors_(std::move(factors)), drift_(std::move(drift)), horizon_(kInf) {
  if (dim_ < 1 || dim_ > kMaxDim) throw Error(ErrorCode::InvalidArgument, "dimension out of range");
  if (factors_.empty()) throw Error(ErrorCode::InvalidArgument, "missing time factor");
  if (kind_ == FlowKind::Torus && factors_.size() != 1 && static_cast<int>(factors_.size()) != dim_) {
    throw Error(ErrorCode::InvalidArgument, "torus needs one factor or one per axis");
  }
  for (const TimeFactor& f : factors_) {
    if (!(f.c0 > 0.0) || !std::isfinite(f.rate)) throw Error(ErrorCode::InvalidArgument, "factor must start positive");
    horizon_ = std::min(horizon_, f.horizon());
  }
  if (drift_.kind == DriftField::Kind::LinearRadial && kind_ != FlowKind::Euclidean) {
    throw Error(ErrorCode::UnsupportedDrift, "linear radial drift is only defined on Euclidean flows");
  }
}

MetricFlow MetricFlow::euclidean(int d, TimeFactor c, DriftField z) {
  return MetricFlow(FlowKind::Euclidean, d, {c}, std::move(z));
}
MetricFlow MetricFlow::sphere(int d, TimeFactor c, DriftField z) {
  return MetricFlow(FlowKind::Sphere, d, {c}, std::move(z));
}
MetricFlow MetricFlow::hyperbolic(int d, TimeFactor c, DriftField z) {
  return MetricFlow(FlowKind::Hyperbolic, d, {c}, std::move(z));
}
MetricFlow MetricFlow::torus(int d, std::vector<TimeFactor> axes, DriftField z) {
  return MetricFlow(FlowKind::Torus, d, std::move(axes), std::move(z));
}
MetricFlow MetricFlow::ricci_sphere(int d) {
  return sphere(d, TimeFactor::linear(1.0, -2.0 * (d - 1)));
}

int MetricFlow::ambient_dim() const noexcept {
  return (kind_ == FlowKind::Sphere || kind_ == FlowKind::Hyperbolic) ? dim_ + 1 : dim_;
}

double MetricFlow::base_curvature() const noexcept {
  if (kind_ == FlowKind::Sphere) return 1.0;
  if (kind_ == FlowKind::Hyperbolic) return -1.0;
  return 0.0;
}

double MetricFlow::factor_at(double t, int axis) const {
  return factors_[factors_.size() == 1 ? 0 : static_cast<std::size_t>(axis)].value(t);
}

double MetricFlow::factor_derivative(double t, int axis) const {
  return factors_[factors_.size() == 1 ? 0 : static_cast<std::size_t>(axis)].derivative(t);
}

void MetricFlow::check_time(double t) const {
  if (!std::isfinite(t) || t >= horizon_) {
    throw Error(ErrorCode::HorizonExceeded, "time " + std::to_string(t) + " is at or past the horizon");
  }
}

void MetricFlow::check_point(const Vec& x) const {
  if (x.size() != ambient_dim()) throw Error(ErrorCode::OffManifold, "point has wrong dimension");
  if (!x.allFinite()) throw Error(ErrorCode::OffManifold, "point is not finite");
  if (kind_ == FlowKind::Sphere && std::abs(x.squaredNorm() - 1.0) > kPointTol) {
    throw Error(ErrorCode::OffManifold, "point is not on the unit sphere");
  }
  if (kind_ == FlowKind::Hyperbolic && (std::abs(minkowski(x, x) + 1.0) > kPointTol * std::max(1.0, x[0] * x[0]) || x[0] <= 0.0)) {
    throw Error(ErrorCode::OffManifold, "point is not on the hyperboloid");
  }
}

Vec MetricFlow::project_point(const Vec& x) const { return renormalize(kind_, x); }

Vec MetricFlow::project_tangent(const Vec& x, const Vec& v) const {
  switch (kind_) {
    case FlowKind::Sphere: return v - v.dot(x) * x;
    case FlowKind::Hyperbolic: return v + minkowski(v, x) * x;
    default: return v;
  }
}

Mat MetricFlow::tangent_basis(const Vec& x) const {
  const int n = ambient_dim();
  Mat basis(n, dim_);
  if (kind_ == FlowKind::Euclidean || kind_ == FlowKind::Torus) {
    basis.setIdentity();
    return basis;
  }
  // Gram-Schmidt over projected coordinate axes. On the sphere the axis along
  // the largest coordinate of x is skipped; on the hyperboloid the time axis.
  int skip = 0;
  if (kind_ == FlowKind::Sphere) x.cwiseAbs().maxCoeff(&skip);
  int col = 0;
  for (int i = 0; i < n && col < dim_; ++i) {
    if (i == skip) continue;
    Vec v = project_tangent(x, Vec::Unit(n, i));
    for (int j = 0; j < col; ++j) v -= base_inner(kind_, v, basis.col(j)) * basis.col(j);
    v /= std::sqrt(base_inner(kind_, v, v));
    basis.col(col++) = v;
  }
  return basis;
}

Mat MetricFlow::orthonormal_frame(double t, const Vec& x) const {
  Mat u = tangent_basis(x);
  for (int a = 0; a < dim_; ++a) u.col(a) /= std::sqrt(factor_at(t, kind_ == FlowKind::Torus ? a : 0));
  return u;
}

double MetricFlow::inner(double t, const Vec& x, VecRef v, VecRef w) const {
  (void)x;
  if (kind_ == FlowKind::Torus && factors_.size() > 1) {
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) acc += factor_at(t, i) * v[i] * w[i];
    return acc;
  }
  return factor_at(t) * base_inner(kind_, v, w);
}

double MetricFlow::norm(double t, const Vec& x, VecRef v) const {
  return std::sqrt(std::max(0.0, inner(t, x, v, v)));
}

double MetricFlow::dt_inner(double t, const Vec& x, VecRef v, VecRef w) const {
  (void)x;
  if (kind_ == FlowKind::Torus && factors_.size() > 1) {
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) acc += factor_derivative(t, i) * v[i] * w[i];
    return acc;
  }
  return factor_derivative(t) * base_inner(kind_, v, w);
}

Mat MetricFlow::gram(double t, const Vec& x, const Mat& u) const {
  (void)x;
  if (kind_ == FlowKind::Torus && factors_.size() > 1) {
    Vec w(dim_);
    for (int i = 0; i < dim_; ++i) w[i] = factor_at(t, i);
    return u.transpose() * w.asDiagonal() * u;
  }
  Mat g = u.transpose() * u;
  if (kind_ == FlowKind::Hyperbolic) g.noalias() -= 2.0 * u.row(0).transpose() * u.row(0);
  return factor_at(t) * g;
}

Mat MetricFlow::dt_gram(double t, const Vec& x, const Mat& u) const {
  (void)x;
  if (kind_ == FlowKind::Torus && factors_.size() > 1) {
    Vec w(dim_);
    for (int i = 0; i < dim_; ++i) w[i] = factor_derivative(t, i);
    return u.transpose() * w.asDiagonal() * u;
  }
  const double cdot = factor_derivative(t);
  if (cdot == 0.0) return Mat::Zero(u.cols(), u.cols());
  Mat g = u.transpose() * u;
  if (kind_ == FlowKind::Hyperbolic) g.noalias() -= 2.0 * u.row(0).transpose() * u.row(0);
  return cdot * g;
}

double MetricFlow::frame_defect(double t, const Vec& x, const Mat& u) const {
  Mat g = gram(t, x, u);
  g -= Mat::Identity(u.cols(), u.cols());
  return g.cwiseAbs().maxCoeff();
}

void MetricFlow::require_orthonormal(double t, const Vec& x, const Mat& u, double tol) const {
  if (u.rows() != ambient_dim() || u.cols() != dim_) {
    throw Error(ErrorCode::FrameNotOrthonormal, "frame has wrong shape");
  }
  const double defect = frame_defect(t, x, u);
  if (!(defect <= tol)) {
    throw Error(ErrorCode::FrameNotOrthonormal, "frame defect " + std::to_string(defect));
  }
}

Mat MetricFlow::metric_at(double t, const Vec& x) const {
  check_time(t);
  check_point(x);
  return gram(t, x, tangent_basis(x));
}

Mat MetricFlow::metric_time_derivative(double t, const Vec& x) const {
  check_time(t);
  check_point(x);
  return dt_gram(t, x, tangent_basis(x));
}

Vec MetricFlow::exp_map(double t, const Vec& x, const Vec& v) const {
  check_time(t);
  check_point(x);
  return exp_base(kind_, x, v);
}

Geodesic MetricFlow::distance(double t, const Vec& x, const Vec& y) const {
  check_time(t);
  Geodesic g;
  g.kind = kind_;
  g.x = x;
  g.y = y;
  const int n = ambient_dim();
  g.e = Vec::Zero(n);
  g.v0 = Vec::Zero(n);
  g.v1 = Vec::Zero(n);
  switch (kind_) {
    case FlowKind::Euclidean: {
      const Vec delta = y - x;
      const double base = delta.norm();
      g.angle = base;
      g.length = std::sqrt(factor_at(t)) * base;
      if (base > 0.0) {
        g.e = delta / base;
        g.v0 = delta / g.length;
        g.v1 = g.v0;
      }
      break;
    }
    case FlowKind::Torus: {
      Vec delta(n);
      for (int i = 0; i < n; ++i) {
        delta[i] = wrap_difference(y[i] - x[i]);
        if (kPi - std::abs(delta[i]) < kAntipodalTol) {
          throw Error(ErrorCode::CutLocusAmbiguity, "torus points are on each other's cut locus");
        }
      }
      g.length = norm(t, x, delta);
      g.angle = delta.norm();
      if (g.length > 0.0) {
        g.e = delta / g.angle;
        g.v0 = delta / g.length;
        g.v1 = g.v0;
      }
      break;
    }
    case FlowKind::Sphere: {
      const double cosine = x.dot(y);
      const double theta = cosine >= 0.0 ? 2.0 * std::asin(std::min(1.0, 0.5 * (x - y).norm()))
                                         : kPi - 2.0 * std::asin(std::min(1.0, 0.5 * (x + y).norm()));
      if (kPi - theta < kAntipodalTol) throw Error(ErrorCode::CutLocusAmbiguity, "antipodal points");
      g.angle = theta;
      g.length = std::sqrt(factor_at(t)) * theta;
      const Vec w = y - cosine * x;
      const double wn = w.norm();
      if (wn > 0.0 && theta > 0.0) {
        g.e = w / wn;
        const double s = 1.0 / std::sqrt(factor_at(t));
        g.v0 = s * g.e;
        g.v1 = s * (-std::sin(theta) * x + std::cos(theta) * g.e);
      }
      break;
    }
    case FlowKind::Hyperbolic: {
      const double xy = minkowski(x, y);
      const Vec diff = x - y;
      const double chord = std::sqrt(std::max(0.0, minkowski(diff, diff)));
      const double theta = 2.0 * std::asinh(0.5 * chord);
      g.angle = theta;
      g.length = std::sqrt(factor_at(t)) * theta;
      const Vec w = y + xy * x;
      const double wn = std::sqrt(std::max(0.0, minkowski(w, w)));
      if (wn > 0.0 && theta > 0.0) {
        g.e = w / wn;
        const double s = 1.0 / std::sqrt(factor_at(t));
        g.v0 = s * g.e;
        g.v1 = s * (std::sinh(theta) * x + std::cosh(theta) * g.e);
      }
      break;
    }
  }
  return g;
}

Vec MetricFlow::log_map(double t, const Vec& x, const Vec& y) const {
  const Geodesic g = distance(t, x, y);
  return g.length * g.v0;
}

Vec MetricFlow::parallel_transport(double t, const Geodesic& geo, const Vec& v) const {
  (void)t;
  if (kind_ == FlowKind::Euclidean || kind_ == FlowKind::Torus || geo.angle == 0.0) return v;
  return transport_along(kind_, geo.x, geo.angle * geo.e, v);
}

Vec MetricFlow::mirror_map(double t, const Geodesic& geo, const Vec& v) const {
  if (geo.length == 0.0) throw Error(ErrorCode::CutLocusAmbiguity, "mirror map needs distinct points");
  return parallel_transport(t, geo, v) - 2.0 * inner(t, geo.x, v, geo.v0) * geo.v1;
}

Vec MetricFlow::mirror_map(double t, const Vec& x, const Vec& y, const Vec& v) const {
  return mirror_map(t, distance(t, x, y), v);
}

double MetricFlow::cut_margin(double t, const Vec& x, const Vec& y) const {
  switch (kind_) {
    case FlowKind::Euclidean:
    case FlowKind::Hyperbolic: return kInf;
    case FlowKind::Sphere: {
      const double cosine = std::clamp(x.dot(y), -1.0, 1.0);
      const double theta = cosine >= 0.0 ? 2.0 * std::asin(std::min(1.0, 0.5 * (x - y).norm()))
                                         : kPi - 2.0 * std::asin(std::min(1.0, 0.5 * (x + y).norm()));
      return std::sqrt(factor_at(t)) * std::max(0.0, kPi - theta);
    }
    case FlowKind::Torus: {
      // Second-shortest lattice representative flips one coordinate by 2pi.
      double rho2 = 0.0;
      double best = kInf;
      for (int i = 0; i < dim_; ++i) {
        const double d = std::abs(wrap_difference(y[i] - x[i]));
        const double a = factor_at(t, i);
        rho2 += a * d * d;
        best = std::min(best, a * (4.0 * kPi * kPi - 4.0 * kPi * d));
      }
      return std::max(0.0, std::sqrt(rho2 + std::max(0.0, best)) - std::sqrt(rho2));
    }
  }
  return kInf;
}

double MetricFlow::injectivity_radius(double t) const {
  switch (kind_) {
    case FlowKind::Sphere: return kPi * std::sqrt(factor_at(t));
    case FlowKind::Torus: {
      double m = kInf;
      for (int i = 0; i < dim_; ++i) m = std::min(m, kPi * std::sqrt(factor_at(t, i)));
      return m;
    }
    default: return kInf;
  }
}

double MetricFlow::sectional_curvature(double t) const { return base_curvature() / factor_at(t); }

Mat MetricFlow::g_dot_matrix(const FramePoint& fp) const {
  require_orthonormal(fp.t, fp.x, fp.u);
  return dt_gram(fp.t, fp.x, fp.u);
}

Vec MetricFlow::drift_in_frame(double t, const Vec& x, const Mat& u) const {
  Vec out(dim_);
  if (drift_.kind == DriftField::Kind::Zero) {
    out.setZero();
    return out;
  }
  const Vec z = drift_.value(t, x);
  for (int a = 0; a < dim_; ++a) out[a] = inner(t, x, u.col(a), z);
  return out;
}

Mat MetricFlow::rz_matrix(const FramePoint& fp) const {
  const Mat gdot = g_dot_matrix(fp);
  Mat r = -0.5 * gdot;
  const double ric = (dim_ - 1) * base_curvature();
  if (ric != 0.0) r += (ric / factor_at(fp.t)) * gram(fp.t, fp.x, fp.u);
  if (drift_.kind != DriftField::Kind::Zero) {
    Mat dz(dim_, dim_);
    for (int a = 0; a < dim_; ++a) {
      const Vec nabla = drift_.covariant_derivative(fp.t, fp.x, fp.u.col(a));
      for (int b = 0; b < dim_; ++b) dz(a, b) = inner(fp.t, fp.x, nabla, fp.u.col(b));
    }
    r -= 0.5 * (dz + dz.transpose());
  }
  return r;
}

double MetricFlow::apply_generator(double t, const std::function<double(const Vec&)>& f, const Vec& x,
                                   double h_fd) const {
  check_time(t);
  check_point(x);
  const double h = h_fd > 0.0 ? h_fd : 1e-4 * std::max(1.0, x.norm());
  if (h >= 0.1 * injectivity_radius(t)) throw Error(ErrorCode::StencilOutOfDomain, "stencil step too large");
  const Mat u = orthonormal_frame(t, x);
  const double f0 = f(x);
  const Vec z = drift_in_frame(t, x, u);
  double lap = 0.0;
  double drift_term = 0.0;
  for (int a = 0; a < dim_; ++a) {
    const double fp = f(exp_base(kind_, x, h * u.col(a)));
    const double fm = f(exp_base(kind_, x, -h * u.col(a)));
    lap += (fp - 2.0 * f0 + fm) / (h * h);
    drift_term += z[a] * (fp - fm) / (2.0 * h);
  }
  return lap + drift_term;
}

Vec MetricFlow::covector_from_basis(const Vec& x, const Vec& w) const {
  const Mat e = tangent_basis(x);
  Vec out = e * w;
  if (kind_ == FlowKind::Hyperbolic) out[0] = -out[0];
  return out;
}

CurvatureData MetricFlow::curvature_bound() const {
  if (drift_.kind == DriftField::Kind::Custom) {
    CurvatureData c;
    const MetricFlow self = *this;
    c.K = [self](double t, const Vec& x) {
      FramePoint fp{t, x, self.orthonormal_frame(t, x)};
      const Mat r = self.rz_matrix(fp);
      Eigen::SelfAdjointEigenSolver<Mat> eig(r, Eigen::EigenvaluesOnly);
      return eig.eigenvalues().minCoeff();
    };
    c.time_only = false;
    c.label = "pointwise";
    return c;
  }
  const double lambda = drift_.kind == DriftField::Kind::LinearRadial ? drift_.lambda : 0.0;
  if (kind_ == FlowKind::Torus) {
    const std::vector<TimeFactor> axes = factors_;
    return CurvatureData::time_function(
        [axes, lambda](double t) {
          double m = kInf;
          for (const TimeFactor& a : axes) m = std::min(m, -0.5 * a.derivative(t) / a.value(t));
          return m - lambda;
        },
        "torus");
  }
  const TimeFactor c = factors_.front();
  const double ric = (dim_ - 1) * base_curvature();
  CurvatureData out = CurvatureData::time_function(
      [c, ric, lambda](double t) { return (ric - 0.5 * c.derivative(t)) / c.value(t) - lambda; },
      std::string(flow_kind_name(kind_)));
  return out;
}

}  // namespace mfl
