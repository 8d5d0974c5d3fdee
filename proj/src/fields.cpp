#include "mfl/fields.hpp"

#include <cmath>
#include <sstream>

namespace mfl {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Vec unit(int n, int i) { return Vec::Unit(n, i); }

}  // namespace

namespace fields {

ScalarField constant(double v) {
  ScalarField f;
  f.value = [v](double, const Vec&) { return v; };
  f.differential = [](double, const Vec& x) { return Vec::Zero(x.size()).eval(); };
  f.descriptor = "constant(" + fmt(v) + ")";
  f.lower = v;
  f.upper = v;
  return f;
}

ScalarField coordinate(const MetricFlow& flow, int index, double offset, double scale) {
  if (index < 0 || index >= flow.ambient_dim()) throw Error(ErrorCode::InvalidArgument, "coordinate index out of range");
  ScalarField f;
  f.value = [=](double, const Vec& x) { return offset + scale * x[index]; };
  f.differential = [=](double, const Vec& x) { return (scale * unit(static_cast<int>(x.size()), index)).eval(); };
  f.descriptor = "coordinate(index=" + std::to_string(index) + ",offset=" + fmt(offset) + ",scale=" + fmt(scale) + ")";
  if (flow.kind() == FlowKind::Sphere) {
    f.lower = offset - std::abs(scale);
    f.upper = offset + std::abs(scale);
  } else if (flow.kind() == FlowKind::Torus) {
    f.lower = offset + std::min(0.0, scale * 2.0 * kPi);
    f.upper = offset + std::max(0.0, scale * 2.0 * kPi);
  }
  return f;
}

ScalarField linear(const Vec& a, double offset) {
  ScalarField f;
  f.value = [=](double, const Vec& x) { return offset + a.dot(x); };
  f.differential = [=](double, const Vec&) { return a; };
  std::string coeffs;
  for (int i = 0; i < a.size(); ++i) coeffs += (i ? "," : "") + fmt(a[i]);
  f.descriptor = "linear(a=[" + coeffs + "],offset=" + fmt(offset) + ")";
  if (a.isZero()) f.lower = f.upper = offset;
  return f;
}

ScalarField square(int index, double scale) {
  ScalarField f;
  f.value = [=](double, const Vec& x) { return scale * x[index] * x[index]; };
  f.differential = [=](double, const Vec& x) {
    return (2.0 * scale * x[index] * unit(static_cast<int>(x.size()), index)).eval();
  };
  f.descriptor = "square(index=" + std::to_string(index) + ",scale=" + fmt(scale) + ")";
  if (scale >= 0.0) f.lower = 0.0;
  else f.upper = 0.0;
  return f;
}

ScalarField sine(int index, double offset, double scale) {
  ScalarField f;
  f.value = [=](double, const Vec& x) { return offset + scale * std::sin(x[index]); };
  f.differential = [=](double, const Vec& x) {
    return (scale * std::cos(x[index]) * unit(static_cast<int>(x.size()), index)).eval();
  };
  f.descriptor = "sine(index=" + std::to_string(index) + ",offset=" + fmt(offset) + ",scale=" + fmt(scale) + ")";
  f.lower = offset - std::abs(scale);
  f.upper = offset + std::abs(scale);
  return f;
}

ScalarField gaussian_bump(const Vec& center, double width, double offset, double scale) {
  if (!(width > 0.0)) throw Error(ErrorCode::InvalidArgument, "bump width must be positive");
  ScalarField f;
  const double inv = 1.0 / (2.0 * width * width);
  f.value = [=](double, const Vec& x) { return offset + scale * std::exp(-(x - center).squaredNorm() * inv); };
  f.differential = [=](double, const Vec& x) {
    const Vec delta = x - center;
    return (-2.0 * inv * scale * std::exp(-delta.squaredNorm() * inv) * delta).eval();
  };
  std::string c;
  for (int i = 0; i < center.size(); ++i) c += (i ? "," : "") + fmt(center[i]);
  f.descriptor = "gaussian_bump(center=[" + c + "],width=" + fmt(width) + ",offset=" + fmt(offset) +
                 ",scale=" + fmt(scale) + ")";
  f.lower = offset + std::min(0.0, scale);
  f.upper = offset + std::max(0.0, scale);
  return f;
}

ScalarField soft_exp(int index, double cap) {
  if (!(cap > 0.0)) throw Error(ErrorCode::InvalidArgument, "cap must be positive");
  ScalarField f;
  f.value = [=](double, const Vec& x) { return std::exp(cap * std::tanh(x[index] / cap)); };
  f.differential = [=](double, const Vec& x) {
    const double th = std::tanh(x[index] / cap);
    return (std::exp(cap * th) * (1.0 - th * th) * unit(static_cast<int>(x.size()), index)).eval();
  };
  f.descriptor = "soft_exp(index=" + std::to_string(index) + ",cap=" + fmt(cap) + ")";
  f.lower = std::exp(-cap);
  f.upper = std::exp(cap);
  return f;
}

}  // namespace fields

ScalarField with_numeric_gradient(const MetricFlow& flow, ScalarField f, double h) {
  const auto value = f.value;
  const FlowKind kind = flow.kind();
  const MetricFlow copy = flow;
  f.differential = [value, kind, copy, h](double t, const Vec& x) {
    const Mat e = copy.tangent_basis(x);
    Vec w(e.cols());
    for (int a = 0; a < e.cols(); ++a) {
      const double fp = value(t, exp_base(kind, x, h * e.col(a)));
      const double fm = value(t, exp_base(kind, x, -h * e.col(a)));
      w[a] = (fp - fm) / (2.0 * h);
    }
    return copy.covector_from_basis(x, w);
  };
  return f;
}

Vec frame_gradient(const ScalarField& f, double t, const Vec& x, const Mat& u) {
  if (!f.has_gradient()) throw Error(ErrorCode::MissingGradient, "field " + f.descriptor + " has no gradient");
  return u.transpose() * f.differential(t, x);
}

double gradient_norm(const MetricFlow& flow, const ScalarField& f, double t, const Vec& x) {
  return frame_gradient(f, t, x, flow.orthonormal_frame(t, x)).norm();
}

double smooth_cutoff(double u) {
  if (u <= 0.5) return 1.0;
  if (u >= 1.0) return 0.0;
  const double v = 2.0 * u - 1.0;  // in (0, 1)
  const double a = std::exp(-1.0 / (1.0 - v));
  const double b = std::exp(-1.0 / v);
  return a / (a + b);
}

}  // namespace mfl
