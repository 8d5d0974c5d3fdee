#pragma once

#include "mfl/inequalities.hpp"
#include "mfl/parallel.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace testutil {

using namespace mfl;

struct NamedFlow {
  std::string name;
  MetricFlow flow;
  double t;  ///< a representative time inside the horizon
};

/// Every builtin family, static and moving.
inline std::vector<NamedFlow> builtin_flows() {
  return {
      {"euclidean-2", MetricFlow::euclidean(2), 0.3},
      {"euclidean-3-shrinking", MetricFlow::euclidean(3, TimeFactor::exponential(1.0, -0.4)), 0.3},
      {"sphere-2", MetricFlow::sphere(2), 0.3},
      {"sphere-3-linear", MetricFlow::sphere(3, TimeFactor::linear(1.0, -0.5)), 0.3},
      {"hyperbolic-2", MetricFlow::hyperbolic(2), 0.3},
      {"hyperbolic-3-growing", MetricFlow::hyperbolic(3, TimeFactor::exponential(1.0, 0.5)), 0.3},
      {"torus-2-shrinking", MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.0)}), 0.3},
      {"torus-2-anisotropic",
       MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.0), TimeFactor::linear(2.0, 0.5)}), 0.3},
      {"ricci-sphere-2", MetricFlow::ricci_sphere(2), 0.2},
      {"ricci-sphere-3", MetricFlow::ricci_sphere(3), 0.1},
      {"euclidean-2-ou", MetricFlow::euclidean(2, TimeFactor::constant(), DriftField::linear_radial(-0.5)), 0.3},
  };
}

inline Vec gaussian(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

inline Vec base_point(const MetricFlow& flow) {
  Vec x = Vec::Zero(flow.ambient_dim());
  if (flow.kind() == FlowKind::Sphere || flow.kind() == FlowKind::Hyperbolic) x[0] = 1.0;
  if (flow.kind() == FlowKind::Torus) x.setConstant(1.0);
  return x;
}

/// A random point reached by a base-metric geodesic of length at most `reach`.
inline Vec random_point(const MetricFlow& flow, std::mt19937_64& rng, double reach = 1.0) {
  const Vec x0 = base_point(flow);
  const Mat e = flow.tangent_basis(x0);
  Vec w = gaussian(rng, flow.dim());
  std::uniform_real_distribution<double> u(0.0, reach);
  w *= u(rng) / std::max(w.norm(), 1e-12);
  return flow.project_point(exp_base(flow.kind(), x0, e * w));
}

inline Vec random_tangent(const MetricFlow& flow, const Vec& x, std::mt19937_64& rng) {
  return flow.tangent_basis(x) * gaussian(rng, flow.dim());
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

/// Point on the unit sphere S^2 at polar angle theta from the north pole (0,0,1), azimuth phi.
inline Vec polar(double theta, double phi = 0.0) {
  return vec({std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)});
}

inline bool within(const Estimate& e, double target, double k = 3.0) {
  return std::abs(e.mean - target) <= k * e.stderr_ + 1e-12;
}

/// Start point and smooth observable for weak-order checks on each family.
struct WeakCase {
  Vec x0;
  std::function<double(const Vec&)> f;
};

inline WeakCase weak_case(const MetricFlow& flow) {
  WeakCase c;
  c.x0 = base_point(flow);
  switch (flow.kind()) {
    case FlowKind::Sphere:
      c.x0.setZero();
      c.x0[0] = std::sin(0.5);
      c.x0[flow.ambient_dim() - 1] = std::cos(0.5);
      c.f = [](const Vec& x) { return x[x.size() - 1]; };
      break;
    case FlowKind::Hyperbolic:
      c.f = [](const Vec& x) { return x[0]; };
      break;
    case FlowKind::Torus:
      c.f = [](const Vec& x) { return std::cos(x[0]); };
      break;
    case FlowKind::Euclidean:
      c.x0[0] = 1.0;
      c.f = [](const Vec& x) { return x[0] * x[0]; };
      break;
  }
  return c;
}

struct WeakOrder {
  Estimate d1;  ///< E f(X^h) - E f(X^{h/2})
  Estimate d2;  ///< E f(X^{h/2}) - E f(X^{h/4})
  double order = 0.0;
  bool exact = false;  ///< both differences vanish to rounding
  Estimate fitted;     ///< weighted log2 slope over all level differences (jackknife stderr)
};

/// Weak-order estimate from step sizes coarse, coarse/2, ..., coarse/2^(levels-1),
/// all driven by one fine Brownian path per sample (and its negation), so the
/// differences carry little Monte Carlo noise.
inline WeakOrder weak_order(const MetricFlow& flow, const Vec& x0, const std::function<double(const Vec&)>& f,
                            double t, int coarse_steps, std::size_t n, std::uint64_t seed, int levels = 3) {
  const int d = flow.dim();
  const int fine = coarse_steps << (levels - 1);
  const double hf = t / fine;
  const Mat u0 = flow.orthonormal_frame(0.0, x0);
  BatchedMeans diffs(levels - 1, n);
  parallel_for(n, [&](std::size_t i) {
    const NoiseStream noise(seed, 77, i);
    std::vector<Vec> inc(fine);
    for (int k = 0; k < fine; ++k) inc[k] = noise.draw(k, d).dB * std::sqrt(hf);
    // Antithetic pair: the leading odd-order noise of the level differences cancels.
    std::vector<double> value(levels, 0.0);
    for (double sign : {1.0, -1.0}) {
      for (int level = 0; level < levels; ++level) {
        const int steps = coarse_steps << level;
        const int group = fine / steps;
        PathWalker w(flow, FramePoint{0.0, x0, u0}, PathGrid{0.0, t, steps}, noise);
        for (int k = 0; k < steps; ++k) {
          Vec dB = Vec::Zero(d);
          for (int j = 0; j < group; ++j) dB += inc[k * group + j];
          w.advance_with(sign * dB);
        }
        value[level] += 0.5 * f(w.state().x);
      }
    }
    for (int level = 0; level + 1 < levels; ++level) diffs.at(i, level) = value[level] - value[level + 1];
  });
  const VectorEstimate v = summarize([&] {
    std::vector<Vec> rows(n, Vec(2));
    for (std::size_t i = 0; i < n; ++i) rows[i] << diffs.at(i, 0), diffs.at(i, 1);
    return rows;
  }());
  WeakOrder w;
  w.d1 = {v.mean[0], v.stderr_[0], v.n};
  w.d2 = {v.mean[1], v.stderr_[1], v.n};
  w.exact = std::abs(w.d1.mean) < 1e-12 && std::abs(w.d2.mean) < 1e-12;
  w.order = std::log2(std::abs(w.d1.mean) / std::abs(w.d2.mean));
  if (!w.exact) {
    // Weights 2^-k follow the growth of the relative noise at finer levels.
    w.fitted = diffs.functional([](const Eigen::VectorXd& m) {
      double sw = 0, sk = 0, sy = 0, skk = 0, sky = 0;
      for (int k = 0; k < m.size(); ++k) {
        const double wk = std::ldexp(1.0, -k), y = std::log2(std::abs(m[k]));
        sw += wk;
        sk += wk * k;
        sy += wk * y;
        skk += wk * k * k;
        sky += wk * k * y;
      }
      return -(sw * sky - sk * sy) / (sw * skk - sk * sk);
    });
  }
  return w;
}

}  // namespace testutil
