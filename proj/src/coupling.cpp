#include "mfl/coupling.hpp"

#include "mfl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mfl {

namespace {

const double kSqrt2 = std::sqrt(2.0);

// Width of the band around the cut locus where the coupling map is dropped.
double cut_band(const MetricFlow& flow, double t, double factor) {
  switch (flow.kind()) {
    case FlowKind::Sphere: return factor * std::sqrt(flow.factor_at(t));
    case FlowKind::Torus: {
      double m = kInf;
      for (int i = 0; i < flow.dim(); ++i) m = std::min(m, flow.factor_at(t, i));
      return factor * std::sqrt(m);
    }
    default: return 0.0;
  }
}

// Chart-aware displacement from x to y, used only for its sign against the previous one.
Vec displacement(const MetricFlow& flow, const Vec& x, const Vec& y) {
  Vec d = y - x;
  if (flow.kind() == FlowKind::Torus) {
    for (int i = 0; i < d.size(); ++i) d[i] = wrap_difference(d[i]);
  }
  return d;
}

double displacement_dot(const MetricFlow& flow, const Vec& a, const Vec& b) {
  return flow.kind() == FlowKind::Hyperbolic ? minkowski(a, b) : a.dot(b);
}

// Components of an ambient tangent vector w in the orthonormal frame u.
Vec frame_coords(const MetricFlow& flow, const FramePoint& fp, const Vec& w) {
  Vec out(fp.u.cols());
  for (int k = 0; k < fp.u.cols(); ++k) out[k] = flow.inner(fp.t, fp.x, fp.u.col(k), w);
  return out;
}

std::optional<Geodesic> try_geodesic(const MetricFlow& flow, double t, const Vec& x, const Vec& y) {
  try {
    return flow.distance(t, x, y);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::CutLocusAmbiguity) throw;
    return std::nullopt;
  }
}

}  // namespace

const char* coupling_mode_name(CouplingMode mode) noexcept {
  return mode == CouplingMode::Parallel ? "parallel" : "mirror";
}

ExtraDrift ExtraDrift::contract(double c) {
  ExtraDrift u;
  u.strength = c;
  u.descriptor = "contract(" + std::to_string(c) + ")";
  u.fn = [c](const MetricFlow&, double, const Vec&, const Vec& y, const Geodesic& geo) {
    if (geo.length == 0.0) return Vec::Zero(y.size()).eval();
    return (-c * geo.v1).eval();
  };
  return u;
}

CoupledPair couple_step(const MetricFlow& flow, const CoupledPair& pair, const Vec& dB, const Vec& dB_prime,
                        double uniform, double h, const CouplingOptions& opts, StepRecord* rec) {
  const double t = pair.t;
  CoupledPair next;
  next.t = t + h;
  if (pair.coupled) {
    next.a = horizontal_step(flow, pair.a, dB, h);
    next.b = next.a;
    next.coupled = true;
    if (rec) *rec = StepRecord{0.0, false};
    return next;
  }

  const std::optional<Geodesic> geo = try_geodesic(flow, t, pair.a.x, pair.b.x);
  bool regularized = !geo || flow.cut_margin(t, pair.a.x, pair.b.x) < cut_band(flow, t, opts.eps_cut_factor);
  Vec dB_tilde;
  if (!regularized && geo->length > 0.0) {
    const Vec w = pair.a.u * dB;
    const Vec mapped = opts.mode == CouplingMode::Parallel ? flow.parallel_transport(t, *geo, w)
                                                           : flow.mirror_map(t, *geo, w);
    dB_tilde = frame_coords(flow, pair.b, mapped);
  } else {
    regularized = regularized || !geo;
    dB_tilde = regularized ? dB_prime : dB;
  }
  if (opts.U && geo) {
    const Vec u = opts.U->fn(flow, t, pair.a.x, pair.b.x, *geo);
    dB_tilde += (h / kSqrt2) * frame_coords(flow, pair.b, u);
  }

  next.a = horizontal_step(flow, pair.a, dB, h);
  next.b = horizontal_step(flow, pair.b, dB_tilde, h);

  const double rho_prev = geo ? geo->length : flow.injectivity_radius(t);
  const double rho = safe_distance(flow, next.t, next.a.x, next.b.x);
  bool hit = rho <= opts.delta_couple;
  if (!hit && opts.mode == CouplingMode::Mirror && !regularized) {
    // Reflection drives rho through zero between nodes: a flipped displacement
    // means the pair crossed, otherwise a bridge from rho_prev to rho with
    // quadratic variation 8 per unit time hits zero with the given probability.
    const Vec before = displacement(flow, pair.a.x, pair.b.x);
    const Vec after = displacement(flow, next.a.x, next.b.x);
    // A sign flip from wrapping around a torus moves the displacement by about a
    // circumference; a genuine crossing moves it by rho_prev + rho.
    const bool near = rho_prev + rho < flow.injectivity_radius(next.t);
    if (near && displacement_dot(flow, before, after) < 0.0) hit = true;
    else if (opts.bridge && uniform < std::exp(-rho_prev * rho / (4.0 * h))) hit = true;
  }
  if (hit) {
    next.b = next.a;
    next.coupled = true;
  }
  if (rec) *rec = StepRecord{next.coupled ? 0.0 : rho, regularized};
  return next;
}

Estimate CouplingEnsemble::coupled_by(double t) const {
  std::vector<double> ind(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) ind[i] = paths[i].T0 && *paths[i].T0 <= t + 1e-12 ? 1.0 : 0.0;
  return summarize(ind);
}

std::vector<double> CouplingEnsemble::terminal_rho() const {
  std::vector<double> out(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) out[i] = paths[i].rho_end;
  return out;
}

CouplingEnsemble simulate_coupling(const MetricFlow& flow, const Vec& x, const Vec& y, double s, double t,
                                   const McConfig& mc, const CouplingOptions& opts) {
  if (mc.n_paths < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two paths");
  check_interval(flow, s, t);
  flow.check_point(x);
  flow.check_point(y);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const int d = flow.dim();
  const Mat ua = flow.orthonormal_frame(s, x);
  const Mat ub = flow.orthonormal_frame(s, y);
  const double rho0 = safe_distance(flow, s, x, y);

  CouplingEnsemble ens;
  ens.grid = grid;
  ens.mode = opts.mode;
  ens.paths.resize(mc.n_paths);
  parallel_for(mc.n_paths, [&](std::size_t i) {
    const NoiseStream noise(mc.seed, mc.task, i);
    CouplingPath& out = ens.paths[i];
    const bool record = i < opts.record_paths;
    CoupledPair pair{s, FramePoint{s, x, ua}, FramePoint{s, y, ub}, rho0 <= opts.delta_couple};
    if (pair.coupled) {
      pair.b = pair.a;
      out.T0 = s;
    }
    if (record) {
      out.rho.reserve(grid.steps + 1);
      out.regularized.reserve(grid.steps);
      out.rho.push_back(pair.coupled ? 0.0 : rho0);
    }
    const double sh = std::sqrt(grid.h());
    for (int k = 0; k < grid.steps; ++k) {
      const StepNoise z = noise.draw(static_cast<std::uint64_t>(k), d);
      StepRecord r;
      pair = couple_step(flow, pair, sh * z.dB, sh * z.dB_prime, z.uniform, grid.h(), opts, &r);
      pair.t = pair.a.t = pair.b.t = grid.time(k + 1);
      if (pair.coupled && !out.T0) out.T0 = pair.t;
      if (r.regularized) ++out.regularized_steps;
      if (record) {
        out.rho.push_back(r.rho);
        out.regularized.push_back(r.regularized ? 1 : 0);
      }
    }
    out.end_a = pair.a.x;
    out.end_b = pair.b.x;
    out.rho_end = pair.coupled ? 0.0 : safe_distance(flow, t, pair.a.x, pair.b.x);
  });
  KahanSum reg;
  for (const auto& p : ens.paths) reg.add(static_cast<double>(p.regularized_steps));
  ens.regularized_fraction = reg.value() / (static_cast<double>(mc.n_paths) * grid.steps);
  return ens;
}

namespace {

struct JacobiSetup {
  double rho = 0.0;
  double kappa = 0.0;
  Geodesic geo;
};

JacobiSetup jacobi_setup(const MetricFlow& flow, double t, const Vec& x, const Vec& y, int n_quad) {
  if (n_quad < 2 || n_quad % 2) throw Error(ErrorCode::InvalidArgument, "n_quad must be even and at least 2");
  JacobiSetup js;
  js.geo = flow.distance(t, x, y);
  js.rho = js.geo.length;
  if (js.rho == 0.0) throw Error(ErrorCode::InvalidArgument, "index form needs distinct points");
  js.kappa = flow.conformal() ? flow.sectional_curvature(t) : 0.0;
  if (js.kappa > 0.0 && std::sqrt(js.kappa) * js.rho >= kPi) {
    throw Error(ErrorCode::NoMinimizer, "geodesic is not minimizing");
  }
  return js;
}

double drift_terms(const MetricFlow& flow, double t, const Geodesic& geo) {
  if (flow.drift().kind == DriftField::Kind::Zero) return 0.0;
  const Vec zx = flow.drift().value(t, geo.x);
  const Vec zy = flow.drift().value(t, geo.y);
  return -flow.inner(t, geo.x, zx, geo.v0) + flow.inner(t, geo.y, zy, geo.v1);
}

double simpson(int n, double a, double b, const std::function<double(double)>& fn) {
  const double h = (b - a) / n;
  double acc = fn(a) + fn(b);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * fn(a + i * h);
  return acc * h / 3.0;
}

}  // namespace

double index_form(const MetricFlow& flow, double t, const Vec& x, const Vec& y, int n_quad) {
  const JacobiSetup js = jacobi_setup(flow, t, x, y, n_quad);
  const double k = js.kappa;
  const double rho = js.rho;
  double energy = 0.0;
  if (k != 0.0) {
    // u(s) = C(s - rho/2) / C(rho/2) with C = cos or cosh.
    const double r = std::sqrt(std::abs(k));
    auto integrand = [&](double s) {
      const double z = r * (s - 0.5 * rho);
      double u, du;
      if (k > 0.0) {
        u = std::cos(z) / std::cos(0.5 * r * rho);
        du = -r * std::sin(z) / std::cos(0.5 * r * rho);
      } else {
        u = std::cosh(z) / std::cosh(0.5 * r * rho);
        du = r * std::sinh(z) / std::cosh(0.5 * r * rho);
      }
      return du * du - k * u * u;
    };
    energy = simpson(n_quad, 0.0, rho, integrand);
  }
  return (flow.dim() - 1) * energy + drift_terms(flow, t, js.geo);
}

double index_form_numeric(const MetricFlow& flow, double t, const Vec& x, const Vec& y, int n_quad) {
  const JacobiSetup js = jacobi_setup(flow, t, x, y, n_quad);
  const double k = js.kappa;
  const double h = js.rho / n_quad;
  // u'' = -k u; superpose the shots (u, u') = (1, 0) and (0, 1).
  using State = Eigen::Vector2d;
  auto rhs = [k](const State& s) { return State(s[1], -k * s[0]); };
  auto shoot = [&](State s) {
    std::vector<State> out{ s };
    for (int i = 0; i < n_quad; ++i) {
      const State k1 = rhs(s);
      const State k2 = rhs(s + 0.5 * h * k1);
      const State k3 = rhs(s + 0.5 * h * k2);
      const State k4 = rhs(s + h * k3);
      s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      out.push_back(s);
    }
    return out;
  };
  const auto a = shoot(State(1.0, 0.0));
  const auto b = shoot(State(0.0, 1.0));
  if (std::abs(b.back()[0]) < 1e-14) throw Error(ErrorCode::NoMinimizer, "conjugate point on the geodesic");
  const double slope = (1.0 - a.back()[0]) / b.back()[0];
  double acc = 0.0;
  for (int i = 0; i <= n_quad; ++i) {
    const State s = a[i] + slope * b[i];
    const double w = (i == 0 || i == n_quad) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * (s[1] * s[1] - k * s[0] * s[0]);
  }
  return (flow.dim() - 1) * acc * h / 3.0 + drift_terms(flow, t, js.geo);
}

double rho_drift_bound(const MetricFlow& flow, double t, const Vec& x, const Vec& y,
                       const std::optional<ExtraDrift>& U) {
  const Geodesic geo = flow.distance(t, x, y);
  if (geo.length == 0.0) return 0.0;
  const double rho = geo.length;
  double metric_term = 0.0;
  if (flow.conformal()) {
    metric_term = 0.5 * rho * flow.factor_derivative(t) / flow.factor_at(t);
  } else {
    auto integrand = [&](double s) {
      const Vec p = geo.sample(s);
      const Vec vel = transport_along(flow.kind(), geo.x, (s / rho) * geo.angle * geo.e, geo.v0);
      return flow.dt_inner(t, p, vel, vel);
    };
    metric_term = 0.5 * simpson(64, 0.0, rho, integrand);
  }
  double u_term = 0.0;
  if (U) u_term = flow.inner(t, y, U->fn(flow, t, x, y, geo), geo.v1);
  return metric_term + index_form(flow, t, x, y) + u_term;
}

Estimate empirical_rho_drift(const CouplingEnsemble& ens, int window_steps, int start_node) {
  if (window_steps < 1 || start_node < 0 || start_node + window_steps > ens.grid.steps) {
    throw Error(ErrorCode::InvalidArgument, "window outside the grid");
  }
  const int end = start_node + window_steps;
  const double dt = ens.grid.time(end) - ens.grid.time(start_node);
  std::vector<double> samples;
  for (const auto& p : ens.paths) {
    if (p.rho.empty()) continue;
    if (p.T0 && *p.T0 <= ens.grid.time(end) + 1e-12) continue;
    samples.push_back((p.rho[end] - p.rho[start_node]) / dt);
  }
  if (samples.size() < 2) throw Error(ErrorCode::InsufficientSamples, "too few uncoupled recorded paths");
  return summarize(samples);
}

Estimate wasserstein_upper(const CouplingEnsemble& ens, double p) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "p must be at least 1");
  std::vector<double> powered = ens.terminal_rho();
  for (double& v : powered) v = std::pow(v, p);
  const Estimate m = summarize(powered);
  Estimate out;
  out.n = m.n;
  if (m.mean <= 0.0) {
    out.mean = 0.0;
    out.stderr_ = p == 1.0 ? m.stderr_ : 0.0;
    return out;
  }
  out.mean = std::pow(m.mean, 1.0 / p);
  out.stderr_ = out.mean / (p * m.mean) * m.stderr_;
  return out;
}

Estimate wasserstein_upper(const MetricFlow& flow, const Vec& x, const Vec& y, double s, double t, double p,
                           const McConfig& mc, const CouplingOptions& opts) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "p must be at least 1");
  if ((x - y).norm() == 0.0) {
    check_interval(flow, s, t);
    return Estimate{0.0, 0.0, mc.n_paths};
  }
  return wasserstein_upper(simulate_coupling(flow, x, y, s, t, mc, opts), p);
}

Vec test_embedding(const MetricFlow& flow, const Vec& x) {
  if (flow.kind() != FlowKind::Torus) return x;
  Vec out(2 * x.size());
  for (int i = 0; i < x.size(); ++i) {
    out[2 * i] = std::cos(x[i]);
    out[2 * i + 1] = std::sin(x[i]);
  }
  return out;
}

TwoSampleTest energy_distance_test(const std::vector<Vec>& a, const std::vector<Vec>& b, int n_perm,
                                   std::uint64_t seed) {
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  if (na < 2 || nb < 2) throw Error(ErrorCode::InsufficientSamples, "energy test needs two points per sample");
  const std::size_t n = na + nb;
  std::vector<const Vec*> pts;
  pts.reserve(n);
  for (const auto& v : a) pts.push_back(&v);
  for (const auto& v : b) pts.push_back(&v);
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i * n + i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = (*pts[i] - *pts[j]).norm();
  }
  auto statistic = [&](const std::vector<std::size_t>& perm) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool ia = i < na;
      const double* row = &dist[perm[i] * n];
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = row[perm[j]];
        const bool ja = j < na;
        if (ia && ja) aa += v;
        else if (!ia && !ja) bb += v;
        else ab += v;
      }
    }
    const double fa = static_cast<double>(na), fb = static_cast<double>(nb);
    return 2.0 * ab / (fa * fb) - 2.0 * aa / (fa * fa) - 2.0 * bb / (fb * fb);
  };
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  TwoSampleTest out;
  out.statistic = statistic(perm);
  SplitMix64 rng(mix64(seed ^ 0x243f6a8885a308d3ULL));
  int exceed = 0;
  for (int r = 0; r < n_perm; ++r) {
    std::shuffle(perm.begin(), perm.end(), rng);
    if (statistic(perm) >= out.statistic) ++exceed;
  }
  out.p_value = (1.0 + exceed) / (1.0 + n_perm);
  return out;
}

}  // namespace mfl
