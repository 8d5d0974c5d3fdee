#include "mfl/gradient.hpp"

#include "mfl/parallel.hpp"

#include <atomic>
#include <cmath>

namespace mfl {

namespace {

const double kSqrt2 = std::sqrt(2.0);

void check_mc(const McConfig& mc) {
  if (mc.n_paths < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two paths");
  if (!(mc.step > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
}

bool below_noise(const Estimate& e) { return 2.0 * 1.96 * e.stderr_ > std::abs(e.mean); }

}  // namespace

Mat start_frame(const MetricFlow& flow, double s, const Vec& x, const Mat& frame0) {
  if (frame0.size() == 0) return flow.orthonormal_frame(s, x);
  flow.require_orthonormal(s, x, frame0);
  return frame0;
}

// ---------------------------------------------------------------------------
// HProfile

HProfile HProfile::time_changed(double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  HProfile h;
  h.variant = Variant::TimeChanged;
  h.radius = radius;
  return h;
}

HProfile HProfile::custom(std::vector<std::pair<double, double>> knots) {
  if (knots.size() < 2) throw Error(ErrorCode::InvalidArgument, "custom profile needs two knots");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i].first > knots[i - 1].first)) throw Error(ErrorCode::InvalidArgument, "knots must increase");
  }
  if (std::abs(knots.front().second) > 1e-12 || std::abs(knots.back().second - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "profile must run from 0 to 1");
  }
  HProfile h;
  h.variant = Variant::Custom;
  h.table = std::move(knots);
  return h;
}

double HProfile::slope(double s, double t, double r) const {
  switch (variant) {
    case Variant::Linear: return 1.0 / (t - s);
    case Variant::Custom: {
      // Knots are given on the unit interval and mapped onto [s, t].
      const double u = (r - s) / (t - s);
      for (std::size_t i = 1; i < table.size(); ++i) {
        if (u < table[i].first || i + 1 == table.size()) {
          return (table[i].second - table[i - 1].second) / (table[i].first - table[i - 1].first) / (t - s);
        }
      }
      return 0.0;
    }
    case Variant::TimeChanged:
      throw Error(ErrorCode::InvalidArgument, "time-changed profile is path dependent; use bismut_local");
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Semigroup and global estimators

Estimate semigroup(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                   const McConfig& mc) {
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const Mat u0 = flow.orthonormal_frame(s, x);
  std::vector<double> values(mc.n_paths);
  parallel_for(mc.n_paths, [&](std::size_t i) {
    PathWalker w(flow, FramePoint{s, x, u0}, grid, NoiseStream(mc.seed, mc.task, i));
    while (!w.done()) w.advance();
    values[i] = f(t, w.state().x);
  });
  return summarize(values);
}

namespace {

struct GlobalSample {
  Vec pathwise;
  Vec integrated;
};

GlobalSample run_global(const MetricFlow& flow, const ScalarField& f, const Vec& x, const Mat& u0,
                        const PathGrid& grid, const HProfile& h, const NoiseStream& noise, bool want_pathwise) {
  const int d = flow.dim();
  PathWalker w(flow, FramePoint{grid.s, x, u0}, grid, noise);
  DampedTransportStepper q(flow, w.state());
  Vec ito = Vec::Zero(d);
  while (!w.done()) {
    const Vec& dB = w.increment();
    ito.noalias() += h.slope(grid.s, grid.t, w.state().t) * (q.Q().transpose() * dB);
    w.advance();
    q.advance(w.state(), grid.h());
  }
  GlobalSample out;
  const FramePoint& end = w.state();
  out.integrated = f(grid.t, end.x) / kSqrt2 * ito;
  if (want_pathwise) out.pathwise = q.Q().transpose() * frame_gradient(f, grid.t, end.x, end.u);
  return out;
}

}  // namespace

VectorEstimate bismut_pathwise(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                               const Mat& frame0, const McConfig& mc) {
  if (!f.has_gradient()) throw Error(ErrorCode::MissingGradient, "pathwise formula needs a gradient");
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  const Mat u0 = start_frame(flow, s, x, frame0);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  std::vector<Vec> samples(mc.n_paths);
  parallel_for(mc.n_paths, [&](std::size_t i) {
    PathWalker w(flow, FramePoint{s, x, u0}, grid, NoiseStream(mc.seed, mc.task, i));
    DampedTransportStepper q(flow, w.state());
    while (!w.done()) {
      w.advance();
      q.advance(w.state(), grid.h());
    }
    samples[i] = q.Q().transpose() * frame_gradient(f, t, w.state().x, w.state().u);
  });
  return summarize(samples);
}

VectorEstimate bismut_integrated(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                                 const Mat& frame0, const HProfile& h, const McConfig& mc) {
  if (!(t > s)) throw Error(ErrorCode::DegenerateInterval, "integrated formula needs t > s");
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  const Mat u0 = start_frame(flow, s, x, frame0);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  std::vector<Vec> samples(mc.n_paths);
  parallel_for(mc.n_paths, [&](std::size_t i) {
    samples[i] = run_global(flow, f, x, u0, grid, h, NoiseStream(mc.seed, mc.task, i), false).integrated;
  });
  return summarize(samples);
}

BismutPair bismut_both(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                       const Mat& frame0, const McConfig& mc) {
  if (!f.has_gradient()) throw Error(ErrorCode::MissingGradient, "pathwise formula needs a gradient");
  if (!(t > s)) throw Error(ErrorCode::DegenerateInterval, "integrated formula needs t > s");
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  const Mat u0 = start_frame(flow, s, x, frame0);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const HProfile h = HProfile::linear();
  std::vector<Vec> pw(mc.n_paths), in(mc.n_paths), gap(mc.n_paths);
  parallel_for(mc.n_paths, [&](std::size_t i) {
    GlobalSample g = run_global(flow, f, x, u0, grid, h, NoiseStream(mc.seed, mc.task, i), true);
    gap[i] = g.pathwise - g.integrated;
    pw[i] = std::move(g.pathwise);
    in[i] = std::move(g.integrated);
  });
  BismutPair out;
  out.pathwise = summarize(pw);
  out.integrated = summarize(in);
  out.gap_norm = summarize(gap).norm();
  return out;
}

// ---------------------------------------------------------------------------
// Localized estimator

LocalEstimate bismut_local(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                           const Mat& frame0, const LocalOptions& opts, const McConfig& mc) {
  if (!(t > s)) throw Error(ErrorCode::DegenerateInterval, "local formula needs t > s");
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  const double R = opts.radius;
  if (!(R > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  if (R >= std::min(flow.injectivity_radius(s), flow.injectivity_radius(t))) {
    throw Error(ErrorCode::RadiusTooLarge, "radius reaches the cut locus");
  }
  const Mat u0 = start_frame(flow, s, x, frame0);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const std::size_t n_inner =
      opts.n_inner ? opts.n_inner : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(mc.n_paths))));
  const std::size_t budget = opts.inner_budget ? opts.inner_budget : 100 * mc.n_paths;
  const double span = t - s;
  const int d = flow.dim();

  std::vector<Vec> samples(mc.n_paths);
  std::vector<double> half_delta(mc.n_paths, 0.0);
  std::vector<char> exited(mc.n_paths, 0), incomplete(mc.n_paths, 0);
  std::atomic<std::size_t> inner_used{0};

  parallel_for(mc.n_paths, [&](std::size_t i) {
    const NoiseStream noise(mc.seed, mc.task, i);
    PathWalker w(flow, FramePoint{s, x, u0}, grid, noise);
    DampedTransportStepper q(flow, w.state());
    Vec ito = Vec::Zero(d);
    double clock = 0.0;
    bool out_of_ball = false;
    while (!w.done()) {
      const FramePoint& fp = w.state();
      const double rho = safe_distance(flow, fp.t, x, fp.x);
      if (rho >= R) {
        out_of_ball = true;
        break;
      }
      const double fc = std::cos(kPi * rho / (2.0 * R));
      const double h = grid.h();
      const double dclock = std::min(h / (fc * fc), span - clock);
      if (dclock > 0.0) {
        ito.noalias() += (dclock / h / span) * (q.Q().transpose() * w.increment());
        clock += dclock;
      }
      w.advance();
      q.advance(w.state(), h);
    }
    if (!out_of_ball) {
      const FramePoint& fp = w.state();
      out_of_ball = safe_distance(flow, fp.t, x, fp.x) >= R && clock < span;
    }
    if (clock < span * (1.0 - 1e-12)) incomplete[i] = 1;

    double F = 0.0;
    const FramePoint& stop = w.state();
    if (out_of_ball && stop.t < t) {
      exited[i] = 1;
      if (inner_used.fetch_add(n_inner) + n_inner > budget) {
        throw Error(ErrorCode::NestedBudgetExceeded, "inner path budget exhausted");
      }
      const PathGrid inner_grid = PathGrid::make(stop.t, t, mc.step);
      const NoiseStream child = noise.child(1);
      KahanSum all, half;
      for (std::size_t j = 0; j < n_inner; ++j) {
        PathWalker iw(flow, stop, inner_grid, NoiseStream(child.master_seed(), child.task_id(), j));
        while (!iw.done()) iw.advance();
        const double v = f(t, iw.state().x);
        all.add(v);
        if (j < n_inner / 2) half.add(v);
      }
      F = all.value() / static_cast<double>(n_inner);
      if (n_inner >= 2) half_delta[i] = (half.value() / static_cast<double>(n_inner / 2) - F);
    } else {
      while (!w.done()) w.advance();
      F = f(t, w.state().x);
    }
    samples[i] = F / kSqrt2 * ito;
    half_delta[i] *= ito.norm() / kSqrt2;
  });

  LocalEstimate out;
  out.estimate = summarize(samples);
  for (std::size_t i = 0; i < mc.n_paths; ++i) {
    out.exits += static_cast<std::size_t>(exited[i]);
    out.incomplete += static_cast<std::size_t>(incomplete[i]);
  }
  KahanSum bias;
  for (double v : half_delta) bias.add(v);
  out.nested_bias_delta = std::abs(bias.value()) / static_cast<double>(mc.n_paths);
  return out;
}

// ---------------------------------------------------------------------------
// Normal linear field

ScalarField normal_linear_field(const MetricFlow& flow, double s, const Vec& x, const Vec& X, double r_c) {
  flow.check_time(s);
  flow.check_point(x);
  if (!(flow.norm(s, x, X) > 0.0)) throw Error(ErrorCode::InvalidArgument, "X must be non-zero");
  if (!(r_c > 0.0) || r_c >= flow.injectivity_radius(s)) {
    throw Error(ErrorCode::RadiusTooLarge, "cutoff radius reaches the cut locus");
  }
  const MetricFlow copy = flow;
  ScalarField f;
  f.value = [copy, s, x, X, r_c](double, const Vec& y) {
    Geodesic g;
    try {
      g = copy.distance(s, x, y);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CutLocusAmbiguity) return 0.0;
      throw;
    }
    const double chi = smooth_cutoff(g.length / r_c);
    if (chi == 0.0) return 0.0;
    return chi * g.length * copy.inner(s, x, g.v0, X);
  };
  f.descriptor = "normal_linear(cutoff=" + std::to_string(r_c) + ")";
  return with_numeric_gradient(flow, std::move(f));
}

// ---------------------------------------------------------------------------
// Curvature recovery

namespace {

// (n + y) log(1 + y/n) - y
double entropy_kernel(double n, double y) { return (n + y) * std::log1p(y / n) - y; }

// (1 + y/n)^q - 1
double power_kernel(double n, double y, double q) { return std::expm1(q * std::log1p(y / n)); }

struct Layout {
  int d = 0;
  int width = 0;
  int f = 0, f2 = 1, gp = 2, g2 = 3, pw = 4, c = 0, c2 = 0, psi_n = 0, a_n = 0, psi_2n = 0, a_2n = 0;

  explicit Layout(int dim) : d(dim) {
    c = pw + d;
    c2 = c + 1;
    psi_n = c2 + 1;
    a_n = psi_n + 1;
    psi_2n = a_n + 1;
    a_2n = psi_2n + 1;
    width = a_2n + 1;
  }
};

}  // namespace

RecoveryBundle curvature_recover(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                 const RecoveryOptions& opts) {
  flow.check_point(x);
  if (std::abs(flow.norm(s, x, X) - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "X must be g_s-unit");
  if (opts.steps < 4 || opts.steps % 4 != 0) throw Error(ErrorCode::InvalidArgument, "steps must be a multiple of 4");
  if (!(opts.p_var > 1.0)) throw Error(ErrorCode::InvalidArgument, "variance formula needs p > 1");
  if (!(opts.p_grad > 0.0)) throw Error(ErrorCode::InvalidArgument, "gradient formula needs p > 0");
  if (!(opts.t1 > 0.0)) throw Error(ErrorCode::DegenerateInterval, "t1 must be positive");
  if (opts.n_paths < 64) throw Error(ErrorCode::InsufficientSamples, "too few paths for recovery");
  const double t2 = s + 2.0 * opts.t1;
  check_interval(flow, s, t2);

  const double inj = std::min(flow.injectivity_radius(s), flow.injectivity_radius(t2));
  const double r_c = opts.cutoff > 0.0 ? opts.cutoff : std::min(0.9 * inj, 10.0);
  const ScalarField f = normal_linear_field(flow, s, x, X, r_c);
  const Mat u0 = flow.orthonormal_frame(s, x);
  Vec a(flow.dim());
  for (int b = 0; b < flow.dim(); ++b) a[b] = flow.inner(s, x, u0.col(b), X);

  PathGrid grid;
  grid.s = s;
  grid.t = t2;
  grid.steps = opts.steps;
  const int slots[3] = {opts.steps / 4, opts.steps / 2, opts.steps};
  const Layout L(flow.dim());
  const double n1 = opts.shift;
  const double n2 = 2.0 * opts.shift;
  const double qv = 2.0 / opts.p_var;

  BatchedMeans table(static_cast<std::size_t>(3 * L.width), opts.n_paths);
  parallel_for(opts.n_paths, [&](std::size_t i) {
    PathWalker w(flow, FramePoint{s, x, u0}, grid, NoiseStream(opts.seed, opts.task, i));
    DampedTransportStepper q(flow, w.state());
    Vec W = Vec::Zero(flow.dim());
    int slot = 0;
    while (!w.done()) {
      W += w.increment();
      w.advance();
      q.advance(w.state(), grid.h());
      if (w.k() == slots[slot]) {
        const FramePoint& fp = w.state();
        const std::size_t base = static_cast<std::size_t>(slot * L.width);
        const double fv = f(fp.t, fp.x);
        const Vec grad = frame_gradient(f, fp.t, fp.x, fp.u);
        const double g2 = grad.squaredNorm();
        const Vec pw = q.Q().transpose() * grad;
        const double c = kSqrt2 * a.dot(W);
        table.at(i, base + L.f) = fv;
        table.at(i, base + L.f2) = fv * fv;
        table.at(i, base + L.gp) = std::pow(g2, 0.5 * opts.p_grad);
        table.at(i, base + L.g2) = g2;
        for (int b = 0; b < flow.dim(); ++b) table.at(i, base + L.pw + b) = pw[b];
        table.at(i, base + L.c) = c;
        table.at(i, base + L.c2) = c * c;
        table.at(i, base + L.psi_n) = entropy_kernel(n1, fv);
        table.at(i, base + L.a_n) = power_kernel(n1, fv, qv);
        table.at(i, base + L.psi_2n) = entropy_kernel(n2, fv);
        table.at(i, base + L.a_2n) = power_kernel(n2, fv, qv);
        ++slot;
      }
    }
  });

  const double taus[3] = {grid.time(slots[0]) - s, grid.time(slots[1]) - s, grid.time(slots[2]) - s};
  std::vector<std::size_t> controls;
  Eigen::VectorXd control_means(6);
  for (int j = 0; j < 3; ++j) {
    controls.push_back(static_cast<std::size_t>(j * L.width + L.c));
    controls.push_back(static_cast<std::size_t>(j * L.width + L.c2));
    control_means[2 * j] = 0.0;
    control_means[2 * j + 1] = 2.0 * taus[j] * a.squaredNorm();
  }

  auto pw_sq = [&](const Eigen::VectorXd& m, std::size_t base) {
    double acc = 0.0;
    for (int b = 0; b < L.d; ++b) acc += m[base + L.pw + b] * m[base + L.pw + b];
    return acc;
  };
  using Slot = std::function<double(const Eigen::VectorXd&, int)>;
  const Slot grad_formula = [&](const Eigen::VectorXd& m, int j) {
    const std::size_t base = static_cast<std::size_t>(j * L.width);
    const double p = opts.p_grad;
    return (m[base + L.gp] - std::pow(pw_sq(m, base), 0.5 * p)) / (p * taus[j]);
  };
  auto variance_formula = [&](bool doubled) {
    return Slot([&, doubled](const Eigen::VectorXd& m, int j) {
      const std::size_t base = static_cast<std::size_t>(j * L.width);
      const double n = doubled ? n2 : n1;
      const double A = m[base + (doubled ? L.a_2n : L.a_n)];
      const double p = opts.p_var;
      const double D = n * n * (2.0 * m[base + L.f] / n + m[base + L.f2] / (n * n) - std::expm1(p * std::log1p(A)));
      return (p * D / (4.0 * (p - 1.0) * taus[j]) - pw_sq(m, base)) / taus[j];
    });
  };
  auto entropy_formula = [&](bool doubled) {
    return Slot([&, doubled](const Eigen::VectorXd& m, int j) {
      const std::size_t base = static_cast<std::size_t>(j * L.width);
      const double n = doubled ? n2 : n1;
      const double mf = m[base + L.f];
      const double ent = m[base + (doubled ? L.psi_2n : L.psi_n)] - entropy_kernel(n, mf);
      return ((n + mf) * ent - taus[j] * pw_sq(m, base)) / (taus[j] * taus[j]);
    });
  };

  auto reduce = [&](const std::function<double(const Eigen::VectorXd&)>& g) {
    if (opts.control_variate) return table.controlled_functional(g, controls, control_means, opts.batches);
    return table.functional(g, opts.batches);
  };
  auto build = [&](const std::string& name, const Slot& v, const Slot& v2n) {
    RecoveryResult r;
    r.formula = name;
    r.value = reduce([&](const Eigen::VectorXd& m) { return 2.0 * v(m, 1) - v(m, 2); });
    r.at_t1 = reduce([&](const Eigen::VectorXd& m) { return v(m, 1); });
    r.at_t2 = reduce([&](const Eigen::VectorXd& m) { return v(m, 2); });
    r.half_grid = reduce([&](const Eigen::VectorXd& m) { return 2.0 * v(m, 0) - v(m, 1); });
    r.shifted_2n = reduce([&](const Eigen::VectorXd& m) { return 2.0 * v2n(m, 1) - v2n(m, 2); });
    r.below_noise = below_noise(r.value);
    if (r.below_noise && opts.strict) {
      throw Error(ErrorCode::SignalBelowNoise, name + " recovery is below its noise level");
    }
    return r;
  };

  RecoveryBundle out;
  out.grad = build("gradient", grad_formula, grad_formula);
  out.variance = build("variance", variance_formula(false), variance_formula(true));
  out.entropy = build("entropy", entropy_formula(false), entropy_formula(true));
  return out;
}

RecoveryResult curvature_recover_grad(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                      const RecoveryOptions& opts) {
  return curvature_recover(flow, s, x, X, opts).grad;
}

RecoveryResult curvature_recover_variance(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                          const RecoveryOptions& opts) {
  return curvature_recover(flow, s, x, X, opts).variance;
}

RecoveryResult curvature_recover_entropy(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                         const RecoveryOptions& opts) {
  return curvature_recover(flow, s, x, X, opts).entropy;
}

// ---------------------------------------------------------------------------
// Kolmogorov equations

KolmogorovResidual kolmogorov_residual(const MetricFlow& flow, const ScalarField& f, double s, double t,
                                       const Vec& x, const McConfig& mc, double delta, double h_fd) {
  check_mc(mc);
  flow.check_point(x);
  if (!(delta > 0.0) || !(h_fd > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta and h_fd must be positive");
  if (t - s < 2.0 * delta) throw Error(ErrorCode::DegenerateInterval, "interval shorter than 2 delta");
  check_interval(flow, s, t + delta);
  const int per_delta = std::max(1, static_cast<int>(std::lround(delta / mc.step)));
  const double h = delta / per_delta;
  auto grid_for = [&](double a, double b) {
    PathGrid g;
    g.s = a;
    g.t = b;
    g.steps = std::max(1, static_cast<int>(std::lround((b - a) / h)));
    return g;
  };
  const bool central = s >= delta;
  const int d = flow.dim();
  const Mat ux = flow.orthonormal_frame(s, x);
  const Vec z = flow.drift_in_frame(s, x, ux);
  std::vector<Vec> stencil;
  for (int a = 0; a < d; ++a) {
    stencil.push_back(exp_base(flow.kind(), x, h_fd * ux.col(a)));
    stencil.push_back(exp_base(flow.kind(), x, -h_fd * ux.col(a)));
  }

  auto terminal = [&](double start, const Vec& y, double end, std::size_t i) {
    PathWalker w(flow, FramePoint{start, y, flow.orthonormal_frame(start, y)}, grid_for(start, end),
                 NoiseStream(mc.seed, mc.task, i));
    while (!w.done()) w.advance();
    return w.state().x;
  };

  std::vector<double> forward(mc.n_paths), backward(mc.n_paths);
  const PathGrid fgrid = grid_for(s, t + delta);
  const int k_minus = static_cast<int>(std::lround((t - delta - s) / h));
  const int k_mid = k_minus + per_delta;
  parallel_for(mc.n_paths, [&](std::size_t i) {
    // Forward: one path read at t - delta, t, t + delta.
    PathWalker w(flow, FramePoint{s, x, ux}, fgrid, NoiseStream(mc.seed, mc.task, i));
    double f_minus = 0.0, lf_mid = 0.0;
    while (!w.done()) {
      if (w.k() == k_minus) f_minus = f(w.state().t, w.state().x);
      if (w.k() == k_mid) {
        const double tm = w.state().t;
        lf_mid = flow.apply_generator(tm, [&](const Vec& y) { return f(tm, y); }, w.state().x);
      }
      w.advance();
    }
    const double f_plus = f(w.state().t, w.state().x);
    const double t_minus = fgrid.time(k_minus);
    forward[i] = (f_plus - f_minus) / (w.state().t - t_minus) - lf_mid;

    // Backward: start-time derivative plus the generator on the start point.
    const double f0 = f(t, terminal(s, x, t, i));
    double dt_term;
    if (central) {
      dt_term = (f(t, terminal(s + delta, x, t, i)) - f(t, terminal(s - delta, x, t, i))) / (2.0 * delta);
    } else {
      const double f1 = f(t, terminal(s + delta, x, t, i));
      const double f2 = f(t, terminal(s + 2.0 * delta, x, t, i));
      dt_term = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * delta);
    }
    double gen = 0.0;
    for (int a = 0; a < d; ++a) {
      const double fp = f(t, terminal(s, stencil[2 * a], t, i));
      const double fm = f(t, terminal(s, stencil[2 * a + 1], t, i));
      gen += (fp - 2.0 * f0 + fm) / (h_fd * h_fd) + z[a] * (fp - fm) / (2.0 * h_fd);
    }
    backward[i] = dt_term + gen;
  });

  KolmogorovResidual out;
  out.forward = summarize(forward);
  out.backward = summarize(backward);
  out.delta = delta;
  return out;
}

}  // namespace mfl
