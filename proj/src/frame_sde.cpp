#include "mfl/frame_sde.hpp"

#include <cmath>

namespace mfl {

Mat reorthonormalize(const MetricFlow& flow, double t, const Vec& x, const Mat& u) {
  Mat out = u;
  for (int a = 0; a < out.cols(); ++a) {
    for (int b = 0; b < a; ++b) out.col(a) -= flow.inner(t, x, out.col(a), out.col(b)) * out.col(b);
    const double n = flow.norm(t, x, out.col(a));
    if (!(n > 1e-10)) throw Error(ErrorCode::DegenerateFrame, "frame is rank deficient");
    out.col(a) /= n;
  }
  return out;
}

FramePoint horizontal_step(const MetricFlow& flow, const FramePoint& fp, const Vec& dB, double h,
                           StepDiagnostics* diag) {
  flow.check_time(fp.t + h);
  flow.require_orthonormal(fp.t, fp.x, fp.u);
  const int d = flow.dim();

  Vec xi = std::sqrt(2.0) * dB;
  if (flow.drift().kind != DriftField::Kind::Zero) xi += h * flow.drift_in_frame(fp.t, fp.x, fp.u);
  const Vec v = fp.u * xi;

  FramePoint next;
  next.t = fp.t + h;
  next.x = exp_base(flow.kind(), fp.x, v);
  if (!next.x.allFinite()) throw Error(ErrorCode::NumericalBlowup, "non-finite point");
  next.u.resize(fp.u.rows(), d);
  for (int a = 0; a < d; ++a) {
    next.u.col(a) = flow.project_tangent(next.x, transport_along(flow.kind(), fp.x, v, fp.u.col(a)));
  }

  // Vertical correction with G evaluated on the transported frame at time t.
  if (flow.factor_derivative(fp.t) != 0.0 || !flow.conformal()) {
    const Mat g = flow.dt_gram(fp.t, next.x, next.u);
    next.u = next.u * (Mat::Identity(d, d) - 0.5 * h * g);
  }

  const double defect = flow.frame_defect(next.t, next.x, next.u);
  const Mat fixed = reorthonormalize(flow, next.t, next.x, next.u);
  if (diag) {
    diag->defect_before = defect;
    diag->gs_correction = (fixed - next.u).cwiseAbs().maxCoeff();
  }
  next.u = fixed;
  if (!next.u.allFinite()) throw Error(ErrorCode::NumericalBlowup, "non-finite frame");
  return next;
}

PathGrid PathGrid::make(double s, double t, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
  if (!(t >= s)) throw Error(ErrorCode::InvalidArgument, "end time before start time");
  PathGrid g;
  g.s = s;
  g.t = t;
  g.steps = std::max(1, static_cast<int>(std::lround((t - s) / step)));
  return g;
}

void check_interval(const MetricFlow& flow, double s, double t) {
  if (!(s <= t)) throw Error(ErrorCode::InvalidArgument, "interval end precedes start");
  if (s < 0.0) throw Error(ErrorCode::InvalidArgument, "negative start time");
  if (t > flow.horizon() - kHorizonMargin) {
    throw Error(ErrorCode::HorizonExceeded, "end time " + std::to_string(t) + " too close to the horizon");
  }
}

PathWalker::PathWalker(const MetricFlow& flow, FramePoint start, PathGrid grid, NoiseStream noise)
    : flow_(flow), state_(std::move(start)), grid_(grid), noise_(noise) {
  state_.t = grid_.time(0);
}

void PathWalker::draw() {
  if (drawn_) return;
  current_ = noise_.draw(static_cast<std::uint64_t>(k_), flow_.dim());
  dB_ = std::sqrt(grid_.h()) * current_.dB;
  drawn_ = true;
}

const Vec& PathWalker::increment() {
  draw();
  return dB_;
}

const StepNoise& PathWalker::noise() {
  draw();
  return current_;
}

void PathWalker::advance() {
  draw();
  advance_with(dB_);
}

void PathWalker::advance_with(const Vec& dB) {
  if (done()) throw Error(ErrorCode::InvalidArgument, "path already finished");
  state_ = horizontal_step(flow_, state_, dB, grid_.h(), &diag_);
  ++k_;
  state_.t = grid_.time(k_);
  drawn_ = false;
}

double safe_distance(const MetricFlow& flow, double t, const Vec& x, const Vec& y) {
  try {
    return flow.dist(t, x, y);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::CutLocusAmbiguity) throw;
    return flow.injectivity_radius(t);
  }
}

PathSample simulate_path(const MetricFlow& flow, const Vec& x0, const Mat& frame0, double s, double t,
                         double step, const NoiseStream& noise, const std::vector<double>& radii) {
  check_interval(flow, s, t);
  flow.check_point(x0);
  flow.require_orthonormal(s, x0, frame0);
  const PathGrid grid = PathGrid::make(s, t, step);

  PathSample out;
  out.radii = radii;
  out.exits.assign(radii.size(), std::nullopt);
  out.times.reserve(grid.steps + 1);
  out.states.reserve(grid.steps + 1);
  out.increments.reserve(grid.steps);
  out.frame_defects.reserve(grid.steps);

  PathWalker walker(flow, FramePoint{s, x0, frame0}, grid, noise);
  auto record = [&] {
    out.times.push_back(walker.state().t);
    out.states.push_back(walker.state());
    if (!radii.empty()) {
      const double rho = safe_distance(flow, walker.state().t, x0, walker.state().x);
      for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!out.exits[i] && rho >= radii[i]) out.exits[i] = walker.k();
      }
    }
  };
  record();
  while (!walker.done()) {
    out.increments.push_back(walker.increment());
    walker.advance();
    out.frame_defects.push_back(walker.last_diagnostics().defect_before);
    out.max_gs_correction = std::max(out.max_gs_correction, walker.last_diagnostics().gs_correction);
    record();
  }
  return out;
}

}  // namespace mfl
