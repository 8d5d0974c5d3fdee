#include "mfl/inequalities.hpp"

#include "mfl/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <sstream>

namespace mfl {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string vec_text(const Vec& v) {
  std::string out = "[";
  for (int i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
  return out + "]";
}

void check_mc(const McConfig& mc) {
  if (mc.n_paths < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two paths");
  if (!(mc.step > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
}

void require_time_only(const CurvatureData& K) {
  if (!K.time_only) throw Error(ErrorCode::InvalidArgument, "this inequality needs a time-only K");
}

// int_s^t exp(2 int_s^r K) dr; exact length when K vanishes.
double exp2_weight(const CurvatureData& K, double s, double t) { return K.exp2_integral(s, t); }

void check_positive(double v, const ScalarField& f) {
  if (!(v > 0.0)) throw Error(ErrorCode::NonPositiveField, "field " + f.descriptor + " is not positive");
}

void check_nonnegative(double v, const ScalarField& f) {
  if (v < 0.0) throw Error(ErrorCode::NonPositiveField, "field " + f.descriptor + " takes negative values");
}

Verdict base_config(Verdict v, const MetricFlow& flow, const ScalarField* f, double s, double t,
                    const CurvatureData& K, const McConfig& mc) {
  v.config.emplace_back("flow", flow_kind_name(flow.kind()));
  v.config.emplace_back("dim", std::to_string(flow.dim()));
  if (f) v.config.emplace_back("field", f->descriptor);
  v.config.emplace_back("s", num(s));
  v.config.emplace_back("t", num(t));
  v.config.emplace_back("K", K.label);
  v.config.emplace_back("n_paths", std::to_string(mc.n_paths));
  v.config.emplace_back("step", num(mc.step));
  return v;
}

}  // namespace

Verdict make_verdict(std::string name, std::string item, const Estimate& lhs, const Estimate& rhs,
                     std::uint64_t seed) {
  Verdict v;
  v.name = std::move(name);
  v.item = std::move(item);
  v.lhs = lhs;
  v.rhs = rhs;
  v.slack = rhs.mean - lhs.mean;
  v.combined_stderr = std::sqrt(lhs.stderr_ * lhs.stderr_ + rhs.stderr_ * rhs.stderr_);
  const double rounding = 1e-12 * std::max(1.0, std::abs(rhs.mean));
  v.holds = std::isfinite(lhs.mean) && std::isfinite(rhs.mean) &&
            lhs.mean <= rhs.mean + 3.0 * v.combined_stderr + rounding;
  v.seed = seed;
  return v;
}

Verdict verify_gradient_inequality(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                                   double p, const CurvatureData& K, const McConfig& mc) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "p must be at least 1");
  if (!f.has_gradient()) throw Error(ErrorCode::MissingGradient, "gradient inequality needs a differential");
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  const int d = flow.dim();
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const Mat u0 = flow.orthonormal_frame(s, x);
  BatchedMeans bm(d + 1, mc.n_paths);
  parallel_for(mc.n_paths, [&](std::size_t i) {
    PathWalker w(flow, FramePoint{s, x, u0}, grid, NoiseStream(mc.seed, mc.task, i));
    DampedTransportStepper q(flow, w.state());
    double k_int = 0.0;
    double k_prev = K.at(s, x);
    while (!w.done()) {
      w.advance();
      q.advance(w.state(), grid.h());
      const double k_now = K.at(w.state().t, w.state().x);
      k_int += 0.5 * grid.h() * (k_prev + k_now);
      k_prev = k_now;
    }
    const Vec grad = frame_gradient(f, t, w.state().x, w.state().u);
    const Vec pw = q.Q().transpose() * grad;
    for (int a = 0; a < d; ++a) bm.at(i, a) = pw[a];
    bm.at(i, d) = std::pow(grad.norm(), p) * std::exp(-p * k_int);
  });
  const Estimate lhs = bm.functional([d, p](const Eigen::VectorXd& m) { return std::pow(m.head(d).norm(), p); });
  const Estimate rhs = bm.functional([d](const Eigen::VectorXd& m) { return m[d]; });
  Verdict v = make_verdict("gradient_inequality", "equivalent gradient inequalities, item 2", lhs, rhs, mc.seed);
  v = base_config(std::move(v), flow, &f, s, t, K, mc);
  v.config.emplace_back("x", vec_text(x));
  v.config.emplace_back("p", num(p));
  return v;
}

Verdict verify_entropy_bound(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                             double p, const CurvatureData& K, const McConfig& mc) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "p must be at least 1");
  if (!f.has_gradient()) throw Error(ErrorCode::MissingGradient, "entropy bound needs a differential");
  if (f.lower && !(*f.lower > 0.0)) check_positive(*f.lower, f);
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  const double pt = std::min(p, 2.0);
  const bool log_form = pt == 1.0;
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const Mat u0 = flow.orthonormal_frame(s, x);
  // Columns: f^2, f^{2/p~} (or f^2 log f^2), |grad f|^2 int_s^t e^{-2 int_u^t K} du.
  BatchedMeans bm(3, mc.n_paths);
  std::atomic<bool> bad{false};
  parallel_for(mc.n_paths, [&](std::size_t i) {
    PathWalker w(flow, FramePoint{s, x, u0}, grid, NoiseStream(mc.seed, mc.task, i));
    std::vector<double> cum(grid.steps + 1, 0.0);
    double k_prev = K.at(s, x);
    while (!w.done()) {
      w.advance();
      const double k_now = K.at(w.state().t, w.state().x);
      cum[w.k()] = cum[w.k() - 1] + 0.5 * grid.h() * (k_prev + k_now);
      k_prev = k_now;
    }
    double weight = 0.0;
    for (int k = 0; k <= grid.steps; ++k) {
      const double c = (k == 0 || k == grid.steps) ? 0.5 : 1.0;
      weight += c * grid.h() * std::exp(-2.0 * (cum[grid.steps] - cum[k]));
    }
    const double fv = f(t, w.state().x);
    if (!(fv > 0.0)) bad = true;
    const Vec grad = frame_gradient(f, t, w.state().x, w.state().u);
    bm.at(i, 0) = fv * fv;
    bm.at(i, 1) = log_form ? (fv > 0.0 ? fv * fv * std::log(fv * fv) : 0.0) : std::pow(fv, 2.0 / pt);
    bm.at(i, 2) = grad.squaredNorm() * weight;
  });
  if (bad) check_positive(0.0, f);
  Estimate lhs, rhs;
  if (log_form) {
    lhs = bm.functional([](const Eigen::VectorXd& m) { return m[1] - m[0] * std::log(m[0]); });
    rhs = bm.functional([](const Eigen::VectorXd& m) { return 4.0 * m[2]; });
  } else {
    lhs = bm.functional([pt](const Eigen::VectorXd& m) {
      return pt * (m[0] - std::pow(m[1], pt)) / (4.0 * (pt - 1.0));
    });
    rhs = bm.functional([](const Eigen::VectorXd& m) { return m[2]; });
  }
  Verdict v = make_verdict("entropy_bound", "equivalent gradient inequalities, item 3", lhs, rhs, mc.seed);
  v = base_config(std::move(v), flow, &f, s, t, K, mc);
  v.config.emplace_back("x", vec_text(x));
  v.config.emplace_back("p", num(p));
  return v;
}

Verdict verify_reverse_bound(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                             double p, const CurvatureData& K, const McConfig& mc, const NestedOptions& nested) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "p must be at least 1");
  if (!f.has_gradient()) throw Error(ErrorCode::MissingGradient, "reverse bound needs a differential");
  if (f.lower && !(*f.lower > 0.0)) check_positive(*f.lower, f);
  check_mc(mc);
  check_interval(flow, s, t);
  if (!(t > s)) throw Error(ErrorCode::DegenerateInterval, "reverse bound needs t > s");
  flow.check_point(x);
  const int d = flow.dim();
  const double pt = std::min(p, 2.0);
  const bool tower = pt == 1.0 || pt == 2.0;
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const Mat u0 = flow.orthonormal_frame(s, x);

  // u-nodes on the path grid.
  const int m_nodes = tower ? std::min(grid.steps, 64) : std::max(2, std::min(nested.nodes, grid.steps));
  std::vector<int> nodes(m_nodes + 1);
  for (int j = 0; j <= m_nodes; ++j) nodes[j] = static_cast<int>(std::lround(double(j) * grid.steps / m_nodes));
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  const std::size_t nn = nodes.size();

  const std::size_t n_inner = tower ? 0 : std::max<std::size_t>(2, nested.n_inner);
  const std::size_t needed = mc.n_paths * n_inner * (nn - 1);
  if (nested.budget && needed > nested.budget) {
    throw Error(ErrorCode::NestedBudgetExceeded, "inner path budget exceeded");
  }
  std::atomic<std::size_t> used{0};
  std::atomic<bool> bad{false};

  // Columns: pathwise gradient (d), f, f^p~ (or f log f), node weights (nn).
  BatchedMeans bm(d + 2 + nn, mc.n_paths);
  parallel_for(mc.n_paths, [&](std::size_t i) {
    const NoiseStream noise(mc.seed, mc.task, i);
    PathWalker w(flow, FramePoint{s, x, u0}, grid, noise);
    DampedTransportStepper q(flow, w.state());
    std::vector<double> cum(grid.steps + 1, 0.0);
    std::vector<Vec> node_x(nn);
    std::size_t next_node = 0;
    auto mark = [&] {
      if (next_node < nn && nodes[next_node] == w.k()) node_x[next_node++] = w.state().x;
    };
    mark();
    double k_prev = K.at(s, x);
    while (!w.done()) {
      w.advance();
      q.advance(w.state(), grid.h());
      const double k_now = K.at(w.state().t, w.state().x);
      cum[w.k()] = cum[w.k() - 1] + 0.5 * grid.h() * (k_prev + k_now);
      k_prev = k_now;
      mark();
    }
    const double fv = f(t, w.state().x);
    if (!(fv > 0.0)) bad = true;
    const Vec pw = q.Q().transpose() * frame_gradient(f, t, w.state().x, w.state().u);
    for (int a = 0; a < d; ++a) bm.at(i, a) = pw[a];
    bm.at(i, d) = fv;
    bm.at(i, d + 1) = pt == 1.0 ? (fv > 0.0 ? fv * std::log(fv) : 0.0) : std::pow(fv, pt);
    for (std::size_t j = 0; j < nn; ++j) {
      const double damp = std::exp(-2.0 * cum[nodes[j]]);
      double inner;
      if (pt == 2.0) {
        inner = 1.0;
      } else if (pt == 1.0) {
        inner = fv;  // E{P_{u,t} f(X_u) W_u} = E{f(X_t) W_u}
      } else if (nodes[j] == grid.steps) {
        inner = std::pow(fv, 2.0 - pt);
      } else {
        used += n_inner;
        const double u = grid.time(nodes[j]);
        const PathGrid g2 = PathGrid::make(u, t, grid.h());
        const Mat u1 = flow.orthonormal_frame(u, node_x[j]);
        KahanSum acc;
        for (std::size_t r = 0; r < n_inner; ++r) {
          PathWalker iw(flow, FramePoint{u, node_x[j], u1}, g2, noise.child(j * 1000003ULL + r));
          while (!iw.done()) iw.advance();
          acc.add(f(t, iw.state().x));
        }
        inner = std::pow(acc.value() / static_cast<double>(n_inner), 2.0 - pt);
      }
      bm.at(i, d + 2 + j) = inner * damp;
    }
  });
  if (bad) check_positive(0.0, f);

  std::vector<double> node_t(nn);
  for (std::size_t j = 0; j < nn; ++j) node_t[j] = grid.time(nodes[j]);
  const Estimate lhs = bm.functional([d](const Eigen::VectorXd& m) { return m.head(d).squaredNorm(); });
  const Estimate rhs = bm.functional([d, pt, nn, node_t](const Eigen::VectorXd& m) {
    double integral = 0.0;
    for (std::size_t j = 1; j < nn; ++j) {
      integral += 0.5 * (node_t[j] - node_t[j - 1]) * (1.0 / m[d + 2 + j - 1] + 1.0 / m[d + 2 + j]);
    }
    const double mf = m[d];
    if (pt == 1.0) return (m[d + 1] - mf * std::log(mf)) / integral;
    return (m[d + 1] - std::pow(mf, pt)) / (pt * (pt - 1.0) * integral);
  });
  Verdict v = make_verdict("reverse_bound", "equivalent gradient inequalities, item 4", lhs, rhs, mc.seed);
  v = base_config(std::move(v), flow, &f, s, t, K, mc);
  v.config.emplace_back("x", vec_text(x));
  v.config.emplace_back("p", num(p));
  v.diagnostics.emplace_back("u_nodes", static_cast<double>(nn));
  v.diagnostics.emplace_back("inner_paths", static_cast<double>(used.load()));
  return v;
}

Verdict verify_harnack(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                       const Vec& y, double p, const CurvatureData& K, const McConfig& mc) {
  if (!(p > 1.0)) throw Error(ErrorCode::InvalidArgument, "Harnack inequality needs p > 1");
  require_time_only(K);
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  flow.check_point(y);
  const double rho = flow.dist(s, x, y);
  const double penalty = t > s ? p * rho * rho / (4.0 * (p - 1.0) * exp2_weight(K, s, t)) : (rho > 0.0 ? kInf : 0.0);
  const double factor = std::exp(penalty);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const Mat ux = flow.orthonormal_frame(s, x);
  const Mat uy = flow.orthonormal_frame(s, y);
  const bool same = (x - y).norm() == 0.0;
  BatchedMeans bm(2, mc.n_paths);
  std::atomic<bool> bad{false};
  parallel_for(mc.n_paths, [&](std::size_t i) {
    const NoiseStream noise(mc.seed, mc.task, i);
    PathWalker wx(flow, FramePoint{s, x, ux}, grid, noise);
    while (!wx.done()) wx.advance();
    const double fx = f(t, wx.state().x);
    double fy = fx;
    if (!same) {
      PathWalker wy(flow, FramePoint{s, y, uy}, grid, noise);
      while (!wy.done()) wy.advance();
      fy = f(t, wy.state().x);
    }
    if (fx < 0.0 || fy < 0.0) bad = true;
    bm.at(i, 0) = fx;
    bm.at(i, 1) = std::pow(fy, p);
  });
  if (bad) check_nonnegative(-1.0, f);
  const Estimate lhs = bm.functional([p](const Eigen::VectorXd& m) { return std::pow(m[0], p); });
  const Estimate rhs = bm.functional([factor](const Eigen::VectorXd& m) { return m[1] * factor; });
  Verdict v = make_verdict("harnack", "equivalent Harnack-type inequalities, item 3", lhs, rhs, mc.seed);
  v = base_config(std::move(v), flow, &f, s, t, K, mc);
  v.config.emplace_back("x", vec_text(x));
  v.config.emplace_back("y", vec_text(y));
  v.config.emplace_back("p", num(p));
  v.diagnostics.emplace_back("rho_s", rho);
  v.diagnostics.emplace_back("penalty_factor", factor);
  return v;
}

Verdict verify_log_harnack(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                           const Vec& y, const CurvatureData& K, const McConfig& mc) {
  require_time_only(K);
  check_mc(mc);
  check_interval(flow, s, t);
  flow.check_point(x);
  flow.check_point(y);
  // Both sides shift by log c under f -> c f, so a field bounded below by a
  // positive constant is rescaled to satisfy f >= 1.
  double scale = 1.0;
  if (f.lower) {
    if (!(*f.lower > 0.0)) throw Error(ErrorCode::FieldBelowOne, "field " + f.descriptor + " is not positive");
    if (*f.lower < 1.0) scale = 1.0 / *f.lower;
  }
  const double rho = flow.dist(s, x, y);
  const double penalty = t > s ? rho * rho / (4.0 * exp2_weight(K, s, t)) : (rho > 0.0 ? kInf : 0.0);
  const PathGrid grid = PathGrid::make(s, t, mc.step);
  const Mat ux = flow.orthonormal_frame(s, x);
  const Mat uy = flow.orthonormal_frame(s, y);
  const bool same = (x - y).norm() == 0.0;
  BatchedMeans bm(2, mc.n_paths);
  std::atomic<bool> bad{false};
  parallel_for(mc.n_paths, [&](std::size_t i) {
    const NoiseStream noise(mc.seed, mc.task, i);
    PathWalker wx(flow, FramePoint{s, x, ux}, grid, noise);
    while (!wx.done()) wx.advance();
    const double fx = scale * f(t, wx.state().x);
    double fy = fx;
    if (!same) {
      PathWalker wy(flow, FramePoint{s, y, uy}, grid, noise);
      while (!wy.done()) wy.advance();
      fy = scale * f(t, wy.state().x);
    }
    if (fx < 1.0 - 1e-12 || fy < 1.0 - 1e-12) bad = true;
    bm.at(i, 0) = std::log(std::max(fx, 1e-300));
    bm.at(i, 1) = fy;
  });
  if (bad) throw Error(ErrorCode::FieldBelowOne, "field " + f.descriptor + " drops below one");
  const Estimate lhs = bm.functional([](const Eigen::VectorXd& m) { return m[0]; });
  const Estimate rhs = bm.functional([penalty](const Eigen::VectorXd& m) { return std::log(m[1]) + penalty; });
  Verdict v = make_verdict("log_harnack", "equivalent Harnack-type inequalities, item 4", lhs, rhs, mc.seed);
  v = base_config(std::move(v), flow, &f, s, t, K, mc);
  v.config.emplace_back("x", vec_text(x));
  v.config.emplace_back("y", vec_text(y));
  v.diagnostics.emplace_back("rho_s", rho);
  v.diagnostics.emplace_back("penalty", penalty);
  v.diagnostics.emplace_back("field_scale", scale);
  return v;
}

double solve_q_relation(double s, double t, double r, double q1, const CurvatureData& K) {
  require_time_only(K);
  if (!(s < r && r < t)) throw Error(ErrorCode::NoSolution, "need s < r < t");
  if (q1 == 1.0) throw Error(ErrorCode::NoSolution, "q1 = 1 makes the relation degenerate");
  return 1.0 + (q1 - 1.0) * exp2_weight(K, s, t) / exp2_weight(K, s, r);
}

double solve_q_relation_time(double s, double t, double q1, double q2, const CurvatureData& K) {
  require_time_only(K);
  if (!(s < t)) throw Error(ErrorCode::NoSolution, "need s < t");
  if (q1 == 1.0) throw Error(ErrorCode::NoSolution, "q1 = 1 makes the relation degenerate");
  const double ratio = (q2 - 1.0) / (q1 - 1.0);
  if (!(ratio > 1.0) || !std::isfinite(ratio)) throw Error(ErrorCode::NoSolution, "ratio must exceed one");
  const double target = exp2_weight(K, s, t) / ratio;
  double lo = s, hi = t;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(t)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (exp2_weight(K, s, mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double q_relation_residual(double s, double t, double r, double q1, double q2, const CurvatureData& K) {
  const double want = exp2_weight(K, s, t) / exp2_weight(K, s, r);
  return std::abs((q2 - 1.0) / (q1 - 1.0) - want) / std::max(1.0, std::abs(want));
}

Verdict verify_hyperbound(const MetricFlow& flow, const ScalarField& f, const Vec& x, const HyperboundConfig& cfg,
                          const McConfig& mc, const NestedOptions& nested) {
  require_time_only(cfg.K);
  check_mc(mc);
  if (!(cfg.s < cfg.r && cfg.r < cfg.t)) throw Error(ErrorCode::NoSolution, "need s < r < t");
  check_interval(flow, cfg.s, cfg.t);
  flow.check_point(x);
  const double q1 = cfg.q1, q2 = cfg.q2;
  const bool upper = 1.0 < q1 && q1 <= q2;
  const bool lower = (0.0 < q2 && q2 <= q1) || (q2 <= q1 && q1 < 0.0);
  if (!upper && !lower) throw Error(ErrorCode::InvalidArgument, "exponents outside the admissible ranges");
  if (q_relation_residual(cfg.s, cfg.t, cfg.r, q1, q2, cfg.K) > 1e-10) {
    throw Error(ErrorCode::InvalidArgument, "exponents do not satisfy the q relation");
  }
  const bool negative = q1 < 0.0 || q2 < 0.0;
  const std::size_t n_inner = std::max<std::size_t>(2, nested.n_inner);
  const std::size_t budget = nested.budget ? nested.budget : mc.n_paths * n_inner;
  if (mc.n_paths * n_inner > budget) throw Error(ErrorCode::NestedBudgetExceeded, "inner path budget exceeded");

  const PathGrid g1 = PathGrid::make(cfg.s, cfg.r, mc.step);
  const PathGrid g2 = PathGrid::make(cfg.r, cfg.t, mc.step);
  const Mat u0 = flow.orthonormal_frame(cfg.s, x);
  // Columns: (P_{r,t} f)^{q2} with all inner paths, the same with half of them, f^{q1}(X_t).
  BatchedMeans bm(3, mc.n_paths);
  std::atomic<bool> bad{false};
  parallel_for(mc.n_paths, [&](std::size_t i) {
    const NoiseStream noise(mc.seed, mc.task, i);
    PathWalker w(flow, FramePoint{cfg.s, x, u0}, g1, noise);
    while (!w.done()) w.advance();
    const FramePoint mid = w.state();
    // Outer continuation to t gives P_{s,t} f^{q1} by the Markov property.
    PathWalker cont(flow, mid, g2, noise.child(0xC0FFEEULL));
    while (!cont.done()) cont.advance();
    const double fend = f(cfg.t, cont.state().x);
    KahanSum all, half;
    for (std::size_t r = 0; r < n_inner; ++r) {
      PathWalker iw(flow, mid, g2, noise.child(r + 1));
      while (!iw.done()) iw.advance();
      const double v = f(cfg.t, iw.state().x);
      if (v < 0.0 || (negative && !(v > 0.0))) bad = true;
      all.add(v);
      if (r < n_inner / 2) half.add(v);
    }
    if (fend < 0.0 || (negative && !(fend > 0.0))) bad = true;
    bm.at(i, 0) = std::pow(all.value() / static_cast<double>(n_inner), q2);
    bm.at(i, 1) = std::pow(half.value() / static_cast<double>(n_inner / 2), q2);
    bm.at(i, 2) = std::pow(fend, q1);
  });
  if (bad) check_positive(0.0, f);
  const Estimate nested_side = bm.functional([q2](const Eigen::VectorXd& m) { return std::pow(m[0], 1.0 / q2); });
  const Estimate half_side = bm.functional([q2](const Eigen::VectorXd& m) { return std::pow(m[1], 1.0 / q2); });
  const Estimate direct_side = bm.functional([q1](const Eigen::VectorXd& m) { return std::pow(m[2], 1.0 / q1); });
  Verdict v = upper ? make_verdict("hyperbound", "equivalent Harnack-type inequalities, item 7", nested_side,
                                   direct_side, mc.seed)
                    : make_verdict("hyperbound", "equivalent Harnack-type inequalities, item 8", direct_side,
                                   nested_side, mc.seed);
  v = base_config(std::move(v), flow, &f, cfg.s, cfg.t, cfg.K, mc);
  v.config.emplace_back("r", num(cfg.r));
  v.config.emplace_back("q1", num(q1));
  v.config.emplace_back("q2", num(q2));
  v.config.emplace_back("n_inner", std::to_string(n_inner));
  v.diagnostics.emplace_back("nested_bias_delta", nested_side.mean - half_side.mean);
  return v;
}

Verdict verify_contraction(const MetricFlow& flow, const Vec& x, const Vec& y, double s, double t, double p,
                           const CurvatureData& K, const McConfig& mc) {
  require_time_only(K);
  CouplingOptions opts;
  opts.mode = CouplingMode::Parallel;
  opts.record_paths = 0;
  const Estimate lhs = wasserstein_upper(flow, x, y, s, t, p, mc, opts);
  Estimate rhs;
  rhs.mean = flow.dist(s, x, y) * std::exp(-K.integral(s, t));
  rhs.n = lhs.n;
  Verdict v = make_verdict("contraction", "equivalent Harnack-type inequalities, item 2", lhs, rhs, mc.seed);
  v = base_config(std::move(v), flow, nullptr, s, t, K, mc);
  v.config.emplace_back("x", vec_text(x));
  v.config.emplace_back("y", vec_text(y));
  v.config.emplace_back("p", num(p));
  v.config.emplace_back("mode", "parallel");
  return v;
}

GrowthReport grigoryan_integral(const std::function<double(double)>& psi, double R_max, int points, double h) {
  if (!(R_max > 1.0)) throw Error(ErrorCode::InvalidArgument, "R_max must exceed 1");
  if (points < 2) throw Error(ErrorCode::InvalidArgument, "need at least two table points");
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
  const double R2 = 2.0 * R_max;
  const long n = static_cast<long>(std::ceil((R2 - 1.0) / h));
  const double dt = (R2 - 1.0) / static_cast<double>(n);
  // inner(t) = int_1^t exp(-(Psi(t) - Psi(r))) dr obeys
  // inner(t + dt) = e^{-dPsi} inner(t) + int_t^{t+dt} e^{-(Psi(t+dt) - Psi(r))} dr,
  // and the last integral is taken exactly for Psi linear on the step.
  auto increment = [&](double a, double len) {
    return len / 6.0 * (psi(a) + 4.0 * psi(a + 0.5 * len) + psi(a + len));
  };
  auto fresh = [](double len, double dpsi) { return dpsi < 1e-8 ? len * (1.0 - 0.5 * dpsi) : -len * std::expm1(-dpsi) / dpsi; };
  double inner = 0.0;
  double F = 0.0;
  double inner_mid_rmax = 0.0, inner_rmax = 0.0;
  std::vector<double> inner_at(n + 1, 0.0);
  std::vector<double> F_at(n + 1, 0.0);
  for (long j = 0; j < n; ++j) {
    const double a = 1.0 + j * dt;
    const double d1 = increment(a, 0.5 * dt);
    const double d2 = increment(a + 0.5 * dt, 0.5 * dt);
    const double inner_mid = std::exp(-d1) * inner + fresh(0.5 * dt, d1);
    const double next = std::exp(-d2) * inner_mid + fresh(0.5 * dt, d2);
    F += dt / 6.0 * (inner + 4.0 * inner_mid + next);
    inner = next;
    inner_at[j + 1] = inner;
    F_at[j + 1] = F;
  }
  GrowthReport out;
  auto at = [&](const std::vector<double>& v, double R) {
    const double pos = (R - 1.0) / dt;
    const long k = std::min<long>(n - 1, static_cast<long>(std::floor(pos)));
    const double w = pos - static_cast<double>(k);
    return (1.0 - w) * v[k] + w * v[k + 1];
  };
  for (int i = 0; i < points; ++i) {
    const double R = 1.0 + (R_max - 1.0) * (i + 1) / points;
    out.R.push_back(R);
    out.F.push_back(at(F_at, R));
  }
  out.F_double = F_at[n];
  const double F_max = at(F_at, R_max);
  out.ratio = F_max > 0.0 ? out.F_double / F_max : kInf;
  inner_rmax = at(inner_at, R_max);
  inner_mid_rmax = at(inner_at, 0.5 * (1.0 + R_max));
  // Local power law of the integrand F' = inner between (1 + R)/2 and R.
  if (inner_rmax > 0.0 && inner_mid_rmax > 0.0) {
    out.tail_exponent = -std::log(inner_rmax / inner_mid_rmax) / std::log((R_max) / (0.5 * (1.0 + R_max)));
  } else {
    out.tail_exponent = kInf;
  }
  if (out.tail_exponent <= 1.25 || (out.tail_exponent < 1.5 && out.ratio >= 1.5)) out.classification = "divergent-trend";
  else if (out.tail_exponent >= 1.5) out.classification = "convergent-trend";
  else out.classification = "inconclusive";
  return out;
}

NonexplosionReport nonexplosion_check(const NonexplosionSpec& spec) {
  NonexplosionReport rep;
  std::function<double(double)> psi;
  auto sample_nonneg = [&](const std::function<double(double)>& fn, double hi) {
    if (!fn) return;
    for (int i = 0; i <= 256; ++i) {
      if (fn(hi * i / 256.0) < 0.0) rep.nonnegative = false;
    }
  };
  switch (spec.variant) {
    case NonexplosionSpec::Variant::Theorem:
      rep.variant = "theorem";
      if (!spec.psi) throw Error(ErrorCode::ConfigInvalid, "psi is required");
      psi = spec.psi;
      sample_nonneg(psi, 2.0 * spec.R_max);
      break;
    case NonexplosionSpec::Variant::Case1: {
      rep.variant = "case1";
      if (!spec.phi) throw Error(ErrorCode::ConfigInvalid, "phi is required");
      sample_nonneg(spec.phi, 2.0 * spec.R_max);
      // psi(s) = int_0^s phi, tabulated with Simpson's rule on a fine grid.
      const double top = 2.0 * spec.R_max + 1.0;
      const int n = static_cast<int>(std::ceil(top / 1e-3));
      const double dh = top / n;
      auto table = std::make_shared<std::vector<double>>(n + 1, 0.0);
      const auto phi = spec.phi;
      for (int i = 0; i < n; ++i) {
        const double a = i * dh;
        (*table)[i + 1] = (*table)[i] + dh / 6.0 * (phi(a) + 4.0 * phi(a + 0.5 * dh) + phi(a + dh));
      }
      psi = [table, dh, n, phi](double s) {
        const int k = std::clamp(static_cast<int>(s / dh), 0, n - 1);
        const double a = k * dh;
        const double len = s - a;
        return (*table)[k] + len / 6.0 * (phi(a) + 4.0 * phi(a + 0.5 * len) + phi(s));
      };
      break;
    }
    case NonexplosionSpec::Variant::Case2: {
      rep.variant = "case2";
      if (!spec.phi || !spec.psi) throw Error(ErrorCode::ConfigInvalid, "phi and psi are required");
      if (spec.dim < 2) throw Error(ErrorCode::ConfigInvalid, "case 2 needs dimension at least 2");
      psi = spec.psi;
      sample_nonneg(spec.phi, 2.0 * spec.R_max);
      sample_nonneg(psi, 2.0 * spec.R_max);
      const double dm1 = spec.dim - 1.0;
      // Sampled from rho = 1 outward: the comparison term behaves like (d-1)/rho near the pole.
      for (int i = 0; i < spec.t_samples; ++i) {
        const double t = spec.horizon * i / spec.t_samples;
        const double ht = spec.h(t);
        if (ht < 0.0) rep.nonnegative = false;
        for (int j = 0; j < spec.rho_samples; ++j) {
          const double rho = 1.0 + (spec.R_max - 1.0) * j / (spec.rho_samples - 1);
          const double ph = spec.phi(rho);
          const double lap = ph > 0.0 ? std::sqrt(dm1 * ph) / std::tanh(std::sqrt(ph / dm1) * rho) : dm1 / rho;
          const double lhs = (spec.radial ? spec.radial(t, rho) : 0.0) + lap;
          const double gap = lhs - ht * psi(rho);
          rep.worst_gap = (i == 0 && j == 0) ? gap : std::max(rep.worst_gap, gap);
          if (gap > 1e-12 * std::max(1.0, std::abs(lhs))) ++rep.violations;
        }
      }
      rep.hypothesis_holds = rep.violations == 0;
      break;
    }
  }
  if (spec.h) {
    for (int i = 0; i <= 64; ++i) {
      if (spec.h(spec.horizon * i / 65.0) < 0.0) rep.nonnegative = false;
    }
  }
  rep.growth = grigoryan_integral(psi, spec.R_max);
  rep.established = rep.nonnegative && rep.hypothesis_holds && rep.growth.classification == "divergent-trend";
  return rep;
}

}  // namespace mfl
