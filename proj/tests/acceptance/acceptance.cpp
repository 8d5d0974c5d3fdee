// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "../unit/helpers.hpp"
#include "mfl/harness.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mfl;
using namespace testutil;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

McConfig mc(std::size_t n, double step, std::uint64_t seed, std::uint64_t task = 0) {
  McConfig m;
  m.n_paths = n;
  m.step = step;
  m.seed = seed;
  m.task = task;
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt(const Estimate& e) { return fmt(e.mean) + "+-" + fmt(e.stderr_); }

bool agree(double a, double sa, double b, double sb) { return std::abs(a - b) <= 3.0 * std::hypot(sa, sb); }

// 1. Bismut identity on the unit sphere.
void bismut_identity(Outcome& o) {
  const auto S = MetricFlow::sphere(2);
  const Vec x = polar(kPi / 2);
  const double t = 0.3;
  const auto f = fields::coordinate(S, 2);
  const BismutPair b = bismut_both(S, f, 0.0, t, x, Mat(), mc(200000, 1e-3, 101));
  const Vec target = std::exp(-2 * t) * frame_gradient(f, 0.0, x, S.orthonormal_frame(0.0, x));
  for (int i = 0; i < 2; ++i) {
    const double pm = b.pathwise.mean[i], ps = b.pathwise.stderr_[i];
    const double im = b.integrated.mean[i], is = b.integrated.stderr_[i];
    o.require(agree(pm, ps, im, is), "estimators disagree in component " + std::to_string(i));
    o.require(std::abs(pm - target[i]) <= 3 * ps + 1e-12, "pathwise vs analytic, component " + std::to_string(i));
    o.require(std::abs(im - target[i]) <= 3 * is + 1e-12, "integrated vs analytic, component " + std::to_string(i));
  }
  o.detail << "pathwise |grad| " << fmt(b.pathwise.norm()) << ", integrated " << fmt(b.integrated.norm())
           << ", analytic " << fmt(target.norm());
}

// 2. Flat gradient exactness.
void flat_gradient(Outcome& o) {
  const auto E = MetricFlow::euclidean(1);
  const BismutPair b = bismut_both(E, fields::square(0), 0.0, 0.5, vec({1.0}), Mat(), mc(100000, 1e-2, 102));
  o.require(std::abs(b.pathwise.mean[0] - 2.0) <= 3 * b.pathwise.stderr_[0], "pathwise");
  o.require(std::abs(b.integrated.mean[0] - 2.0) <= 3 * b.integrated.stderr_[0], "integrated");
  o.detail << "pathwise " << fmt(b.pathwise.mean[0]) << "+-" << fmt(b.pathwise.stderr_[0]) << ", integrated "
           << fmt(b.integrated.mean[0]) << "+-" << fmt(b.integrated.stderr_[0]) << ", target 2";
}

// 3. Damped-transport norm bound, with equality on isotropic flows.
void damped_bound(Outcome& o) {
  struct Case {
    std::string name;
    MetricFlow flow;
    std::function<double(double)> analytic;  // scalar Q_{0,t}
  };
  const double t = 0.2;
  const std::vector<Case> cases{
      {"sphere", MetricFlow::sphere(2), [](double s) { return std::exp(-s); }},
      {"torus", MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.0)}), [](double s) { return std::exp(-0.5 * s); }},
      {"ricci-sphere", MetricFlow::ricci_sphere(2), [](double s) { return 1.0 - 2.0 * s; }},
  };
  for (const auto& c : cases) {
    const Vec x0 = weak_case(c.flow).x0;
    const Mat u0 = c.flow.orthonormal_frame(0.0, x0);
    const CurvatureData K = c.flow.curvature_bound();
    const std::size_t n = 10000;
    std::vector<double> viol(n), gap(n), err(n);
    parallel_for(n, [&](std::size_t i) {
      const PathSample p = simulate_path(c.flow, x0, u0, 0.0, t, 1e-4, NoiseStream(103, 0, i));
      const DampedTransport dt = evolve_Q(c.flow, p);
      const QCertificate q = q_norm_certificate(p, dt, K);
      viol[i] = q.max_violation;
      gap[i] = q.max_abs_gap;
      err[i] = operator_norm(dt.Q.back() - c.analytic(t) * Mat::Identity(2, 2));
    });
    const double v = *std::max_element(viol.begin(), viol.end());
    const double g = *std::max_element(gap.begin(), gap.end());
    const double e = *std::max_element(err.begin(), err.end());
    o.require(v <= 1e-6, c.name + " norm bound");
    o.require(g <= 1e-6, c.name + " equality");
    o.require(e <= 1e-6, c.name + " analytic Q");
    o.detail << c.name << ": violation " << fmt(v) << ", gap " << fmt(g) << ", |Q - analytic| " << fmt(e) << "; ";
  }
}

// 4. Wasserstein contraction on the Ricci-flow sphere.
void contraction(Outcome& o) {
  const auto R = MetricFlow::ricci_sphere(2);
  CouplingOptions opts;
  opts.mode = CouplingMode::Parallel;
  const Estimate w = wasserstein_upper(R, polar(0.4), polar(0.4, kPi), 0.0, 0.2, 1.0, mc(50000, 1e-3, 104), opts);
  o.require(w.mean <= 0.8 * 0.6 + 3 * w.stderr_, "E rho_t above 0.48");
  o.detail << "E rho_0.2 = " << fmt(w) << " vs 0.48";
}

// 5. Mirror coupling time law in the plane.
void mirror_law(Outcome& o) {
  const auto E = MetricFlow::euclidean(2);
  CouplingOptions opts;
  opts.mode = CouplingMode::Mirror;
  const CouplingEnsemble ens =
      simulate_coupling(E, vec({0.0, 0.0}), vec({1.0, 0.0}), 0.0, 0.5, mc(50000, 1e-3, 105), opts);
  for (double t : {0.1, 0.25, 0.5}) {
    const double oracle = 2.0 * (1.0 - normal_cdf(1.0 / (2.0 * std::sqrt(2.0) * std::sqrt(t))));
    const Estimate p = ens.coupled_by(t);
    o.require(std::abs(p.mean - oracle) <= 3 * p.stderr_, "t = " + fmt(t));
    o.detail << "P(T0<=" << fmt(t) << ") " << fmt(p) << " vs " << fmt(oracle) << "; ";
  }
}

// 6. Index form against closed forms.
void index_forms(Outcome& o) {
  const double s = index_form(MetricFlow::sphere(2), 0.0, polar(kPi / 4), polar(kPi / 4, kPi));
  const double h = index_form(MetricFlow::hyperbolic(2), 0.0, vec({1.0, 0.0, 0.0}),
                              vec({std::cosh(1.0), std::sinh(1.0), 0.0}));
  o.require(std::abs(s + 2.0) <= 1e-6, "sphere");
  o.require(std::abs(h - 2.0 * std::tanh(0.5)) <= 1e-6, "hyperbolic");
  o.detail << "sphere " << fmt(s) << " (err " << fmt(std::abs(s + 2.0)) << "), hyperbolic " << fmt(h) << " (err "
           << fmt(std::abs(h - 2.0 * std::tanh(0.5))) << ")";
}

// 7. Curvature recovery.
void recovery(Outcome& o) {
  struct Case {
    std::string name;
    MetricFlow flow;
    Vec x;
    Vec X;
    double target;
  };
  const std::vector<Case> cases{
      {"sphere", MetricFlow::sphere(2), polar(1.0), MetricFlow::sphere(2).orthonormal_frame(0.0, polar(1.0)).col(0), 1.0},
      {"torus", MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.0)}), vec({1.0, 1.0}), vec({1.0, 0.0}), 0.5},
  };
  for (const auto& c : cases) {
    RecoveryOptions opts;
    opts.n_paths = 400000;
    opts.t1 = 0.02;
    opts.seed = 107;
    const RecoveryBundle b = curvature_recover(c.flow, 0.0, c.x, c.X, opts);
    auto rel = [&](const RecoveryResult& r) { return std::abs(r.value.mean - c.target) / c.target; };
    o.require(rel(b.grad) <= 0.15, c.name + " gradient formula");
    o.require(rel(b.variance) <= 0.20, c.name + " variance formula");
    o.require(rel(b.entropy) <= 0.20, c.name + " entropy formula");
    o.detail << c.name << " (target " << fmt(c.target) << "): " << fmt(b.grad.value) << ", " << fmt(b.variance.value)
             << ", " << fmt(b.entropy.value) << "; ";
  }
}

// 8. Inequality matrix and Jensen degeneracies.
void inequality_matrix(Outcome& o) {
  std::size_t checked = 0, held = 0;
  auto tally = [&](const Verdict& v, const std::string& where) {
    ++checked;
    if (v.holds) ++held;
    else o.require(false, where + " " + v.name + " slack " + fmt(v.slack) + " stderr " + fmt(v.combined_stderr));
  };

  // Shipped configuration.
  const std::filesystem::path cfg_path = std::filesystem::path(MFL_SOURCE_DIR) / "tools" / "configs" / "verify_sphere.json";
  std::ifstream in(cfg_path);
  const ReportBundle bundle = run_experiment(parse_config(json::parse(in)));
  o.require(bundle.errors == 0, "shipped config recorded errors");
  for (const auto& r : bundle.results) {
    ++checked;
    if (r.value("holds", false)) ++held;
    else o.require(false, "shipped " + r.value("name", std::string("?")));
  }

  // Builtin flow matrix: p in {1, 2}, both coupling modes via the contraction check and the mirror law above.
  std::mt19937_64 rng(108);
  for (const auto& nf : builtin_flows()) {
    const auto& flow = nf.flow;
    const CurvatureData K = flow.curvature_bound();
    const ScalarField f = flow.kind() == FlowKind::Torus ? fields::sine(0, 2.0, 1.0)
                                                         : fields::gaussian_bump(base_point(flow), 1.0, 1.0, 2.0);
    const Vec x = weak_case(flow).x0;
    Vec v = random_tangent(flow, x, rng);
    v *= 0.5 / flow.norm(0.0, x, v);
    const Vec y = flow.exp_map(0.0, x, v);
    const McConfig m = mc(4000, 1e-2, 109);
    for (double p : {1.0, 2.0}) {
      tally(verify_gradient_inequality(flow, f, 0.0, nf.t, x, p, K, m), nf.name);
      tally(verify_entropy_bound(flow, f, 0.0, nf.t, x, p, K, m), nf.name);
      tally(verify_reverse_bound(flow, f, 0.0, nf.t, x, p, K, m), nf.name);
      tally(verify_contraction(flow, x, y, 0.0, nf.t, p, K, mc(4000, 1e-3, 109)), nf.name);
    }
    tally(verify_harnack(flow, f, 0.0, nf.t, x, y, 2.0, K, m), nf.name);
    tally(verify_log_harnack(flow, f, 0.0, nf.t, x, y, K, m), nf.name);
    HyperboundConfig hc;
    hc.K = K;
    hc.t = nf.t;
    hc.r = solve_q_relation_time(0.0, nf.t, 2.0, 3.0, K);
    NestedOptions nested;
    nested.n_inner = 100;
    tally(verify_hyperbound(flow, f, x, hc, mc(400, 1e-2, 110), nested), nf.name);
  }

  // Jensen degeneracies: exact slack, no confidence allowance.
  std::size_t jensen = 0;
  auto exact = [&](const Verdict& v, const std::string& what) {
    ++jensen;
    o.require(v.slack >= -1e-12 * std::max(1.0, std::abs(v.rhs.mean)), "Jensen " + what + " slack " + fmt(v.slack));
  };
  const auto S = MetricFlow::sphere(2);
  const auto g = fields::coordinate(S, 2, 2.0);
  const CurvatureData one = CurvatureData::constant(1.0);
  const McConfig m = mc(2000, 1e-2, 111);
  exact(verify_harnack(S, g, 0.0, 0.3, polar(0.7), polar(0.7), 2.0, one, m), "harnack x=y");
  exact(verify_log_harnack(S, g, 0.0, 0.3, polar(0.7), polar(0.7), one, m), "log-harnack x=y");
  exact(verify_harnack(S, fields::constant(1.3), 0.0, 0.3, polar(0.7), polar(1.5), 2.0, one, m), "harnack const");
  exact(verify_entropy_bound(S, fields::constant(1.3), 0.0, 0.3, polar(0.7), 2.0, one, m), "entropy const");
  exact(verify_reverse_bound(S, fields::constant(1.3), 0.0, 0.3, polar(0.7), 2.0, one, m), "reverse const");
  exact(verify_gradient_inequality(S, fields::constant(1.3), 0.0, 0.3, polar(0.7), 1.0, one, m), "gradient const");
  exact(verify_contraction(S, polar(0.7), polar(0.7), 0.0, 0.3, 1.0, one, m), "contraction x=y");
  o.detail << held << "/" << checked << " verdicts hold, " << jensen << " Jensen degeneracies checked";
}

// 9. q-relation algebra.
void q_relation(Outcome& o) {
  const auto zero = CurvatureData::constant(0.0);
  const double q2 = solve_q_relation(0.0, 1.0, 0.5, 2.0, zero);
  o.require(std::abs(q2 - 3.0) <= 1e-12, "K = 0 example");
  double worst = 0.0;
  std::mt19937_64 rng(112);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const std::vector<CurvatureData> Ks{zero, CurvatureData::constant(1.0), CurvatureData::constant(-0.7),
                                      MetricFlow::ricci_sphere(2).curvature_bound()};
  for (const auto& K : Ks) {
    for (int i = 0; i < 200; ++i) {
      const double s = 0.1 * U(rng), t = s + 0.05 + 0.3 * U(rng), r = s + (t - s) * (0.05 + 0.9 * U(rng));
      const double q1 = 1.1 + 4.0 * U(rng);
      const double q = solve_q_relation(s, t, r, q1, K);
      worst = std::max(worst, std::abs(solve_q_relation_time(s, t, q1, q, K) - r));
      worst = std::max(worst, q_relation_residual(s, t, r, q1, q, K));
    }
  }
  o.require(worst < 1e-9, "round trip");
  o.detail << "q2 = " << fmt(q2) << ", worst round-trip residual " << fmt(worst);
}

// 10. Non-explosion integral test.
void nonexplosion(Outcome& o) {
  const GrowthReport z = grigoryan_integral([](double) { return 0.0; }, 200.0, 100);
  const GrowthReport one = grigoryan_integral([](double) { return 1.0; }, 200.0, 100);
  const GrowthReport sq = grigoryan_integral([](double s) { return s * s; }, 200.0, 100);
  o.require(z.classification == "divergent-trend", "psi = 0 class");
  o.require(one.classification == "divergent-trend", "psi = 1 class");
  o.require(sq.classification == "convergent-trend", "psi = s^2 class");
  double worst = 0.0;
  for (std::size_t i = 0; i < z.R.size(); ++i) {
    const double R = z.R[i];
    worst = std::max(worst, std::abs(z.F[i] - 0.5 * (R - 1) * (R - 1)) / (0.5 * (R - 1) * (R - 1)));
    const double exact1 = R - 2.0 + std::exp(1.0 - R);
    worst = std::max(worst, std::abs(one.F[i] - exact1) / exact1);
  }
  o.require(worst <= 1e-6, "closed forms");
  o.detail << "classes " << z.classification << ", " << one.classification << ", " << sq.classification
           << "; worst relative F error " << fmt(worst);
}

// 11. Scheme health.
void scheme_health(Outcome& o) {
  double worst_defect = kInf, worst_weak = kInf;
  for (const auto& nf : builtin_flows()) {
    const WeakCase c = weak_case(nf.flow);
    const Mat u0 = nf.flow.orthonormal_frame(0.0, c.x0);
    const double t = std::min(0.5, nf.flow.horizon() - 0.05);
    auto mean_defect = [&](double step) {
      std::vector<double> d(20);
      parallel_for(20, [&](std::size_t i) {
        const PathSample p = simulate_path(nf.flow, c.x0, u0, 0.0, t, step, NoiseStream(113, 0, i));
        d[i] = *std::max_element(p.frame_defects.begin(), p.frame_defects.end());
      });
      return std::accumulate(d.begin(), d.end(), 0.0) / 20.0;
    };
    const double d1 = mean_defect(2e-3), d2 = mean_defect(1e-3);
    if (d1 > 1e-12) {
      const double order = std::log2(d1 / d2);
      worst_defect = std::min(worst_defect, order);
      o.require(order >= 0.9, nf.name + " defect order " + fmt(order));
    } else {
      o.require(d2 <= 1e-12, nf.name + " defect not at rounding level");
    }
    const WeakOrder w = weak_order(nf.flow, c.x0, c.f, t, 16, 40000, 114, 5);
    if (!w.exact) {
      worst_weak = std::min(worst_weak, w.fitted.mean);
      o.require(w.fitted.mean >= 0.9, nf.name + " weak order " + fmt(w.fitted));
    }
  }

  // Marginal laws of coupled pairs.
  std::size_t tests = 0;
  double worst_p = 1.0;
  const std::vector<NamedFlow> flows{
      {"sphere-2", MetricFlow::sphere(2), 0.3},
      {"hyperbolic-2", MetricFlow::hyperbolic(2), 0.3},
      {"torus-2-anisotropic", MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.0), TimeFactor::linear(2.0, 0.5)}),
       0.3},
      {"ricci-sphere-2", MetricFlow::ricci_sphere(2), 0.2},
  };
  const std::size_t n = 500;
  for (const auto& nf : flows) {
    for (CouplingMode mode : {CouplingMode::Mirror, CouplingMode::Parallel}) {
      const Vec x = weak_case(nf.flow).x0;
      const Mat u = nf.flow.orthonormal_frame(0.0, x);
      const Vec y = nf.flow.exp_map(0.0, x, 0.8 * u.col(0));
      CouplingOptions opts;
      opts.mode = mode;
      const CouplingEnsemble ens = simulate_coupling(nf.flow, x, y, 0.0, nf.t, mc(n, 1e-2, 115, 1), opts);
      std::vector<Vec> ca(n), cb(n), sa(n), sb(n);
      parallel_for(n, [&](std::size_t i) {
        ca[i] = test_embedding(nf.flow, ens.paths[i].end_a);
        cb[i] = test_embedding(nf.flow, ens.paths[i].end_b);
        sa[i] = test_embedding(nf.flow, simulate_path(nf.flow, x, u, 0.0, nf.t, 1e-2, NoiseStream(115, 2, i)).states.back().x);
        sb[i] = test_embedding(nf.flow, simulate_path(nf.flow, y, nf.flow.orthonormal_frame(0.0, y), 0.0, nf.t, 1e-2,
                                                      NoiseStream(115, 3, i)).states.back().x);
      });
      for (const auto& [a, b, tag] : {std::tuple{&ca, &sa, "first"}, std::tuple{&cb, &sb, "second"}}) {
        const double p = energy_distance_test(*a, *b, 200, 116 + tests).p_value;
        ++tests;
        worst_p = std::min(worst_p, p);
        o.require(p > 0.01, nf.name + " " + coupling_mode_name(mode) + " " + tag + " marginal p " + fmt(p));
      }
      o.require(ens.regularized_fraction < 0.01, nf.name + " regularized fraction");
    }
  }
  o.detail << "min defect order " << fmt(worst_defect) << ", min weak order " << fmt(worst_weak) << ", " << tests
           << " marginal tests, min p " << fmt(worst_p);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"Bismut identity on S^2", bismut_identity},
      {"flat gradient exactness", flat_gradient},
      {"damped-transport norm bound", damped_bound},
      {"Wasserstein contraction on the Ricci-flow sphere", contraction},
      {"mirror coupling time law", mirror_law},
      {"index form oracle", index_forms},
      {"curvature recovery", recovery},
      {"inequality matrix", inequality_matrix},
      {"q-relation algebra", q_relation},
      {"non-explosion integral test", nonexplosion},
      {"scheme health", scheme_health},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("%s criterion %zu (%s): %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
