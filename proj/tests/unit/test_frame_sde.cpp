#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"

#include <cstdlib>
#include <numeric>

using namespace mfl;
using namespace testutil;

TEST_CASE("horizontal_step examples") {
  SUBCASE("zero increment leaves a static flat state unchanged") {
    const auto E = MetricFlow::euclidean(2);
    const FramePoint fp{0.0, vec({0.5, -1.0}), E.orthonormal_frame(0.0, vec({0.5, -1.0}))};
    const FramePoint next = horizontal_step(E, fp, Vec::Zero(2), 0.01);
    CHECK((next.x - fp.x).norm() == 0.0);
    CHECK((next.u - fp.u).norm() == 0.0);
    CHECK(next.t == doctest::Approx(0.01));
  }
  SUBCASE("flat increment moves x by sqrt(2) dB") {
    const auto E = MetricFlow::euclidean(2);
    const FramePoint fp{0.0, vec({0.0, 0.0}), E.orthonormal_frame(0.0, vec({0.0, 0.0}))};
    const Vec dB = vec({0.1, 0.0});  // one unit-variance draw scaled by sqrt(0.01)
    const FramePoint next = horizontal_step(E, fp, dB, 0.01);
    CHECK((next.x - std::sqrt(2.0) * dB).norm() < 1e-15);
    CHECK((next.u - fp.u).norm() < 1e-15);
  }
  SUBCASE("moving sphere rescales the frame by sqrt(c(t)/c(t+h))") {
    const auto S = MetricFlow::sphere(2, TimeFactor::linear(1.0, -2.0));
    const double t = 0.1, h = 1e-3;
    const Vec x = polar(0.7, 0.2);
    const FramePoint fp{t, x, S.orthonormal_frame(t, x)};
    StepDiagnostics diag;
    const FramePoint next = horizontal_step(S, fp, Vec::Zero(2), h, &diag);
    CHECK((next.x - x).norm() < 1e-15);
    const double ratio = std::sqrt(S.factor_at(t) / S.factor_at(t + h));
    CHECK((next.u - ratio * fp.u).cwiseAbs().maxCoeff() < 10 * h * h);
    CHECK(diag.defect_before < 10 * h * h);
    CHECK(S.frame_defect(t + h, next.x, next.u) < 1e-12);
  }
  SUBCASE("non-orthonormal input frame is rejected") {
    const auto S = MetricFlow::sphere(2);
    const Vec x = polar(0.7);
    try {
      horizontal_step(S, {0.0, x, 2.0 * S.orthonormal_frame(0.0, x)}, Vec::Zero(2), 1e-3);
      FAIL("expected FrameNotOrthonormal");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::FrameNotOrthonormal);
    }
  }
  SUBCASE("stepping past the horizon is rejected") {
    const auto R = MetricFlow::ricci_sphere(2);
    const Vec x = polar(0.7);
    try {
      horizontal_step(R, {0.499, x, R.orthonormal_frame(0.499, x)}, Vec::Zero(2), 0.01);
      FAIL("expected HorizonExceeded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::HorizonExceeded);
    }
  }
}

TEST_CASE("simulate_path: flat variance is 2t per coordinate") {
  const auto E = MetricFlow::euclidean(2);
  const Vec x0 = vec({0.0, 0.0});
  const Mat u0 = E.orthonormal_frame(0.0, x0);
  const std::size_t n = 10000;
  std::vector<double> a(n), b(n);
  parallel_for(n, [&](std::size_t i) {
    const PathSample p = simulate_path(E, x0, u0, 0.0, 1.0, 1e-3, NoiseStream(1, 1, i));
    a[i] = p.states.back().x[0];
    b[i] = p.states.back().x[1];
  });
  for (const auto* col : {&a, &b}) {
    const Estimate m = summarize(*col);
    double ss = 0.0;
    for (double v : *col) ss += (v - m.mean) * (v - m.mean);
    CHECK(ss / (n - 1) == doctest::Approx(2.0).epsilon(0.05));
  }
}

TEST_CASE("simulate_path: increments are N(0, h) and node times are exact") {
  const auto S = MetricFlow::sphere(2);
  const Vec x0 = polar(1.0);
  const PathSample p = simulate_path(S, x0, S.orthonormal_frame(0.0, x0), 0.0, 1.0, 1e-3, NoiseStream(3, 4, 5));
  REQUIRE(p.times.size() == 1001);
  std::vector<double> z;
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    CHECK(p.times[k] == 0.0 + k * (1.0 - 0.0) / 1000);
    CHECK(p.states[k].t == p.times[k]);
    for (int c = 0; c < 2; ++c) z.push_back(p.increments[k][c] / std::sqrt(1e-3));
  }
  CHECK(p.times.back() == 1.0);
  const Estimate m = summarize(z);
  double ss = 0.0;
  for (double v : z) ss += (v - m.mean) * (v - m.mean);
  CHECK(within(m, 0.0, 4.0));
  CHECK(ss / (z.size() - 1) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("simulate_path: one step equals horizontal_step") {
  const auto S = MetricFlow::sphere(2, TimeFactor::linear(1.0, -0.5));
  const Vec x0 = polar(0.4, 1.0);
  const Mat u0 = S.orthonormal_frame(0.1, x0);
  const NoiseStream noise(9, 2, 17);
  const PathSample p = simulate_path(S, x0, u0, 0.1, 0.15, 0.05, noise);
  REQUIRE(p.states.size() == 2);
  const double h = (0.15 - 0.1) / 1;
  const Vec dB = noise.draw(0, 2).dB * std::sqrt(h);
  const FramePoint direct = horizontal_step(S, {0.1, x0, u0}, dB, h);
  CHECK((p.states[1].x - direct.x).norm() == 0.0);
  CHECK((p.states[1].u - direct.u).norm() == 0.0);
}

TEST_CASE("simulate_path: static sphere mixes to the uniform law") {
  const auto S = MetricFlow::sphere(2);
  const Vec x0 = polar(0.0);
  const Mat u0 = S.orthonormal_frame(0.0, x0);
  const std::size_t n = 10000;
  std::vector<Vec> ends(n);
  parallel_for(n, [&](std::size_t i) {
    ends[i] = simulate_path(S, x0, u0, 0.0, 10.0, 1e-2, NoiseStream(2, 1, i)).states.back().x;
  });
  const VectorEstimate m = summarize(ends);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(m.mean[c]) <= 3 * m.stderr_[c]);
}

TEST_CASE("reorthonormalize examples") {
  const auto S = MetricFlow::sphere(3, TimeFactor::linear(1.0, -0.5));
  const double t = 0.4;
  std::mt19937_64 rng(8);
  const Vec x = random_point(S, rng, 2.0);
  const Mat u = S.orthonormal_frame(t, x);
  CHECK((reorthonormalize(S, t, x, u) - u).cwiseAbs().maxCoeff() < 1e-12);
  const Mat fixed = reorthonormalize(S, t, x, 2.0 * u);
  CHECK((fixed - u).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 20; ++i) {
    Mat noisy = u;
    for (int c = 0; c < 3; ++c) noisy.col(c) += S.project_tangent(x, 1e-3 * gaussian(rng, 4));
    const Mat out = reorthonormalize(S, t, x, noisy);
    CHECK(S.frame_defect(t, x, out) < 1e-12);
    CHECK((out - noisy).norm() <= 1e-2);
    CHECK(out.col(0).normalized().dot(noisy.col(0).normalized()) == doctest::Approx(1.0).epsilon(1e-14));
  }
  Mat degenerate = u;
  degenerate.col(2) = degenerate.col(1);
  try {
    reorthonormalize(S, t, x, degenerate);
    FAIL("expected DegenerateFrame");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateFrame);
  }
}

TEST_CASE("frame defect before re-orthonormalization shrinks at order >= 1") {
  for (const auto& nf : builtin_flows()) {
    CAPTURE(nf.name);
    const Vec x0 = weak_case(nf.flow).x0;
    const Mat u0 = nf.flow.orthonormal_frame(0.0, x0);
    const double t = std::min(0.3, nf.flow.horizon() - 0.05);
    auto mean_defect = [&](double step) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 20; ++i) {
        const PathSample p = simulate_path(nf.flow, x0, u0, 0.0, t, step, NoiseStream(4, 2, i));
        acc += *std::max_element(p.frame_defects.begin(), p.frame_defects.end());
      }
      return acc / 20;
    };
    const double d1 = mean_defect(2e-3), d2 = mean_defect(1e-3);
    if (d1 > 1e-12) {
      CHECK(std::log2(d1 / d2) >= 0.9);
    } else {
      CHECK(d2 <= 1e-12);
    }
  }
}

TEST_CASE("weak order on flows with closed-form semigroups") {
  // Two representative families here; the acceptance binary covers all of them.
  for (const auto& nf : {NamedFlow{"hyperbolic-2", MetricFlow::hyperbolic(2), 0.0},
                         NamedFlow{"torus", MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.0)}), 0.0}}) {
    CAPTURE(nf.name);
    const WeakCase c = weak_case(nf.flow);
    const WeakOrder w = weak_order(nf.flow, c.x0, c.f, 0.5, 16, 10000, 5);
    CHECK(w.order >= 0.9);
  }
  // Static flat space is exact for the geodesic random walk.
  const auto E = MetricFlow::euclidean(2);
  const WeakCase c = weak_case(E);
  CHECK(weak_order(E, c.x0, c.f, 0.5, 8, 1000, 5).exact);
}

TEST_CASE("paths are reproducible bit-for-bit and independent of the worker count") {
  const auto S = MetricFlow::sphere(2, TimeFactor::linear(1.0, -0.5));
  const Vec x0 = polar(0.3);
  const Mat u0 = S.orthonormal_frame(0.0, x0);
  auto run = [&](const char* threads) {
    setenv("MFL_THREADS", threads, 1);
    std::vector<Vec> ends(64);
    parallel_for(64, [&](std::size_t i) {
      ends[i] = simulate_path(S, x0, u0, 0.0, 0.2, 1e-3, NoiseStream(12, 3, i)).states.back().x;
    });
    unsetenv("MFL_THREADS");
    return ends;
  };
  const auto a = run("1"), b = run("4"), c = run("3");
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i] - b[i]).norm() == 0.0);
    CHECK((a[i] - c[i]).norm() == 0.0);
  }
  const NoiseStream n1(5, 6, 7), n2(5, 6, 7), n3(5, 6, 8);
  CHECK((n1.draw(3, 2).dB - n2.draw(3, 2).dB).norm() == 0.0);
  CHECK((n1.draw(3, 2).dB - n3.draw(3, 2).dB).norm() > 0.0);
}

TEST_CASE("exit monitoring") {
  SUBCASE("compact flows never reach radii 10 or 20") {
    for (const auto& flow : {MetricFlow::sphere(2), MetricFlow::torus(2, {TimeFactor::constant()}),
                             MetricFlow::ricci_sphere(2)}) {
      const Vec x0 = weak_case(flow).x0;
      const Mat u0 = flow.orthonormal_frame(0.0, x0);
      const std::size_t n = 10000;
      std::vector<int> exits(n, 0);
      parallel_for(n, [&](std::size_t i) {
        const PathSample p = simulate_path(flow, x0, u0, 0.0, 0.4, 2e-2, NoiseStream(6, 1, i), {10.0, 20.0});
        exits[i] = p.exits[0].has_value() + p.exits[1].has_value();
      });
      CHECK(std::accumulate(exits.begin(), exits.end(), 0) == 0);
    }
  }
  SUBCASE("flat space: radius 20 by t = 1 is a Gaussian-tail event") {
    const auto E = MetricFlow::euclidean(2);
    const Vec x0 = vec({0.0, 0.0});
    const Mat u0 = E.orthonormal_frame(0.0, x0);
    const std::size_t n = 10000;
    std::vector<int> exits(n, 0);
    parallel_for(n, [&](std::size_t i) {
      const PathSample p = simulate_path(E, x0, u0, 0.0, 1.0, 1e-2, NoiseStream(6, 2, i), {2.0, 20.0});
      exits[i] = p.exits[1].has_value();
    });
    // P(|X_1| >= 20) = exp(-100) for variance 2 per coordinate; no exit expected in 1e4 paths.
    CHECK(std::accumulate(exits.begin(), exits.end(), 0) == 0);
  }
  SUBCASE("the exit node is the first one beyond the radius") {
    const auto E = MetricFlow::euclidean(1);
    const Vec x0 = vec({0.0});
    const PathSample p = simulate_path(E, x0, E.orthonormal_frame(0.0, x0), 0.0, 2.0, 1e-3, NoiseStream(1, 1, 1),
                                       {0.5});
    REQUIRE(p.exits[0].has_value());
    const int k = *p.exits[0];
    CHECK(std::abs(p.states[k].x[0]) >= 0.5);
    for (int j = 0; j < k; ++j) CHECK(std::abs(p.states[j].x[0]) < 0.5);
  }
}

TEST_CASE("horizon margin") {
  const auto R = MetricFlow::ricci_sphere(2);
  const Vec x0 = polar(0.5);
  try {
    simulate_path(R, x0, R.orthonormal_frame(0.0, x0), 0.0, 0.4995, 1e-3, NoiseStream(1, 1, 1));
    FAIL("expected HorizonExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HorizonExceeded);
  }
}
