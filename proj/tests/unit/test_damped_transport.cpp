#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"

using namespace mfl;
using namespace testutil;

namespace {

PathSample path_on(const MetricFlow& flow, double t, double step, std::uint64_t i) {
  const Vec x0 = weak_case(flow).x0;
  return simulate_path(flow, x0, flow.orthonormal_frame(0.0, x0), 0.0, t, step, NoiseStream(21, 1, i));
}

}  // namespace

TEST_CASE("evolve_Q examples") {
  SUBCASE("static flat space keeps Q = I") {
    const auto E = MetricFlow::euclidean(2);
    const DampedTransport dt = evolve_Q(E, path_on(E, 1.0, 1e-2, 0));
    for (const Mat& q : dt.Q) CHECK((q - Mat::Identity(2, 2)).norm() == 0.0);
  }
  SUBCASE("static unit sphere gives exp(-t) I") {
    const auto S = MetricFlow::sphere(2);
    const PathSample p = path_on(S, 1.0, 1e-3, 1);
    const DampedTransport dt = evolve_Q(S, p);
    CHECK(dt.Q.front() == Mat::Identity(2, 2));
    for (std::size_t k = 0; k < dt.Q.size(); k += 100) {
      CHECK((dt.Q[k] - std::exp(-p.times[k]) * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("shrinking torus with lambda = 0.7 gives exp(-0.7) I at t = 1") {
    const auto T = MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.4)});
    const DampedTransport dt = evolve_Q(T, path_on(T, 1.0, 1e-3, 2));
    CHECK((dt.Q.back() - std::exp(-0.7) * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("q_norm_certificate examples") {
  const auto E = MetricFlow::euclidean(2);
  const PathSample pe = path_on(E, 0.5, 1e-2, 3);
  CHECK(q_norm_certificate(pe, evolve_Q(E, pe), CurvatureData::constant(0.0)).max_violation == 0.0);

  const auto S = MetricFlow::sphere(2);
  const PathSample ps = path_on(S, 1.0, 1e-3, 4);
  const QCertificate cs = q_norm_certificate(ps, evolve_Q(S, ps), CurvatureData::constant(1.0));
  CHECK(cs.max_violation <= 1e-8);
  CHECK(cs.max_abs_gap <= 1e-8);

  const auto R = MetricFlow::ricci_sphere(2);
  const PathSample pr = path_on(R, 0.2, 1e-4, 5);
  const CurvatureData K = R.curvature_bound();
  CHECK(K.at(0.1) == doctest::Approx(2.0 / (1.0 - 0.2)));
  CHECK(q_norm_certificate(pr, evolve_Q(R, pr), K).max_violation <= 1e-6);
}

TEST_CASE("norm bound holds along paths on every builtin flow") {
  for (const auto& nf : builtin_flows()) {
    CAPTURE(nf.name);
    const CurvatureData K = nf.flow.curvature_bound();
    const double t = std::min(0.4, nf.flow.horizon() - 0.05);
    for (std::uint64_t i = 0; i < 20; ++i) {
      const PathSample p = path_on(nf.flow, t, 1e-3, i);
      // Trapezoid error of the K integral along the path is O(step^2) per unit time.
      CHECK(q_norm_certificate(p, evolve_Q(nf.flow, p), K).max_violation <= 1e-5);
    }
  }
}

TEST_CASE("semiflow property on the grid") {
  const auto T = MetricFlow::torus(2, {TimeFactor::exponential(1.0, -1.0), TimeFactor::linear(2.0, 0.5)});
  const PathSample p = path_on(T, 0.5, 1e-2, 7);
  const DampedTransport full = evolve_Q(T, p);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const int r = std::uniform_int_distribution<int>(1, 49)(rng);
    // Q_{r,t} from a stepper started at node r.
    DampedTransportStepper tail(T, p.states[r]);
    for (std::size_t k = r + 1; k < p.states.size(); ++k) tail.advance(p.states[k], p.times[k] - p.times[k - 1]);
    CHECK((tail.Q() * full.Q[r] - full.Q.back()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("isotropic flows give a scalar Q") {
  for (const auto& flow : {MetricFlow::sphere(3), MetricFlow::ricci_sphere(2),
                           MetricFlow::torus(3, {TimeFactor::exponential(1.0, -1.0)})}) {
    const PathSample p = path_on(flow, 0.2, 1e-3, 8);
    const DampedTransport dt = evolve_Q(flow, p);
    const CurvatureData K = flow.curvature_bound();
    const int d = flow.dim();
    for (std::size_t k = 0; k < dt.Q.size(); k += 20) {
      const double scalar = dt.Q[k](0, 0);
      CHECK((dt.Q[k] - scalar * Mat::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-10);
    }
    (void)K;
  }
}

TEST_CASE("Ricci-flow sphere: error against the analytic Q halves with the step") {
  const auto R = MetricFlow::ricci_sphere(2);
  // Q_{0,t} = exp(-int_0^t 2/(1-2r) dr) I = (1 - 2t) I.
  auto err = [&](double step) {
    const PathSample p = path_on(R, 0.2, step, 9);
    return std::abs(evolve_Q(R, p).Q.back()(0, 0) - 0.6);
  };
  const double e1 = err(1e-2), e2 = err(5e-3);
  CHECK(e1 > 0.0);
  CHECK(std::log2(e1 / e2) >= 1.0 - 0.05);
}

TEST_CASE("operator norm and symmetric exponential") {
  Mat a(2, 2);
  a << 2.0, 1.0, 1.0, 2.0;
  const Mat e = expm_symmetric(a);
  // Eigenvalues 1 and 3 with eigenvectors (1,-1)/sqrt2 and (1,1)/sqrt2.
  CHECK(e(0, 0) == doctest::Approx((std::exp(3.0) + std::exp(1.0)) / 2));
  CHECK(e(0, 1) == doctest::Approx((std::exp(3.0) - std::exp(1.0)) / 2));
  CHECK(operator_norm(a) == doctest::Approx(3.0));
}
