#pragma once

// Empirical checks of the curvature-equivalent inequalities, the q-relation
// algebra and the non-explosion integral test.

#include "mfl/coupling.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mfl {

struct Verdict {
  std::string name;
  std::string item;  ///< which statement of which result is checked
  Estimate lhs;
  Estimate rhs;
  double slack = 0.0;            ///< rhs.mean - lhs.mean
  double combined_stderr = 0.0;  ///< sqrt(lhs.stderr^2 + rhs.stderr^2)
  bool holds = false;            ///< lhs <= rhs + 3 combined_stderr (+ rounding allowance)
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, double>> diagnostics;
};

/// Fills slack, combined_stderr and holds.
Verdict make_verdict(std::string name, std::string item, const Estimate& lhs, const Estimate& rhs,
                     std::uint64_t seed);

/// |grad P_{s,t} f|^p <= E{|grad f|^p(X_t) exp(-p int K)}.
Verdict verify_gradient_inequality(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                                   double p, const CurvatureData& K, const McConfig& mc);

/// Entropy-type bound with p~ = min(p, 2); the p = 1 case is the log-Sobolev form.
Verdict verify_entropy_bound(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                             double p, const CurvatureData& K, const McConfig& mc);

struct NestedOptions {
  std::size_t n_inner = 500;
  int nodes = 8;               ///< u-grid nodes for the reverse bound
  std::size_t budget = 0;      ///< max inner paths in total; 0 means n_outer * n_inner
};

/// Reverse bound |grad P f|^2 <= [P f^p~ - (P f)^p~] / (p~(p~-1) int (E{...})^{-1} du).
/// For p~ in {1, 2} the inner expectations reduce to outer-path quantities;
/// otherwise nested simulation on `nested.nodes` u-nodes is used.
Verdict verify_reverse_bound(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                             double p, const CurvatureData& K, const McConfig& mc, const NestedOptions& nested = {});

/// (P f)^p(x) <= P f^p(y) exp{p rho_s^2 / (4 (p-1) int_s^t e^{2 int K})}; common random numbers.
Verdict verify_harnack(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                       const Vec& y, double p, const CurvatureData& K, const McConfig& mc);

/// P log f(x) <= log P f(y) + rho_s^2 / (4 int_s^t e^{2 int K}).
Verdict verify_log_harnack(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                           const Vec& y, const CurvatureData& K, const McConfig& mc);

/// q2 with (q2 - 1)/(q1 - 1) = int_s^t e^{2 int K} / int_s^r e^{2 int K}.
double solve_q_relation(double s, double t, double r, double q1, const CurvatureData& K);
/// r in (s, t) solving the same relation for given q1, q2.
double solve_q_relation_time(double s, double t, double q1, double q2, const CurvatureData& K);
/// Relative residual of the relation.
double q_relation_residual(double s, double t, double r, double q1, double q2, const CurvatureData& K);

struct HyperboundConfig {
  double s = 0.0;
  double r = 0.0;
  double t = 0.0;
  double q1 = 2.0;
  double q2 = 3.0;
  CurvatureData K;
};

/// {P_{s,r}(P_{r,t} f)^{q2}}^{1/q2} <= (P_{s,t} f^{q1})^{1/q1} for 1 < q1 <= q2, and the
/// reversed inequality for 0 < q2 <= q1 or q2 <= q1 < 0. mc.n_paths is the outer count.
Verdict verify_hyperbound(const MetricFlow& flow, const ScalarField& f, const Vec& x, const HyperboundConfig& cfg,
                          const McConfig& mc, const NestedOptions& nested = {});

/// W_p upper bound from the parallel coupling against rho_s e^{-int K}.
Verdict verify_contraction(const MetricFlow& flow, const Vec& x, const Vec& y, double s, double t, double p,
                           const CurvatureData& K, const McConfig& mc);

struct GrowthReport {
  std::vector<double> R;
  std::vector<double> F;     ///< F(R) = int_1^R dt int_1^t exp(-int_r^t psi) dr
  double F_double = 0.0;     ///< F(2 R_max)
  double ratio = 0.0;        ///< F(2 R_max) / F(R_max)
  double tail_exponent = 0.0;  ///< alpha with inner(t) ~ t^{-alpha} near R_max
  std::string classification;  ///< divergent-trend, convergent-trend or inconclusive
};

/// Nested quadrature with `points` table entries between 1 and R_max.
GrowthReport grigoryan_integral(const std::function<double(double)>& psi, double R_max, int points = 200,
                                double h = 1e-3);

struct NonexplosionSpec {
  enum class Variant { Theorem, Case1, Case2 };

  Variant variant = Variant::Theorem;
  std::function<double(double)> psi;
  std::function<double(double)> phi;
  std::function<double(double)> h = [](double) { return 1.0; };
  /// Case 2: d_t rho + <Z, grad rho> as a function of (t, rho); zero when empty.
  std::function<double(double, double)> radial;
  int dim = 2;
  double horizon = 1.0;
  double R_max = 200.0;
  int t_samples = 16;
  int rho_samples = 64;
};

struct NonexplosionReport {
  std::string variant;
  bool nonnegative = true;          ///< sampled nonnegativity of the inputs
  bool hypothesis_holds = true;     ///< case 2 comparison bound on the sampled grid
  std::size_t violations = 0;
  double worst_gap = 0.0;           ///< max lhs - rhs of the case 2 bound
  GrowthReport growth;
  bool established = false;         ///< all checks pass and the growth is divergent-trend
};

NonexplosionReport nonexplosion_check(const NonexplosionSpec& spec);

}  // namespace mfl
