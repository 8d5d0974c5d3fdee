#pragma once

// Monte Carlo semigroup values, derivative formulas and curvature recovery.

#include "mfl/damped_transport.hpp"
#include "mfl/fields.hpp"
#include "mfl/stats.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace mfl {

struct McConfig {
  std::size_t n_paths = 10000;
  double step = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t task = 0;  ///< substream family; equal tasks share noise
};

/// Weight profile h for the integrated derivative formula.
struct HProfile {
  enum class Variant { Linear, TimeChanged, Custom };

  Variant variant = Variant::Linear;
  double radius = 0.0;                          ///< TimeChanged
  std::vector<std::pair<double, double>> table; ///< Custom knots (r, h(r)), piecewise linear

  static HProfile linear() { return {}; }
  static HProfile time_changed(double radius);
  static HProfile custom(std::vector<std::pair<double, double>> knots);

  /// h'(r) on [s, t] for the deterministic variants.
  double slope(double s, double t, double r) const;
};

/// P_{s,t} f(x).
Estimate semigroup(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                   const McConfig& mc);

/// E{Q*_{s,t} u_t^{-1} grad f(X_t)} in the frame at (s, x). An empty frame0
/// selects the flow's orthonormal frame.
VectorEstimate bismut_pathwise(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                               const Mat& frame0, const McConfig& mc);

/// (1/sqrt 2) E{f(X_t) sum_k h'(t_k) Q*_{s,t_k} dB_k}.
VectorEstimate bismut_integrated(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                                 const Mat& frame0, const HProfile& h, const McConfig& mc);

struct BismutPair {
  VectorEstimate pathwise;
  VectorEstimate integrated;
  Estimate gap_norm;  ///< per-path difference, |mean| with its stderr
};

/// Both estimators on one shared ensemble.
BismutPair bismut_both(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                       const Mat& frame0, const McConfig& mc);

struct LocalOptions {
  double radius = 1.0;
  std::size_t n_inner = 0;       ///< 0 selects ceil(sqrt(n_paths))
  std::size_t inner_budget = 0;  ///< max inner paths in total; 0 selects 100 n_paths
};

struct LocalEstimate {
  VectorEstimate estimate;
  std::size_t exits = 0;       ///< paths leaving the ball before t
  std::size_t incomplete = 0;  ///< paths whose clock did not reach t - s before leaving
  double nested_bias_delta = 0.0;
};

/// Localized formula with the time-changed profile driven by cos(pi rho / 2R).
LocalEstimate bismut_local(const MetricFlow& flow, const ScalarField& f, double s, double t, const Vec& x,
                           const Mat& frame0, const LocalOptions& opts, const McConfig& mc);

/// f(y) = <log_x y, X>_s chi(rho_s(x, y) / r_c); grad f(x) = X, Hess f(x) = 0.
ScalarField normal_linear_field(const MetricFlow& flow, double s, const Vec& x, const Vec& X, double r_c);

struct RecoveryOptions {
  double t1 = 0.02;
  int steps = 80;                 ///< steps to t2 = 2 t1; multiple of 4
  std::size_t n_paths = 400000;
  std::uint64_t seed = 0;
  std::uint64_t task = 0;
  double p_grad = 2.0;            ///< exponent in the gradient formula
  double p_var = 2.0;             ///< exponent in the variance formula, > 1
  double shift = 1000.0;          ///< n in f_n = n + f
  double cutoff = 0.0;            ///< 0 selects min(0.9 inj, 10)
  bool control_variate = true;
  bool strict = false;            ///< throw SignalBelowNoise instead of flagging
  std::size_t batches = 32;
};

struct RecoveryResult {
  std::string formula;
  Estimate value;         ///< 2 v(t1) - v(t2)
  Estimate at_t1;
  Estimate at_t2;
  Estimate half_grid;     ///< 2 v(t1/2) - v(t1)
  Estimate shifted_2n;    ///< value with f_{2n}; equal to value for the gradient formula
  bool below_noise = false;
};

struct RecoveryBundle {
  RecoveryResult grad;
  RecoveryResult variance;
  RecoveryResult entropy;
};

/// All three asymptotic formulas from one ensemble.
RecoveryBundle curvature_recover(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                 const RecoveryOptions& opts);
RecoveryResult curvature_recover_grad(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                      const RecoveryOptions& opts);
RecoveryResult curvature_recover_variance(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                          const RecoveryOptions& opts);
RecoveryResult curvature_recover_entropy(const MetricFlow& flow, double s, const Vec& x, const Vec& X,
                                         const RecoveryOptions& opts);

struct KolmogorovResidual {
  Estimate backward;
  Estimate forward;
  double delta = 0.0;
};

/// Residuals of both Kolmogorov equations with common random numbers.
KolmogorovResidual kolmogorov_residual(const MetricFlow& flow, const ScalarField& f, double s, double t,
                                       const Vec& x, const McConfig& mc, double delta = 1e-2,
                                       double h_fd = 1e-3);

/// Frame at (s, x): frame0 when given, else the flow's orthonormal frame.
Mat start_frame(const MetricFlow& flow, double s, const Vec& x, const Mat& frame0);

}  // namespace mfl
