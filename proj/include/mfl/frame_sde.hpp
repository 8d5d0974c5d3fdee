#pragma once

// Horizontal diffusion on the orthonormal frame bundle of a moving metric.
//
// One step moves the base point along the geodesic with initial velocity
// u(sqrt(2) dB + u^{-1} Z h), carries the frame along by parallel transport,
// applies the vertical correction u (I - G h / 2) and re-orthonormalizes the
// frame for g_{t+h}.

#include "mfl/geometry.hpp"
#include "mfl/rng.hpp"

#include <optional>
#include <vector>

namespace mfl {

/// Simulations refuse end times past horizon - kHorizonMargin.
constexpr double kHorizonMargin = 1e-3;

struct StepDiagnostics {
  double defect_before = 0.0;   ///< max |u^T g_{t+h} u - I| before Gram-Schmidt
  double gs_correction = 0.0;   ///< max entry of the Gram-Schmidt change
};

/// Modified Gram-Schmidt for g_t. Keeps the direction of the first column.
Mat reorthonormalize(const MetricFlow& flow, double t, const Vec& x, const Mat& u);

FramePoint horizontal_step(const MetricFlow& flow, const FramePoint& fp, const Vec& dB, double h,
                           StepDiagnostics* diag = nullptr);

/// Uniform grid with exact node times s + k (t - s) / n.
struct PathGrid {
  double s = 0.0;
  double t = 0.0;
  int steps = 1;

  double h() const { return (t - s) / steps; }
  double time(int k) const { return k == steps ? t : s + k * (t - s) / steps; }

  /// Number of steps chosen as round((t - s) / step), at least one.
  static PathGrid make(double s, double t, double step);
};

/// Checks s <= t and t <= horizon - kHorizonMargin.
void check_interval(const MetricFlow& flow, double s, double t);

/// Explicit stepping over a grid; estimators read the state and the current
/// increment, then advance.
class PathWalker {
 public:
  PathWalker(const MetricFlow& flow, FramePoint start, PathGrid grid, NoiseStream noise);

  int k() const { return k_; }
  bool done() const { return k_ == grid_.steps; }
  const PathGrid& grid() const { return grid_; }
  const FramePoint& state() const { return state_; }
  /// sqrt(h)-scaled increment driving step k -> k+1.
  const Vec& increment();
  const StepNoise& noise();
  void advance();
  /// Moves with an externally supplied increment.
  void advance_with(const Vec& dB);
  const StepDiagnostics& last_diagnostics() const { return diag_; }

 private:
  void draw();

  const MetricFlow& flow_;
  FramePoint state_;
  PathGrid grid_;
  NoiseStream noise_;
  int k_ = 0;
  bool drawn_ = false;
  StepNoise current_;
  Vec dB_;
  StepDiagnostics diag_;
};

struct PathSample {
  std::vector<double> times;
  std::vector<FramePoint> states;
  std::vector<Vec> increments;            ///< dB_k for step k -> k+1
  std::vector<double> frame_defects;      ///< per step, before re-orthonormalization
  std::vector<double> radii;
  std::vector<std::optional<int>> exits;  ///< first node with rho_{t_k}(x_0, x_k) >= radius
  double max_gs_correction = 0.0;
};

PathSample simulate_path(const MetricFlow& flow, const Vec& x0, const Mat& frame0, double s, double t,
                         double step, const NoiseStream& noise, const std::vector<double>& radii = {});

/// Distance that maps cut-locus ambiguity to the cut distance.
double safe_distance(const MetricFlow& flow, double t, const Vec& x, const Vec& y);

}  // namespace mfl
