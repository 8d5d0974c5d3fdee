#pragma once

// Damped parallel transport dQ/dt = -R^Z_t(u_t) Q along a simulated path.

#include "mfl/frame_sde.hpp"

#include <vector>

namespace mfl {

/// exp(A) for symmetric A by eigendecomposition.
Mat expm_symmetric(const Mat& a);

/// Largest singular value.
double operator_norm(const Mat& q);

/// Streaming integrator. Each step uses the average of R^Z at both ends of
/// the step in a single matrix exponential.
class DampedTransportStepper {
 public:
  DampedTransportStepper(const MetricFlow& flow, const FramePoint& start);

  const Mat& Q() const { return q_; }
  /// Advance to the next node of the path.
  void advance(const FramePoint& next, double h);

 private:
  const MetricFlow& flow_;
  Mat q_;
  Mat r_prev_;
};

struct DampedTransport {
  std::vector<double> times;
  std::vector<Mat> Q;  ///< Q_{s, t_k}
};

DampedTransport evolve_Q(const MetricFlow& flow, const PathSample& path);

struct QCertificate {
  double max_violation = 0.0;   ///< max_k ||Q_{s,t_k}|| - exp(-int K)
  double max_abs_gap = 0.0;     ///< max_k | ||Q|| - exp(-int K) |
  int worst_node = 0;
};

/// Compares ||Q_{s,r}|| with exp(-int_s^r K(tau, X_tau) dtau), trapezoid rule on the path grid.
QCertificate q_norm_certificate(const PathSample& path, const DampedTransport& dt, const CurvatureData& K);

}  // namespace mfl
