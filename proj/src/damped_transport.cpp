#include "mfl/damped_transport.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace mfl {

Mat expm_symmetric(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  bool diagonal = true;
  for (int i = 0; i < n && diagonal; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && a(i, j) != 0.0) {
        diagonal = false;
        break;
      }
  if (diagonal) {
    Mat out = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) out(i, i) = std::exp(a(i, i));
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(a);
  const Vec w = eig.eigenvalues().array().exp().matrix();
  return eig.eigenvectors() * w.asDiagonal() * eig.eigenvectors().transpose();
}

double operator_norm(const Mat& q) {
  const Mat qtq = q.transpose() * q;
  Eigen::SelfAdjointEigenSolver<Mat> eig(qtq, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

DampedTransportStepper::DampedTransportStepper(const MetricFlow& flow, const FramePoint& start)
    : flow_(flow), q_(Mat::Identity(flow.dim(), flow.dim())), r_prev_(flow.rz_matrix(start)) {}

void DampedTransportStepper::advance(const FramePoint& next, double h) {
  const Mat r_next = flow_.rz_matrix(next);
  q_ = expm_symmetric(-0.5 * h * (r_prev_ + r_next)) * q_;
  r_prev_ = r_next;
}

DampedTransport evolve_Q(const MetricFlow& flow, const PathSample& path) {
  if (path.states.empty()) throw Error(ErrorCode::InvalidArgument, "empty path");
  DampedTransport out;
  out.times = path.times;
  out.Q.reserve(path.states.size());
  DampedTransportStepper stepper(flow, path.states.front());
  out.Q.push_back(stepper.Q());
  for (std::size_t k = 1; k < path.states.size(); ++k) {
    stepper.advance(path.states[k], path.times[k] - path.times[k - 1]);
    out.Q.push_back(stepper.Q());
  }
  return out;
}

QCertificate q_norm_certificate(const PathSample& path, const DampedTransport& dt, const CurvatureData& K) {
  QCertificate cert;
  double integral = 0.0;
  double k_prev = K.at(path.times.front(), path.states.front().x);
  cert.max_violation = operator_norm(dt.Q.front()) - 1.0;
  cert.max_abs_gap = std::abs(cert.max_violation);
  for (std::size_t k = 1; k < dt.Q.size(); ++k) {
    const double k_cur = K.at(path.times[k], path.states[k].x);
    integral += 0.5 * (path.times[k] - path.times[k - 1]) * (k_prev + k_cur);
    k_prev = k_cur;
    const double gap = operator_norm(dt.Q[k]) - std::exp(-integral);
    if (gap > cert.max_violation) {
      cert.max_violation = gap;
      cert.worst_node = static_cast<int>(k);
    }
    cert.max_abs_gap = std::max(cert.max_abs_gap, std::abs(gap));
  }
  return cert;
}

}  // namespace mfl
