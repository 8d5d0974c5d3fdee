#include "mfl/stats.hpp"

#include <algorithm>
#include <cmath>

namespace mfl {

Estimate VectorEstimate::norm() const {
  Estimate out;
  out.n = n;
  out.mean = mean.norm();
  if (out.mean > 0.0) {
    // first-order propagation with independent components
    double var = 0.0;
    for (int i = 0; i < mean.size(); ++i) {
      const double w = mean[i] / out.mean;
      var += w * w * stderr_[i] * stderr_[i];
    }
    out.stderr_ = std::sqrt(var);
  } else {
    out.stderr_ = stderr_.norm();
  }
  return out;
}

Estimate summarize(std::span<const double> samples) {
  if (samples.size() < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two samples");
  KahanSum sum;
  for (double v : samples) sum.add(v);
  const double n = static_cast<double>(samples.size());
  const double mean = sum.value() / n;
  KahanSum sq;
  for (double v : samples) sq.add((v - mean) * (v - mean));
  Estimate out;
  out.mean = mean;
  out.n = samples.size();
  out.stderr_ = std::sqrt(sq.value() / (n - 1.0) / n);
  return out;
}

VectorEstimate summarize(const std::vector<Vec>& samples) {
  if (samples.size() < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two samples");
  const int dim = static_cast<int>(samples.front().size());
  VectorEstimate out;
  out.n = samples.size();
  out.mean.resize(dim);
  out.stderr_.resize(dim);
  std::vector<double> column(samples.size());
  for (int c = 0; c < dim; ++c) {
    for (std::size_t i = 0; i < samples.size(); ++i) column[i] = samples[i][c];
    const Estimate e = summarize(column);
    out.mean[c] = e.mean;
    out.stderr_[c] = e.stderr_;
  }
  return out;
}

Estimate controlled_mean(std::span<const double> y, const std::vector<std::vector<double>>& controls,
                         std::span<const double> control_means) {
  const std::size_t n = y.size();
  const std::size_t m = controls.size();
  if (n < m + 2) throw Error(ErrorCode::InsufficientSamples, "too few samples for control variates");
  if (control_means.size() != m) throw Error(ErrorCode::InvalidArgument, "control mean count mismatch");
  if (m == 0) return summarize(y);

  // Centre everything, then solve the normal equations for the coefficients.
  const Estimate ybar = summarize(y);
  Eigen::VectorXd cbar(m);
  for (std::size_t j = 0; j < m; ++j) {
    KahanSum s;
    for (double v : controls[j]) s.add(v);
    cbar[j] = s.value() / static_cast<double>(n);
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd c(m);
    for (std::size_t j = 0; j < m; ++j) c[j] = controls[j][i] - cbar[j];
    cov.noalias() += c * c.transpose();
    cross += c * (y[i] - ybar.mean);
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() == Eigen::Success && cov.diagonal().minCoeff() > 0.0) beta = ldlt.solve(cross);

  std::vector<double> adjusted(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = y[i];
    for (std::size_t j = 0; j < m; ++j) v -= beta[j] * (controls[j][i] - control_means[j]);
    adjusted[i] = v;
  }
  return summarize(adjusted);
}

BatchedMeans::BatchedMeans(std::size_t columns, std::size_t rows)
    : columns_(columns), rows_(rows), data_(columns * rows, 0.0) {}

Eigen::VectorXd BatchedMeans::means() const { return means_excluding(0, 0); }

Eigen::VectorXd BatchedMeans::means_excluding(std::size_t lo, std::size_t hi) const {
  Eigen::VectorXd out(columns_);
  const std::size_t count = rows_ - (hi - lo);
  for (std::size_t c = 0; c < columns_; ++c) {
    KahanSum s;
    for (std::size_t r = 0; r < rows_; ++r) {
      if (r >= lo && r < hi) continue;
      s.add(at(r, c));
    }
    out[c] = s.value() / static_cast<double>(count);
  }
  return out;
}

Estimate BatchedMeans::functional(const std::function<double(const Eigen::VectorXd&)>& g,
                                  std::size_t batches) const {
  return jackknife(g, batches, [](const Eigen::VectorXd& m) { return m; });
}

Estimate BatchedMeans::controlled_functional(const std::function<double(const Eigen::VectorXd&)>& g,
                                             const std::vector<std::size_t>& control_columns,
                                             const Eigen::VectorXd& control_means, std::size_t batches) const {
  const std::size_t m = control_columns.size();
  if (static_cast<std::size_t>(control_means.size()) != m) {
    throw Error(ErrorCode::InvalidArgument, "control mean count mismatch");
  }
  if (m == 0) return functional(g, batches);
  if (rows_ < m + 2) throw Error(ErrorCode::InsufficientSamples, "too few rows for control variates");
  const Eigen::VectorXd mu = means();
  Eigen::MatrixXd scc = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd sjc = Eigen::MatrixXd::Zero(columns_, m);
  Eigen::VectorXd c(m);
  Eigen::VectorXd row(columns_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t j = 0; j < m; ++j) c[j] = at(r, control_columns[j]) - mu[control_columns[j]];
    for (std::size_t j = 0; j < columns_; ++j) row[j] = at(r, j) - mu[j];
    scc.noalias() += c * c.transpose();
    sjc.noalias() += row * c.transpose();
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(scc);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(columns_, m);
  if (ldlt.info() == Eigen::Success && scc.diagonal().minCoeff() > 0.0) {
    beta = ldlt.solve(sjc.transpose()).transpose();
  }
  std::vector<std::size_t> cols = control_columns;
  return jackknife(g, batches, [beta, cols, control_means](const Eigen::VectorXd& means) {
    Eigen::VectorXd dev(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) dev[j] = means[cols[j]] - control_means[j];
    return (means - beta * dev).eval();
  });
}

Estimate BatchedMeans::jackknife(const std::function<double(const Eigen::VectorXd&)>& g, std::size_t batches,
                                 const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& adjust) const {
  if (rows_ < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two rows");
  batches = std::clamp<std::size_t>(batches, 2, rows_);
  // Per-batch column sums, accumulated in row order.
  std::vector<Eigen::VectorXd> batch_sum(batches, Eigen::VectorXd::Zero(columns_));
  std::vector<std::size_t> batch_rows(batches);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(columns_);
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * rows_ / batches;
    const std::size_t hi = (b + 1) * rows_ / batches;
    batch_rows[b] = hi - lo;
    for (std::size_t c = 0; c < columns_; ++c) {
      KahanSum s;
      for (std::size_t r = lo; r < hi; ++r) s.add(at(r, c));
      batch_sum[b][c] = s.value();
    }
  }
  for (std::size_t c = 0; c < columns_; ++c) {
    KahanSum s;
    for (std::size_t b = 0; b < batches; ++b) s.add(batch_sum[b][c]);
    total[c] = s.value();
  }
  Estimate out;
  out.n = rows_;
  out.mean = g(adjust(total / static_cast<double>(rows_)));
  std::vector<double> leave_out(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const Eigen::VectorXd m = (total - batch_sum[b]) / static_cast<double>(rows_ - batch_rows[b]);
    leave_out[b] = g(adjust(m));
  }
  KahanSum s;
  for (double v : leave_out) s.add(v);
  const double bar = s.value() / static_cast<double>(batches);
  KahanSum sq;
  for (double v : leave_out) sq.add((v - bar) * (v - bar));
  const double bb = static_cast<double>(batches);
  out.stderr_ = std::sqrt((bb - 1.0) / bb * sq.value());
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace mfl
