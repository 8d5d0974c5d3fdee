#pragma once

// Monte Carlo result types and order-stable aggregation.

#include "mfl/core.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mfl {

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;

  double ci_lo() const { return mean - 1.96 * stderr_; }
  double ci_hi() const { return mean + 1.96 * stderr_; }
};

struct VectorEstimate {
  Vec mean;
  Vec stderr_;
  std::size_t n = 0;

  /// Euclidean norm of the mean with a first-order stderr.
  Estimate norm() const;
};

class KahanSum {
 public:
  void add(double v) noexcept {
    const double y = v - carry_;
    const double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const noexcept { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// Sample mean and stderr = sample_std / sqrt(n). Requires n >= 2.
Estimate summarize(std::span<const double> samples);

VectorEstimate summarize(const std::vector<Vec>& samples);

/// Known-mean regression control variates: returns the controlled mean of
/// `y` using columns of `controls` whose exact expectations are `control_means`.
Estimate controlled_mean(std::span<const double> y, const std::vector<std::vector<double>>& controls,
                         std::span<const double> control_means);

/// Per-sample rows of quantities, reduced by a smooth functional of their
/// column means. The point value uses all rows; the stderr is a
/// delete-one-batch jackknife over contiguous batches, so it is independent of
/// thread scheduling.
class BatchedMeans {
 public:
  BatchedMeans(std::size_t columns, std::size_t rows);

  double& at(std::size_t row, std::size_t column) { return data_[row * columns_ + column]; }
  double at(std::size_t row, std::size_t column) const { return data_[row * columns_ + column]; }
  std::size_t rows() const { return rows_; }
  std::size_t columns() const { return columns_; }

  Eigen::VectorXd means() const;

  Estimate functional(const std::function<double(const Eigen::VectorXd&)>& g,
                      std::size_t batches = 32) const;

  /// As functional(), with every column mean first adjusted by regression on
  /// the control columns, whose exact expectations are `control_means`.
  Estimate controlled_functional(const std::function<double(const Eigen::VectorXd&)>& g,
                                 const std::vector<std::size_t>& control_columns,
                                 const Eigen::VectorXd& control_means, std::size_t batches = 32) const;

 private:
  Eigen::VectorXd means_excluding(std::size_t lo, std::size_t hi) const;
  Estimate jackknife(const std::function<double(const Eigen::VectorXd&)>& g, std::size_t batches,
                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& adjust) const;

  std::size_t columns_;
  std::size_t rows_;
  std::vector<double> data_;
};

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace mfl
