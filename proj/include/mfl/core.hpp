#pragma once

// Shared value types and the error type used across the library.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace mfl {

// Intrinsic dimension is capped so that all small vectors and matrices live on
// the stack. Ambient representations need one extra coordinate.
constexpr int kMaxDim = 5;
constexpr int kMaxAmbient = kMaxDim + 1;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxAmbient, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxAmbient, kMaxAmbient>;

/// Read-only view of any contiguous vector, e.g. a frame column.
using VecRef = const Eigen::Ref<const Eigen::VectorXd>&;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

enum class ErrorCode : int {
  Ok = 0,
  InvalidArgument,
  HorizonExceeded,
  OffManifold,
  CutLocusAmbiguity,
  FrameNotOrthonormal,
  StencilOutOfDomain,
  DegenerateFrame,
  NumericalBlowup,
  MissingGradient,
  DegenerateInterval,
  RadiusTooLarge,
  NestedBudgetExceeded,
  SignalBelowNoise,
  InsufficientSamples,
  NonPositiveField,
  FieldBelowOne,
  NoSolution,
  NoMinimizer,
  UnsupportedDrift,
  ConfigInvalid,
  IoError,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Vec zero_vec(int n) { return Vec::Zero(n); }

}  // namespace mfl
