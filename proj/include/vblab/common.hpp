#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace vblab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454836;

// Numeric failures share one base so callers (and the CLI) can map the whole
// family to a single failure class.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonConvergence : NumericError {
  using NumericError::NumericError;
};
struct SingularHessian : NumericError {
  using NumericError::NumericError;
};
struct DomainEscape : NumericError {
  using NumericError::NumericError;
};
struct DivergentIntegral : NumericError {
  using NumericError::NumericError;
};
struct NonIntegrableLatent : NumericError {
  using NumericError::NumericError;
};
struct ApproximationUnavailable : NumericError {
  using NumericError::NumericError;
};
struct NonFiniteResult : NumericError {
  using NumericError::NumericError;
};
struct GridTooCoarse : NumericError {
  using NumericError::NumericError;
};
struct UnsupportedModel : NumericError {
  using NumericError::NumericError;
};
struct IndexOutOfRange : NumericError {
  using NumericError::NumericError;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace vblab
