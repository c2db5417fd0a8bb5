#pragma once

#include <array>
#include <functional>

#include "vblab/model.hpp"

namespace vblab {

// The tilted objective of the Laplace engine:
//   a_n(theta) = coeff * (psi(theta) - theta' scaled_target),
// so that n * a_n(theta) = alpha psi(theta) - theta' beta for the conjugate
// density with alpha = n * coeff and beta = n * coeff * scaled_target.
// `n` is the large parameter of the expansion and carries the prior
// pseudo-count, so it is a positive real rather than an integer.
struct TiltedObjective {
  const Model* model = nullptr;
  double n = 0.0;
  double coeff = 1.0;
  Vector scaled_target;

  double value(const Vector& theta) const;
  Vector grad(const Vector& theta) const;
  Matrix hess(const Vector& theta) const;
  Tensor3 d3(const Vector& theta) const;
  Tensor4 d4(const Vector& theta) const;

  // a_n(theta) = (1 + alpha0/n) psi(theta) - theta' (sum_r/n + beta0/n).
  static TiltedObjective from_counts(const Model& model, double n,
                                     double alpha0, const Vector& sum_r,
                                     const Vector& beta0);
  // n = alpha, coeff = 1, scaled_target = beta / alpha.
  static TiltedObjective from_hyperparams(const Model& model,
                                          const Hyperparams& hp);

  Hyperparams hyperparams() const;
};

// Derivative bundle for the multiplier b; only orders <= 2 are consumed.
struct BFunction {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
  std::function<Matrix(const Vector&)> hess;

  static BFunction one(int m);
  static BFunction coordinate(int j, int m);
  static BFunction of_psi(const Model& model);
};

// All expansion inputs evaluated at the minimiser of a_n.
struct LaplaceExpansion {
  int m = 0;
  Vector center;       // minimiser of a_n
  double a_min = 0.0;  // a_n at the center
  Matrix hess;         // D^2 a_n
  Matrix sigma;        // inverse of hess
  Tensor3 d3;
  Tensor4 d4;
  double b0 = 0.0;
  Vector b_grad;
  Matrix b_hess;
};

// Fourth / sixth central moments of a Gaussian with covariance sigma,
// assembled from the 3- and 15-term pairing sums.
double moment4(const Matrix& sigma, int i, int j, int k, int s);
double moment6(const Matrix& sigma, int i, int j, int k, int q, int r, int s);

LaplaceExpansion laplace_expand(const TiltedObjective& obj, const BFunction& b,
                                const Vector* init = nullptr);

// Value of \int b(theta) exp{-n a_n(theta)} dtheta with the O(1/n) correction.
// The prefactor lives in log space; only the bracket is linear.
struct LaplaceValue {
  double log_prefactor = 0.0;  // m/2 log 2pi - 1/2 log det(n hess) - n a_min
  double bracket = 0.0;        // b0 + correction / n
  double bracket_zeroth = 0.0; // b0

  double log_value() const;     // NonFiniteResult if bracket <= 0
  double value() const;         // NonFiniteResult on overflow
  double log_zeroth_value() const;
  double zeroth_value() const;
};

LaplaceValue laplace_integral(const LaplaceExpansion& exp, double n);

// Posterior mean as the coordinate-wise ratio of corrected expansions
// (b = theta_j over b = 1) sharing one center and tensor set.
Vector posterior_mean_laplace(const TiltedObjective& obj);

enum class CheckFlag { Pass, Fail, Inconclusive };

struct AssumptionPlan {
  int shell_points = 512;
};

// Sampled spot check of the analytical assumptions behind the expansion:
// (i) derivative magnitudes of orders 0..4 on a ball of radius eps,
// (ii) det D^2 a_n at the center, (iii') max of a_n(center) - a_n(theta)
// over a sampled shell at radii in [delta, eps] (strictly negative required).
struct AssumptionReport {
  std::array<double, 5> max_abs_deriv{};  // orders 0..4
  double det_hess = 0.0;
  double shell_max = 0.0;
  int shell_points = 0;
  CheckFlag derivatives_bounded = CheckFlag::Inconclusive;
  CheckFlag det_positive = CheckFlag::Inconclusive;
  CheckFlag shell_negative = CheckFlag::Inconclusive;
};

AssumptionReport check_assumptions(const TiltedObjective& obj, double eps,
                                   double delta,
                                   const AssumptionPlan& plan = {});

const char* to_string(CheckFlag flag);

}  // namespace vblab
