#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vblab/model.hpp"

namespace vblab {

// Maximiser of theta' beta~ - alpha~ psi(theta): solves
//   grad_psi(theta) = (sum_r/n + beta0/n) / (1 + alpha0/n).
Vector theta_hat(const Model& model, const std::vector<Vector>& r,
                 const Hyperparams& prior);

// Sigma_n = [(n + alpha0) hess_psi(theta_hat)]^-1.
Matrix sigma_n(const Model& model, const Vector& theta_hat_value, double n,
               double alpha0);

struct NormalLimit {
  Vector mean;  // theta_hat
  Matrix cov;   // Sigma_n
};

// Limit object for the posterior at hyperparameters (alpha, beta):
// mean solves grad_psi = beta/alpha, cov = [alpha hess_psi(mean)]^-1.
NormalLimit normal_limit(const Model& model, const Hyperparams& hp);

struct GridPlan {
  double half_width_sds = 8.0;
  int points_per_axis = 4097;
  std::string describe(int dims) const;
};

// Total-variation distance between q_n and its normal limit by composite
// Simpson quadrature on mean +/- half_width_sds posterior sds (m <= 2).
// q_n is normalized numerically on the same grid; throws GridTooCoarse when
// the grid demonstrably misses mass (normal mass or, where a closed-form
// normalizer exists, q_n mass deviates from 1 by more than 1e-4).
double normality_distance(const Model& model, const Hyperparams& hp,
                          const NormalLimit& limit, const GridPlan& plan = {});

// Plot-ready density values on the same grid (m = 1: theta, q_n, limit).
struct DensityRow {
  Vector theta;
  double q_n = 0.0;
  double normal_limit = 0.0;
};
std::vector<DensityRow> density_grid(const Model& model, const Hyperparams& hp,
                                     const NormalLimit& limit,
                                     const GridPlan& plan = {});

struct NormalityReport {
  double n = 0.0;
  double tv_distance = 0.0;
  double kl_divergence = 0.0;  // secondary metric, may be large
  double c1_top_eig = 0.0;
  std::pair<double, double> c2_ratio_bounds{1.0, 1.0};
  double c3_mass = 0.0;
  std::string grid_spec;
};

// C1: largest eigenvalue of Sigma_n. C2: eigenvalue range of
// hess_psi(theta) hess_psi(theta_hat)^-1 over a sampled ball of radius
// eps_ball. C3: q_n mass of B(theta_hat, delta) by quadrature.
NormalityReport check_c1_c2_c3(const Model& model, const Hyperparams& hp,
                               const NormalLimit& limit, double delta,
                               double eps_ball, const GridPlan& plan = {});

struct MonteCarloMatrix {
  Matrix estimate;
  Matrix standard_error;
  int samples = 0;
};

// Monte-Carlo estimate of E_y{ E_x[phi] E_x[phi]' } at theta_star, with
// phi = u(x, y) - grad_psi(theta_star) and E_x taken under the E-step factor.
MonteCarloMatrix phi_moment_matrix(const Model& model, const Vector& theta_star,
                                   int mc_samples, std::uint64_t seed);

struct PsdReport {
  Matrix difference;  // hess_psi(theta_star) - phi moment matrix
  double min_eigenvalue = 0.0;
  double mc_standard_error = 0.0;  // propagated onto the minimum eigenvalue
  bool pass = false;               // min eigenvalue >= -3 standard errors
};

PsdReport verify_psd_inequality(const Model& model, const Vector& theta_star,
                                int mc_samples, std::uint64_t seed);

struct LimitCheck {
  std::string label;
  Matrix observed;
  Matrix expected;
  double max_abs_dev = 0.0;
  double tolerance = 0.0;  // 3 standard errors at the relevant scale
  bool pass = false;
};

struct EstepLimitReport {
  double n = 0.0;
  LimitCheck growth_rate;     // beta(theta*)/n vs grad_psi(theta*)
  LimitCheck jacobian_limit;  // D beta(theta*)/n vs hess_psi - phi moments
  LimitCheck complete_cov;    // E[(u - grad_psi)(u - grad_psi)'] vs hess_psi
};

EstepLimitReport verify_estep_limits(const Model& model,
                                         const Vector& theta_star, int n,
                                         std::uint64_t seed,
                                         int mc_samples = 100000);

struct LimitRatioCell {
  double n = 0.0;
  std::uint64_t seed = 0;
  Matrix n_cov;                  // n * Cov(q_theta) at the VB fixed point
  Vector ratio_spectrum;         // eigenvalues of n_cov * hess_psi(theta*)
  double ratio_to_inv_hess = 0.0;       // largest eigenvalue vs reference 1
  double ratio_to_half_inv_hess = 0.0;  // same vs reference 1/2
};

struct LimitRatioReport {
  std::vector<LimitRatioCell> cells;  // (n, seed) lexicographic order
};

// Scaled posterior covariance against the two candidate reference lines
// (neither is adjudicated): [hess_psi]^-1 and half of it.
LimitRatioReport limit_ratio_experiment(const Model& model,
                                        const Vector& theta_star,
                                        const std::vector<double>& n_grid,
                                        const std::vector<std::uint64_t>& seeds,
                                        const Hyperparams& prior);

}  // namespace vblab
