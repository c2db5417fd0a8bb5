#pragma once

#include <vector>

#include "vblab/model.hpp"

namespace vblab {

struct VBConfig {
  Vector init;
  double tol = 1e-9;
  int max_iter = 500;
  Hyperparams prior;
};

enum class MeanMethod { ClosedForm, Laplace, Quadrature };
const char* to_string(MeanMethod method);

// The variational posterior q_theta(theta) = h(a,b) exp{theta' b - a psi}.
struct VariationalPosterior {
  const Model* model = nullptr;
  Hyperparams hp;

  // Unnormalized log density theta' beta - alpha psi(theta).
  double unnormalized_log_density(const Vector& theta) const;
};

// One E-step pass: r_i = <u(x_i, y_i)> under the optimal latent factors at
// theta. Evaluations are independent across i; the reduction order used by
// callers is index order for bit reproducibility.
std::vector<Vector> e_step_all(const Model& model, const Vector& theta,
                               const std::vector<double>& y);

// alpha = n + alpha0, beta = sum_i r_i + beta0.
Hyperparams update_hyperparams(const std::vector<Vector>& r,
                               const Hyperparams& prior);

// Mean of q_theta. Dispatch order: model closed form, then corrected Laplace
// ratio, then dense quadrature (m <= 2). The method used is reported through
// `used` when non-null and recorded in VB traces.
Vector posterior_mean(const Model& model, const Hyperparams& hp,
                      MeanMethod* used = nullptr);

// log h(alpha, beta) with the free-energy dispatch order: closed form, then
// quadrature (m <= 2), then corrected Laplace.
double posterior_log_normalizer(const Model& model, const Hyperparams& hp);

// <psi(theta)> under q_theta; same dispatch order as the log normalizer.
double posterior_psi_expectation(const Model& model, const Hyperparams& hp);

// Covariance of q_theta: closed form, else quadrature (m <= 2).
Matrix posterior_cov(const Model& model, const Hyperparams& hp);

// Negative free energy of (q_X at theta_qx, q_theta at hp) given data and
// prior; the ascent objective of the two-stage procedure.
double free_energy(const Model& model, const Vector& theta_qx,
                   const Hyperparams& hp, const std::vector<double>& y,
                   const Hyperparams& prior);

// One fixed-point step: posterior_mean(update_hyperparams(e_step_all(theta))).
Vector phi_map(const Model& model, const Vector& theta,
               const std::vector<double>& y, const Hyperparams& prior);

struct VBTrace {
  std::vector<Vector> iterates;      // theta^(0..K)
  std::vector<double> free_energy;   // one value per iterate
  std::vector<double> step_norms;    // ||theta^(k+1) - theta^(k)||
  bool converged = false;
  Hyperparams final_hyperparams;     // equilibrium (alpha, beta) at theta^(K)
  MeanMethod mean_method = MeanMethod::ClosedForm;

  const Vector& final_iterate() const { return iterates.back(); }
  // Index of the converging step; equals the number of fixed-point
  // applications when the iteration cap was hit instead.
  int iterations() const;
};

// Iterates phi_map from cfg.init until the step norm drops to cfg.tol or
// max_iter applications. Non-convergence is reported in the trace, not
// thrown; the last iterate plus residual is what the trace carries.
VBTrace run_vb(const Model& model, const std::vector<double>& y,
               const VBConfig& cfg);

struct JacobianResult {
  Matrix jacobian;
  double spectral_norm = 0.0;  // operator norm, largest singular value
};

// Central finite-difference Jacobian of phi_map at theta.
JacobianResult jacobian_phi(const Model& model, const Vector& theta,
                            const std::vector<double>& y,
                            const Hyperparams& prior);

// Default starting point: the prior mean when a closed form exists, else a
// moment match to the empirical mean of the observable component.
Vector default_init(const Model& model, const Hyperparams& prior,
                    const std::vector<double>& y);

}  // namespace vblab
