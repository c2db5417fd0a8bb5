#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vblab/common.hpp"
#include "vblab/tensor.hpp"

namespace vblab {

// Hyperparameters (alpha, beta) of the conjugate family
//   q(theta) = h(alpha, beta) exp{theta' beta - alpha psi(theta)}.
// They parameterize both the prior and the variational posterior.
struct Hyperparams {
  double alpha = 0.0;
  Vector beta;
};

// Closed-form posterior summary used as a test oracle and CLI diagnostic.
struct ExactPosterior {
  std::string family;  // "normal" or "log_gamma"
  Vector mean;         // theta-space mean
  Matrix cov;          // theta-space covariance
  Matrix precision;    // normal family only
  double gamma_shape = 0.0;  // log_gamma family only
  double gamma_rate = 0.0;
};

// Behavioral interface for a natural exponential family model with a scalar
// observable y and (possibly empty) latent x:
//   p(x, y | theta) = f(x, y) exp{theta' u(x, y) - psi(theta)}.
// Implementations are immutable after construction and safe to share across
// threads; every member is a pure function of its arguments.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;

  // Log-partition derivative stack. Orders 3 and 4 default to finite
  // differences of psi; override where analytic forms exist.
  virtual double psi(const Vector& theta) const = 0;
  virtual Vector grad_psi(const Vector& theta) const = 0;
  virtual Matrix hess_psi(const Vector& theta) const;
  virtual Tensor3 psi_d3(const Vector& theta) const;
  virtual Tensor4 psi_d4(const Vector& theta) const;

  virtual bool in_domain(const Vector& theta) const {
    return theta.size() == dim() && theta.allFinite();
  }

  // E-step for one observation: r_i = <u(x_i, y_i)> under the optimal latent
  // factor at the given theta.
  virtual Vector e_step(const Vector& theta, double y) const = 0;

  // Entropy of the optimal latent factor q_{x_i} at theta.
  virtual double latent_entropy(const Vector& theta, double y) const = 0;

  // <log f(x_i, y_i)> under q_{x_i} at theta.
  virtual double log_f_expectation(const Vector& theta, double y) const = 0;

  // Marginal sample of y_1..y_n at theta_star; deterministic in seed and
  // prefix-stable (observation i uses RNG substream i).
  virtual std::vector<double> simulate(const Vector& theta_star, int n,
                                       std::uint64_t seed) const = 0;

  // Complete-data sufficient statistics u(x_i, y_i) for the same draws.
  virtual std::vector<Vector> simulate_complete(const Vector& theta_star,
                                                int n,
                                                std::uint64_t seed) const = 0;

  // Integrability of exp{theta' beta - alpha psi(theta)} over the domain.
  virtual bool hyperparams_integrable(const Hyperparams& hp) const {
    return hp.alpha > 0.0 && hp.beta.size() == dim() && hp.beta.allFinite();
  }

  // Optional closed forms; nullopt means "dispatch to a numeric route".
  virtual std::optional<double> log_normalizer_closed(
      const Hyperparams&) const {
    return std::nullopt;
  }
  virtual std::optional<Vector> posterior_mean_closed(
      const Hyperparams&) const {
    return std::nullopt;
  }
  virtual std::optional<double> psi_expectation_closed(
      const Hyperparams&) const {
    return std::nullopt;
  }
  virtual std::optional<Matrix> posterior_cov_closed(const Hyperparams&) const {
    return std::nullopt;
  }

  // Exact-inference oracles (built-in models only).
  virtual std::optional<ExactPosterior> exact_posterior(
      const std::vector<double>&, const Hyperparams&) const {
    return std::nullopt;
  }
  virtual std::optional<Vector> exact_vb_fixed_point(
      const std::vector<double>&, const Hyperparams&) const {
    return std::nullopt;
  }
};

// Throws std::invalid_argument / DomainEscape when theta is structurally
// invalid or outside the model domain.
void validate_params(const Model& model, const Vector& theta);

// Throws std::invalid_argument for malformed (alpha, beta) and
// DivergentIntegral when the induced density is not integrable.
void validate_hyperparams(const Model& model, const Hyperparams& hp);

}  // namespace vblab
