#pragma once

#include <functional>
#include <memory>

#include "vblab/model.hpp"
#include "vblab/quadrature.hpp"
#include "vblab/rng.hpp"

namespace vblab {

// Model A: Gaussian convolution, m = 2.
//   x ~ N(theta_1, 1), y = x + w with w ~ N(theta_2, 1);
//   u(x, y) = (x, y - x), psi(theta) = (theta_1^2 + theta_2^2)/2 + log 2pi,
//   f(x, y) = exp{-x^2/2 - (y - x)^2/2}.
// Only theta_1 + theta_2 is identified by the marginal of y.
class ModelA final : public Model {
 public:
  std::string name() const override { return "A"; }
  int dim() const override { return 2; }

  double psi(const Vector& theta) const override;
  Vector grad_psi(const Vector& theta) const override;
  Matrix hess_psi(const Vector& theta) const override;
  Tensor3 psi_d3(const Vector& theta) const override;
  Tensor4 psi_d4(const Vector& theta) const override;

  Vector e_step(const Vector& theta, double y) const override;
  double latent_entropy(const Vector& theta, double y) const override;
  double log_f_expectation(const Vector& theta, double y) const override;

  std::vector<double> simulate(const Vector& theta_star, int n,
                               std::uint64_t seed) const override;
  std::vector<Vector> simulate_complete(const Vector& theta_star, int n,
                                        std::uint64_t seed) const override;

  std::optional<double> log_normalizer_closed(
      const Hyperparams& hp) const override;
  std::optional<Vector> posterior_mean_closed(
      const Hyperparams& hp) const override;
  std::optional<double> psi_expectation_closed(
      const Hyperparams& hp) const override;
  std::optional<Matrix> posterior_cov_closed(
      const Hyperparams& hp) const override;
  std::optional<ExactPosterior> exact_posterior(
      const std::vector<double>& y, const Hyperparams& prior) const override;
  std::optional<Vector> exact_vb_fixed_point(
      const std::vector<double>& y, const Hyperparams& prior) const override;

  static double log_f(double x, double y);
  static Vector u_stat(double x, double y);
};

// Model B: scalar identifiable restriction of Model A, m = 1.
//   x ~ N(theta, 1), y = x + noise(0, 1); u = x, psi = theta^2/2 + log 2pi.
class ModelB final : public Model {
 public:
  std::string name() const override { return "B"; }
  int dim() const override { return 1; }

  double psi(const Vector& theta) const override;
  Vector grad_psi(const Vector& theta) const override;
  Matrix hess_psi(const Vector& theta) const override;
  Tensor3 psi_d3(const Vector& theta) const override;
  Tensor4 psi_d4(const Vector& theta) const override;

  Vector e_step(const Vector& theta, double y) const override;
  double latent_entropy(const Vector& theta, double y) const override;
  double log_f_expectation(const Vector& theta, double y) const override;

  std::vector<double> simulate(const Vector& theta_star, int n,
                               std::uint64_t seed) const override;
  std::vector<Vector> simulate_complete(const Vector& theta_star, int n,
                                        std::uint64_t seed) const override;

  std::optional<double> log_normalizer_closed(
      const Hyperparams& hp) const override;
  std::optional<Vector> posterior_mean_closed(
      const Hyperparams& hp) const override;
  std::optional<double> psi_expectation_closed(
      const Hyperparams& hp) const override;
  std::optional<Matrix> posterior_cov_closed(
      const Hyperparams& hp) const override;
  std::optional<ExactPosterior> exact_posterior(
      const std::vector<double>& y, const Hyperparams& prior) const override;
  std::optional<Vector> exact_vb_fixed_point(
      const std::vector<double>& y, const Hyperparams& prior) const override;

  static double log_f(double x, double y);
  static Vector u_stat(double x, double y);
};

// Model C: Poisson counts with a degenerate (empty) latent variable, m = 1.
//   y ~ Poisson(e^theta); u = y, psi = e^theta, f = 1/y!.
// VB coincides with exact Bayes here; the posterior over lambda = e^theta is
// Gamma(beta, alpha), so q_n in theta coordinates is genuinely non-Gaussian.
class ModelC final : public Model {
 public:
  std::string name() const override { return "C"; }
  int dim() const override { return 1; }

  double psi(const Vector& theta) const override;
  Vector grad_psi(const Vector& theta) const override;
  Matrix hess_psi(const Vector& theta) const override;
  Tensor3 psi_d3(const Vector& theta) const override;
  Tensor4 psi_d4(const Vector& theta) const override;

  Vector e_step(const Vector& theta, double y) const override;
  double latent_entropy(const Vector& theta, double y) const override;
  double log_f_expectation(const Vector& theta, double y) const override;

  std::vector<double> simulate(const Vector& theta_star, int n,
                               std::uint64_t seed) const override;
  std::vector<Vector> simulate_complete(const Vector& theta_star, int n,
                                        std::uint64_t seed) const override;

  bool hyperparams_integrable(const Hyperparams& hp) const override;
  std::optional<double> log_normalizer_closed(
      const Hyperparams& hp) const override;
  std::optional<Vector> posterior_mean_closed(
      const Hyperparams& hp) const override;
  std::optional<double> psi_expectation_closed(
      const Hyperparams& hp) const override;
  std::optional<ExactPosterior> exact_posterior(
      const std::vector<double>& y, const Hyperparams& prior) const override;
  std::optional<Vector> exact_vb_fixed_point(
      const std::vector<double>& y, const Hyperparams& prior) const override;
};

// User-supplied model with a scalar latent variable; E-step expectations are
// Gauss-Hermite integrals taken after an affine shift by per-(theta, y)
// location/scale hints.
struct GenericModelConfig {
  int dim = 1;
  std::string label = "generic";
  std::function<double(double x, double y)> log_f;
  std::function<Vector(double x, double y)> u;
  std::function<double(const Vector& theta)> psi;
  // (location, scale) of the latent factor q_{x_i} at (theta, y).
  std::function<std::pair<double, double>(const Vector& theta, double y)>
      latent_hint;
  std::function<bool(const Vector& theta)> in_domain;  // optional
  // Optional marginal sampler of y given theta_star (one observation).
  std::function<double(Rng& rng, const Vector& theta_star)> sample_y;
  int gh_nodes = 64;
  double tail_mass_limit = 1e-3;
};

class GenericQuadModel final : public Model {
 public:
  explicit GenericQuadModel(GenericModelConfig cfg);

  std::string name() const override { return cfg_.label; }
  int dim() const override { return cfg_.dim; }

  double psi(const Vector& theta) const override;
  Vector grad_psi(const Vector& theta) const override;
  bool in_domain(const Vector& theta) const override;

  Vector e_step(const Vector& theta, double y) const override;
  double latent_entropy(const Vector& theta, double y) const override;
  double log_f_expectation(const Vector& theta, double y) const override;

  std::vector<double> simulate(const Vector& theta_star, int n,
                               std::uint64_t seed) const override;
  std::vector<Vector> simulate_complete(const Vector& theta_star, int n,
                                        std::uint64_t seed) const override;

 private:
  struct LatentMoments {
    Vector u_mean;
    double log_z;          // log normalizer of the latent factor
    double log_w_mean;     // <log w> with w the unnormalized density
    double log_f_mean;     // <log f>
    double tail_fraction;  // mass share of the outermost nodes
  };
  LatentMoments latent_moments(const Vector& theta, double y) const;

  GenericModelConfig cfg_;
  GaussHermite gh_;
};

// Factory for the built-in models ("A", "B", "C").
std::unique_ptr<Model> make_model(const std::string& name);

// Generic replicas of the built-ins, used to validate the quadrature E-step
// path against the closed forms. Model C has no latent variable, so its
// replica carries a dummy standard-normal latent whose entropy cancels its
// own log-density contribution exactly.
GenericModelConfig model_a_replica_config();
GenericModelConfig model_b_replica_config();
GenericModelConfig model_c_replica_config();

}  // namespace vblab
