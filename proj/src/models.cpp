#include "vblab/models.hpp"

#include <Eigen/LU>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>

#include "vblab/expfam.hpp"
#include "vblab/rng.hpp"

namespace vblab {

namespace {

using boost::math::digamma;
using boost::math::trigamma;

// Gaussian latent factor shared by Models A and B: q(x | y) is Normal with
// mean mu and variance 1/2, and log f = -x^2/2 - (y - x)^2/2, so
// <log f> = -((mu^2 + v) + ((y - mu)^2 + v)) / 2 with v = 1/2.
double gaussian_log_f_expectation(double mu, double y) {
  const double v = 0.5;
  return -0.5 * ((mu * mu + v) + ((y - mu) * (y - mu) + v));
}

double gaussian_latent_entropy() {
  // 0.5 log(2 pi e v) with v = 1/2.
  return 0.5 * (kLog2Pi + 1.0 + std::log(0.5));
}

// log h for the Gaussian-psi models: psi = |theta|^2/2 + log 2pi, so
// h^-1 = (2pi/alpha)^{m/2} exp{|beta|^2/(2 alpha)} (2pi)^{-alpha}.
double gaussian_log_normalizer(int m, const Hyperparams& hp) {
  return hp.alpha * kLog2Pi - 0.5 * m * (kLog2Pi - std::log(hp.alpha)) -
         hp.beta.squaredNorm() / (2.0 * hp.alpha);
}

double gaussian_psi_expectation(int m, const Hyperparams& hp) {
  const Vector mean = hp.beta / hp.alpha;
  return 0.5 * (mean.squaredNorm() + m / hp.alpha) + kLog2Pi;
}

double sum(const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += v;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model A

double ModelA::psi(const Vector& theta) const {
  return 0.5 * theta.squaredNorm() + kLog2Pi;
}

Vector ModelA::grad_psi(const Vector& theta) const { return theta; }

Matrix ModelA::hess_psi(const Vector&) const { return Matrix::Identity(2, 2); }

Tensor3 ModelA::psi_d3(const Vector&) const { return Tensor3(2); }

Tensor4 ModelA::psi_d4(const Vector&) const { return Tensor4(2); }

Vector ModelA::e_step(const Vector& theta, double y) const {
  const double x_mean = 0.5 * (y + theta[0] - theta[1]);
  Vector r(2);
  r << x_mean, y - x_mean;
  return r;
}

double ModelA::latent_entropy(const Vector&, double) const {
  return gaussian_latent_entropy();
}

double ModelA::log_f_expectation(const Vector& theta, double y) const {
  return gaussian_log_f_expectation(0.5 * (y + theta[0] - theta[1]), y);
}

std::vector<double> ModelA::simulate(const Vector& theta_star, int n,
                                     std::uint64_t seed) const {
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, i);
    const double x = theta_star[0] + rng.normal();
    y[i] = x + theta_star[1] + rng.normal();
  }
  return y;
}

std::vector<Vector> ModelA::simulate_complete(const Vector& theta_star, int n,
                                              std::uint64_t seed) const {
  std::vector<Vector> u(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, i);
    const double x = theta_star[0] + rng.normal();
    const double y = x + theta_star[1] + rng.normal();
    u[i] = u_stat(x, y);
  }
  return u;
}

std::optional<double> ModelA::log_normalizer_closed(
    const Hyperparams& hp) const {
  return gaussian_log_normalizer(2, hp);
}

std::optional<Vector> ModelA::posterior_mean_closed(
    const Hyperparams& hp) const {
  return Vector(hp.beta / hp.alpha);
}

std::optional<double> ModelA::psi_expectation_closed(
    const Hyperparams& hp) const {
  return gaussian_psi_expectation(2, hp);
}

std::optional<Matrix> ModelA::posterior_cov_closed(
    const Hyperparams& hp) const {
  return Matrix(Matrix::Identity(2, 2) / hp.alpha);
}

std::optional<ExactPosterior> ModelA::exact_posterior(
    const std::vector<double>& y, const Hyperparams& prior) const {
  const double n = static_cast<double>(y.size());
  const double sy = sum(y);
  Matrix precision = prior.alpha * Matrix::Identity(2, 2);
  precision.array() += 0.5 * n;
  Vector lin = prior.beta;
  lin.array() += 0.5 * sy;
  ExactPosterior post;
  post.family = "normal";
  post.precision = precision;
  post.cov = precision.inverse();
  post.mean = post.cov * lin;
  return post;
}

std::optional<Vector> ModelA::exact_vb_fixed_point(
    const std::vector<double>& y, const Hyperparams& prior) const {
  const double n = static_cast<double>(y.size());
  const double sy = sum(y);
  // The sum component of Phi is constant in theta; the difference component
  // contracts to its prior-pinned value (beta0_1 - beta0_2)/alpha0.
  const double s = (sy + prior.beta[0] + prior.beta[1]) / (n + prior.alpha);
  const double d = (prior.beta[0] - prior.beta[1]) / prior.alpha;
  Vector fp(2);
  fp << 0.5 * (s + d), 0.5 * (s - d);
  return fp;
}

double ModelA::log_f(double x, double y) {
  return -0.5 * x * x - 0.5 * (y - x) * (y - x);
}

Vector ModelA::u_stat(double x, double y) {
  Vector u(2);
  u << x, y - x;
  return u;
}

// ---------------------------------------------------------------------------
// Model B

double ModelB::psi(const Vector& theta) const {
  return 0.5 * theta[0] * theta[0] + kLog2Pi;
}

Vector ModelB::grad_psi(const Vector& theta) const { return theta; }

Matrix ModelB::hess_psi(const Vector&) const { return Matrix::Identity(1, 1); }

Tensor3 ModelB::psi_d3(const Vector&) const { return Tensor3(1); }

Tensor4 ModelB::psi_d4(const Vector&) const { return Tensor4(1); }

Vector ModelB::e_step(const Vector& theta, double y) const {
  return Vector::Constant(1, 0.5 * (y + theta[0]));
}

double ModelB::latent_entropy(const Vector&, double) const {
  return gaussian_latent_entropy();
}

double ModelB::log_f_expectation(const Vector& theta, double y) const {
  return gaussian_log_f_expectation(0.5 * (y + theta[0]), y);
}

std::vector<double> ModelB::simulate(const Vector& theta_star, int n,
                                     std::uint64_t seed) const {
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, i);
    const double x = theta_star[0] + rng.normal();
    y[i] = x + rng.normal();
  }
  return y;
}

std::vector<Vector> ModelB::simulate_complete(const Vector& theta_star, int n,
                                              std::uint64_t seed) const {
  std::vector<Vector> u(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, i);
    const double x = theta_star[0] + rng.normal();
    u[i] = Vector::Constant(1, x);
  }
  return u;
}

std::optional<double> ModelB::log_normalizer_closed(
    const Hyperparams& hp) const {
  return gaussian_log_normalizer(1, hp);
}

std::optional<Vector> ModelB::posterior_mean_closed(
    const Hyperparams& hp) const {
  return Vector(hp.beta / hp.alpha);
}

std::optional<double> ModelB::psi_expectation_closed(
    const Hyperparams& hp) const {
  return gaussian_psi_expectation(1, hp);
}

std::optional<Matrix> ModelB::posterior_cov_closed(
    const Hyperparams& hp) const {
  return Matrix(Matrix::Identity(1, 1) / hp.alpha);
}

std::optional<ExactPosterior> ModelB::exact_posterior(
    const std::vector<double>& y, const Hyperparams& prior) const {
  const double n = static_cast<double>(y.size());
  const double precision = prior.alpha + 0.5 * n;
  ExactPosterior post;
  post.family = "normal";
  post.precision = Matrix::Constant(1, 1, precision);
  post.cov = Matrix::Constant(1, 1, 1.0 / precision);
  post.mean = Vector::Constant(1, (prior.beta[0] + 0.5 * sum(y)) / precision);
  return post;
}

std::optional<Vector> ModelB::exact_vb_fixed_point(
    const std::vector<double>& y, const Hyperparams& prior) const {
  const double n = static_cast<double>(y.size());
  return Vector::Constant(
      1, (0.5 * sum(y) + prior.beta[0]) / (0.5 * n + prior.alpha));
}

double ModelB::log_f(double x, double y) {
  return -0.5 * x * x - 0.5 * (y - x) * (y - x);
}

Vector ModelB::u_stat(double x, double) { return Vector::Constant(1, x); }

// ---------------------------------------------------------------------------
// Model C

double ModelC::psi(const Vector& theta) const { return std::exp(theta[0]); }

Vector ModelC::grad_psi(const Vector& theta) const {
  return Vector::Constant(1, std::exp(theta[0]));
}

Matrix ModelC::hess_psi(const Vector& theta) const {
  return Matrix::Constant(1, 1, std::exp(theta[0]));
}

Tensor3 ModelC::psi_d3(const Vector& theta) const {
  Tensor3 t(1);
  t(0, 0, 0) = std::exp(theta[0]);
  return t;
}

Tensor4 ModelC::psi_d4(const Vector& theta) const {
  Tensor4 t(1);
  t(0, 0, 0, 0) = std::exp(theta[0]);
  return t;
}

Vector ModelC::e_step(const Vector&, double y) const {
  return Vector::Constant(1, y);
}

double ModelC::latent_entropy(const Vector&, double) const { return 0.0; }

double ModelC::log_f_expectation(const Vector&, double y) const {
  return -std::lgamma(y + 1.0);
}

std::vector<double> ModelC::simulate(const Vector& theta_star, int n,
                                     std::uint64_t seed) const {
  const double lambda = std::exp(theta_star[0]);
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, i);
    y[i] = static_cast<double>(rng.poisson(lambda));
  }
  return y;
}

std::vector<Vector> ModelC::simulate_complete(const Vector& theta_star, int n,
                                              std::uint64_t seed) const {
  const std::vector<double> y = simulate(theta_star, n, seed);
  std::vector<Vector> u(n);
  for (int i = 0; i < n; ++i) u[i] = Vector::Constant(1, y[i]);
  return u;
}

bool ModelC::hyperparams_integrable(const Hyperparams& hp) const {
  return hp.alpha > 0.0 && hp.beta.size() == 1 && hp.beta.allFinite() &&
         hp.beta[0] > 0.0;
}

std::optional<double> ModelC::log_normalizer_closed(
    const Hyperparams& hp) const {
  // \int exp{theta beta - alpha e^theta} dtheta = Gamma(beta) / alpha^beta.
  return hp.beta[0] * std::log(hp.alpha) - std::lgamma(hp.beta[0]);
}

std::optional<Vector> ModelC::posterior_mean_closed(
    const Hyperparams& hp) const {
  return Vector::Constant(1, digamma(hp.beta[0]) - std::log(hp.alpha));
}

std::optional<double> ModelC::psi_expectation_closed(
    const Hyperparams& hp) const {
  return hp.beta[0] / hp.alpha;
}

std::optional<ExactPosterior> ModelC::exact_posterior(
    const std::vector<double>& y, const Hyperparams& prior) const {
  ExactPosterior post;
  post.family = "log_gamma";
  post.gamma_shape = prior.beta[0] + sum(y);
  post.gamma_rate = prior.alpha + static_cast<double>(y.size());
  post.mean =
      Vector::Constant(1, digamma(post.gamma_shape) - std::log(post.gamma_rate));
  post.cov = Matrix::Constant(1, 1, trigamma(post.gamma_shape));
  return post;
}

std::optional<Vector> ModelC::exact_vb_fixed_point(
    const std::vector<double>& y, const Hyperparams& prior) const {
  return Vector::Constant(
      1, digamma(prior.beta[0] + sum(y)) -
             std::log(prior.alpha + static_cast<double>(y.size())));
}

// ---------------------------------------------------------------------------
// GenericQuadModel

GenericQuadModel::GenericQuadModel(GenericModelConfig cfg)
    : cfg_(std::move(cfg)), gh_(gauss_hermite(cfg_.gh_nodes)) {
  if (cfg_.dim < 1 || !cfg_.log_f || !cfg_.u || !cfg_.psi || !cfg_.latent_hint)
    throw ConfigError(
        "GenericQuadModel requires dim >= 1 and log_f, u, psi, latent_hint");
}

double GenericQuadModel::psi(const Vector& theta) const {
  return cfg_.psi(theta);
}

Vector GenericQuadModel::grad_psi(const Vector& theta) const {
  return fd_gradient(cfg_.psi, theta);
}

bool GenericQuadModel::in_domain(const Vector& theta) const {
  if (theta.size() != cfg_.dim || !theta.allFinite()) return false;
  return cfg_.in_domain ? cfg_.in_domain(theta) : true;
}

GenericQuadModel::LatentMoments GenericQuadModel::latent_moments(
    const Vector& theta, double y) const {
  const auto [loc, scale] = cfg_.latent_hint(theta, y);
  if (!(scale > 0.0) || !std::isfinite(loc))
    throw NonIntegrableLatent("generic model: invalid latent hint");

  const int k = static_cast<int>(gh_.nodes.size());
  const double width = std::sqrt(2.0) * scale;
  // \int g(x) dx = width * sum_i w_i exp(t_i^2) g(loc + width t_i); the
  // exp(t_i^2) factor is folded into the per-node log-terms.
  std::vector<double> log_term(k), lw(k), lf(k);
  std::vector<Vector> u_val(k);
  double max_term = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const double t = gh_.nodes[i];
    const double x = loc + width * t;
    lf[i] = cfg_.log_f(x, y);
    u_val[i] = cfg_.u(x, y);
    lw[i] = lf[i] + theta.dot(u_val[i]);
    log_term[i] = std::log(gh_.weights[i]) + t * t + lw[i];
    max_term = std::max(max_term, log_term[i]);
  }
  if (!std::isfinite(max_term))
    throw NonIntegrableLatent("generic model: latent integrand is not finite");

  double z = 0.0, tail = 0.0;
  Vector u_acc = Vector::Zero(u_val[0].size());
  double lw_acc = 0.0, lf_acc = 0.0;
  for (int i = 0; i < k; ++i) {
    const double p = std::exp(log_term[i] - max_term);
    z += p;
    u_acc += p * u_val[i];
    lw_acc += p * lw[i];
    lf_acc += p * lf[i];
    if (i <= 1 || i >= k - 2) tail += p;
  }

  LatentMoments out;
  out.tail_fraction = tail / z;
  if (out.tail_fraction > cfg_.tail_mass_limit)
    throw NonIntegrableLatent(
        "generic model: latent quadrature window holds too little mass "
        "(tail fraction " +
        std::to_string(out.tail_fraction) + ")");
  out.u_mean = u_acc / z;
  out.log_z = max_term + std::log(z) + std::log(width);
  out.log_w_mean = lw_acc / z;
  out.log_f_mean = lf_acc / z;
  return out;
}

Vector GenericQuadModel::e_step(const Vector& theta, double y) const {
  return latent_moments(theta, y).u_mean;
}

double GenericQuadModel::latent_entropy(const Vector& theta, double y) const {
  const LatentMoments lm = latent_moments(theta, y);
  return lm.log_z - lm.log_w_mean;
}

double GenericQuadModel::log_f_expectation(const Vector& theta,
                                           double y) const {
  return latent_moments(theta, y).log_f_mean;
}

std::vector<double> GenericQuadModel::simulate(const Vector& theta_star, int n,
                                               std::uint64_t seed) const {
  if (!cfg_.sample_y)
    throw UnsupportedModel("generic model has no marginal sampler configured");
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, i);
    y[i] = cfg_.sample_y(rng, theta_star);
  }
  return y;
}

std::vector<Vector> GenericQuadModel::simulate_complete(const Vector&, int,
                                                        std::uint64_t) const {
  throw UnsupportedModel(
      "generic model does not expose complete-data simulation");
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> make_model(const std::string& name) {
  if (name == "A") return std::make_unique<ModelA>();
  if (name == "B") return std::make_unique<ModelB>();
  if (name == "C") return std::make_unique<ModelC>();
  throw ConfigError("unknown model '" + name + "' (expected A, B or C)");
}

GenericModelConfig model_a_replica_config() {
  GenericModelConfig cfg;
  cfg.dim = 2;
  cfg.label = "generic-A";
  cfg.log_f = [](double x, double y) { return ModelA::log_f(x, y); };
  cfg.u = [](double x, double y) { return ModelA::u_stat(x, y); };
  cfg.psi = [](const Vector& theta) {
    return 0.5 * theta.squaredNorm() + kLog2Pi;
  };
  cfg.latent_hint = [](const Vector& theta, double y) {
    return std::make_pair(0.5 * (y + theta[0] - theta[1]), std::sqrt(0.5));
  };
  cfg.sample_y = [](Rng& rng, const Vector& theta_star) {
    return theta_star[0] + theta_star[1] + rng.normal() + rng.normal();
  };
  return cfg;
}

GenericModelConfig model_b_replica_config() {
  GenericModelConfig cfg;
  cfg.dim = 1;
  cfg.label = "generic-B";
  cfg.log_f = [](double x, double y) { return ModelB::log_f(x, y); };
  cfg.u = [](double x, double y) { return ModelB::u_stat(x, y); };
  cfg.psi = [](const Vector& theta) {
    return 0.5 * theta[0] * theta[0] + kLog2Pi;
  };
  cfg.latent_hint = [](const Vector& theta, double y) {
    return std::make_pair(0.5 * (y + theta[0]), std::sqrt(0.5));
  };
  cfg.sample_y = [](Rng& rng, const Vector& theta_star) {
    return theta_star[0] + rng.normal() + rng.normal();
  };
  return cfg;
}

GenericModelConfig model_c_replica_config() {
  GenericModelConfig cfg;
  cfg.dim = 1;
  cfg.label = "generic-C";
  // u ignores the latent, so the dummy N(0, 1) factor integrates out; its
  // entropy cancels <log density> and the free energy matches Model C.
  cfg.log_f = [](double x, double y) {
    return -std::lgamma(y + 1.0) - 0.5 * kLog2Pi - 0.5 * x * x;
  };
  cfg.u = [](double, double y) { return Vector::Constant(1, y).eval(); };
  cfg.psi = [](const Vector& theta) { return std::exp(theta[0]); };
  cfg.latent_hint = [](const Vector&, double) {
    return std::make_pair(0.0, 1.0);
  };
  cfg.sample_y = [](Rng& rng, const Vector& theta_star) {
    return static_cast<double>(rng.poisson(std::exp(theta_star[0])));
  };
  return cfg;
}

}  // namespace vblab
