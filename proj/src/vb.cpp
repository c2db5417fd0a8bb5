#include "vblab/vb.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>

#include "vblab/expfam.hpp"
#include "vblab/laplace.hpp"
#include "vblab/quadrature.hpp"

namespace vblab {

const char* to_string(MeanMethod method) {
  switch (method) {
    case MeanMethod::ClosedForm:
      return "closed_form";
    case MeanMethod::Laplace:
      return "laplace";
    default:
      return "quadrature";
  }
}

double VariationalPosterior::unnormalized_log_density(
    const Vector& theta) const {
  return theta.dot(hp.beta) - hp.alpha * model->psi(theta);
}

std::vector<Vector> e_step_all(const Model& model, const Vector& theta,
                               const std::vector<double>& y) {
  validate_params(model, theta);
  std::vector<Vector> r(y.size());
  for (size_t i = 0; i < y.size(); ++i) r[i] = model.e_step(theta, y[i]);
  return r;
}

Hyperparams update_hyperparams(const std::vector<Vector>& r,
                               const Hyperparams& prior) {
  Hyperparams hp;
  hp.alpha = static_cast<double>(r.size()) + prior.alpha;
  hp.beta = prior.beta;
  for (const Vector& ri : r) {
    if (ri.size() != prior.beta.size())
      throw std::invalid_argument(
          "update_hyperparams: sufficient statistic dimension mismatch");
    hp.beta += ri;
  }
  return hp;
}

namespace {

// Posterior moments of q_theta by dense quadrature on a grid centred at the
// mode with width set by the local curvature; m <= 2 only.
struct QuadMoments {
  Vector mean;
  Matrix cov;
  double psi_bar = 0.0;
  double log_normalizer = 0.0;  // log h
};

QuadMoments quad_moments(const Model& model, const Hyperparams& hp) {
  const int m = model.dim();
  if (m > 2)
    throw ApproximationUnavailable(
        "posterior quadrature is limited to m <= 2");

  Vector start = Vector::Zero(m);
  if (auto closed = model.posterior_mean_closed(hp);
      closed && closed->allFinite() && model.in_domain(*closed))
    start = *closed;
  const Vector target = hp.beta / hp.alpha;
  const Vector mode = newton_solve_moment_match(model, target, start,
                                                1e-9 * (1.0 + target.norm()));
  const Matrix curvature = hp.alpha * model.hess_psi(mode);
  Eigen::LLT<Matrix> llt(curvature);
  if (llt.info() != Eigen::Success)
    throw SingularHessian("posterior quadrature: curvature not PD");
  const Matrix local_cov = llt.solve(Matrix::Identity(m, m));

  const auto log_q = [&](const Vector& t) {
    return t.dot(hp.beta) - hp.alpha * model.psi(t);
  };
  const double shift = log_q(mode);

  // Window half-widths per axis and direction, grown until the density has
  // dropped ~20 decades below the mode. Densities with sub-Gaussian tails
  // (log-gamma at small beta) need far more than a Gaussian-scale window.
  const auto axis_half_width = [&](int axis, double sd_ax, double sign) {
    double t = 12.0;
    for (int it = 0; it < 60; ++it) {
      Vector probe = mode;
      probe[axis] = mode[axis] + sign * t * sd_ax;
      if (!model.in_domain(probe)) return t;
      if (log_q(probe) - shift < -46.0) return t;
      t *= 1.5;
    }
    throw GridTooCoarse(
        "posterior quadrature: density tail decays too slowly for a grid");
  };

  if (m == 1) {
    const double sd = std::sqrt(local_cov(0, 0));
    const double lo = mode[0] - axis_half_width(0, sd, -1.0) * sd;
    const double hi = mode[0] + axis_half_width(0, sd, 1.0) * sd;
    const int points = 8193;
    const double h = (hi - lo) / (points - 1);

    double z = 0.0, mean_acc = 0.0, psi_acc = 0.0;
    double edge_max = 0.0;
    for (int i = 0; i < points; ++i) {
      const double t = lo + i * h;
      const Vector tv = Vector::Constant(1, t);
      const double w = simpson_weight(i, points, h) * std::exp(log_q(tv) - shift);
      z += w;
      mean_acc += w * t;
      psi_acc += w * model.psi(tv);
      if (i == 0 || i == points - 1) edge_max = std::max(edge_max, w);
    }
    if (!(z > 0.0) || edge_max > 1e-12 * z)
      throw GridTooCoarse(
          "posterior quadrature: integrand mass escapes the grid");
    double var_acc = 0.0;
    const double mean = mean_acc / z;
    for (int i = 0; i < points; ++i) {
      const double t = lo + i * h;
      const Vector tv = Vector::Constant(1, t);
      var_acc += simpson_weight(i, points, h) * std::exp(log_q(tv) - shift) *
                 (t - mean) * (t - mean);
    }
    QuadMoments out;
    out.mean = Vector::Constant(1, mean);
    out.cov = Matrix::Constant(1, 1, var_acc / z);
    out.psi_bar = psi_acc / z;
    out.log_normalizer = -(std::log(z) + shift);
    return out;
  }

  // m == 2, tensor-product Simpson.
  const double sd0 = std::sqrt(local_cov(0, 0));
  const double sd1 = std::sqrt(local_cov(1, 1));
  const int points = 1025;
  const double lo0 = mode[0] - axis_half_width(0, sd0, -1.0) * sd0;
  const double hi0 = mode[0] + axis_half_width(0, sd0, 1.0) * sd0;
  const double lo1 = mode[1] - axis_half_width(1, sd1, -1.0) * sd1;
  const double hi1 = mode[1] + axis_half_width(1, sd1, 1.0) * sd1;
  const double h0 = (hi0 - lo0) / (points - 1);
  const double h1 = (hi1 - lo1) / (points - 1);

  double z = 0.0, psi_acc = 0.0, edge_max = 0.0;
  Vector mean_acc = Vector::Zero(2);
  Matrix second_acc = Matrix::Zero(2, 2);
  Vector tv(2);
  for (int i = 0; i < points; ++i) {
    const double wi = simpson_weight(i, points, h0);
    tv[0] = lo0 + i * h0;
    for (int j = 0; j < points; ++j) {
      tv[1] = lo1 + j * h1;
      const double w =
          wi * simpson_weight(j, points, h1) * std::exp(log_q(tv) - shift);
      z += w;
      mean_acc += w * tv;
      second_acc += w * tv * tv.transpose();
      psi_acc += w * model.psi(tv);
      if (i == 0 || j == 0 || i == points - 1 || j == points - 1)
        edge_max = std::max(edge_max, w);
    }
  }
  if (!(z > 0.0) || edge_max > 1e-12 * z)
    throw GridTooCoarse("posterior quadrature: integrand mass escapes the grid");
  QuadMoments out;
  out.mean = mean_acc / z;
  out.cov = second_acc / z - out.mean * out.mean.transpose();
  out.psi_bar = psi_acc / z;
  out.log_normalizer = -(std::log(z) + shift);
  return out;
}

}  // namespace

Vector posterior_mean(const Model& model, const Hyperparams& hp,
                      MeanMethod* used) {
  validate_hyperparams(model, hp);
  if (auto closed = model.posterior_mean_closed(hp)) {
    if (used) *used = MeanMethod::ClosedForm;
    return *closed;
  }
  try {
    const TiltedObjective tilt = TiltedObjective::from_hyperparams(model, hp);
    const Vector mean = posterior_mean_laplace(tilt);
    if (used) *used = MeanMethod::Laplace;
    return mean;
  } catch (const NumericError&) {
    if (model.dim() > 2) throw;
  }
  const QuadMoments qm = quad_moments(model, hp);
  if (used) *used = MeanMethod::Quadrature;
  return qm.mean;
}

double posterior_log_normalizer(const Model& model, const Hyperparams& hp) {
  validate_hyperparams(model, hp);
  if (auto closed = model.log_normalizer_closed(hp)) return *closed;
  if (model.dim() <= 2) return quad_moments(model, hp).log_normalizer;
  const TiltedObjective tilt = TiltedObjective::from_hyperparams(model, hp);
  return -laplace_integral(laplace_expand(tilt, BFunction::one(model.dim())),
                           tilt.n)
              .log_value();
}

double posterior_psi_expectation(const Model& model, const Hyperparams& hp) {
  validate_hyperparams(model, hp);
  if (auto closed = model.psi_expectation_closed(hp)) return *closed;
  if (model.dim() <= 2) return quad_moments(model, hp).psi_bar;
  const TiltedObjective tilt = TiltedObjective::from_hyperparams(model, hp);
  const LaplaceExpansion num = laplace_expand(tilt, BFunction::of_psi(model));
  const LaplaceExpansion den = laplace_expand(tilt, BFunction::one(model.dim()));
  return laplace_integral(num, tilt.n).bracket /
         laplace_integral(den, tilt.n).bracket;
}

Matrix posterior_cov(const Model& model, const Hyperparams& hp) {
  validate_hyperparams(model, hp);
  if (auto closed = model.posterior_cov_closed(hp)) return *closed;
  if (model.dim() <= 2) return quad_moments(model, hp).cov;
  throw ApproximationUnavailable(
      "posterior covariance needs a closed form or m <= 2");
}

namespace {

double free_energy_terms(const Model& model, const Vector& theta_qx,
                         const Hyperparams& hp, const std::vector<double>& y,
                         const Hyperparams& prior,
                         const std::vector<Vector>& r) {
  const double n = static_cast<double>(y.size());
  double data_terms = 0.0;
  Vector sum_r = prior.beta;  // accumulates beta0 + sum_i r_i
  for (size_t i = 0; i < y.size(); ++i) {
    data_terms += model.log_f_expectation(theta_qx, y[i]) +
                  model.latent_entropy(theta_qx, y[i]);
    sum_r += r[i];
  }
  const Vector mean = posterior_mean(model, hp);
  const double psi_bar = posterior_psi_expectation(model, hp);
  const double log_h = posterior_log_normalizer(model, hp);
  const double log_h0 = posterior_log_normalizer(model, prior);
  return data_terms + mean.dot(sum_r - hp.beta) +
         (hp.alpha - prior.alpha - n) * psi_bar + log_h0 - log_h;
}

}  // namespace

double free_energy(const Model& model, const Vector& theta_qx,
                   const Hyperparams& hp, const std::vector<double>& y,
                   const Hyperparams& prior) {
  validate_params(model, theta_qx);
  validate_hyperparams(model, hp);
  validate_hyperparams(model, prior);
  return free_energy_terms(model, theta_qx, hp, y, prior,
                           e_step_all(model, theta_qx, y));
}

Vector phi_map(const Model& model, const Vector& theta,
               const std::vector<double>& y, const Hyperparams& prior) {
  return posterior_mean(
      model, update_hyperparams(e_step_all(model, theta, y), prior));
}

int VBTrace::iterations() const {
  const int applications = static_cast<int>(step_norms.size());
  return converged ? applications - 1 : applications;
}

VBTrace run_vb(const Model& model, const std::vector<double>& y,
               const VBConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("run_vb: tol must be > 0");
  if (cfg.max_iter < 1)
    throw std::invalid_argument("run_vb: max_iter must be >= 1");
  validate_params(model, cfg.init);
  validate_hyperparams(model, cfg.prior);

  VBTrace trace;
  Vector theta = cfg.init;
  trace.iterates.push_back(theta);

  MeanMethod method = MeanMethod::ClosedForm;
  for (int k = 0; k < cfg.max_iter; ++k) {
    const std::vector<Vector> r = e_step_all(model, theta, y);
    const Hyperparams hp = update_hyperparams(r, cfg.prior);
    trace.free_energy.push_back(
        free_energy_terms(model, theta, hp, y, cfg.prior, r));
    const Vector next = posterior_mean(model, hp, &method);
    trace.step_norms.push_back((next - theta).norm());
    trace.iterates.push_back(next);
    theta = next;
    if (trace.step_norms.back() <= cfg.tol) {
      trace.converged = true;
      break;
    }
  }

  // Bookkeeping for the final iterate: its free energy and the equilibrium
  // hyperparameters come from one extra E-step.
  const std::vector<Vector> r = e_step_all(model, theta, y);
  trace.final_hyperparams = update_hyperparams(r, cfg.prior);
  trace.free_energy.push_back(free_energy_terms(
      model, theta, trace.final_hyperparams, y, cfg.prior, r));
  trace.mean_method = method;
  return trace;
}

JacobianResult jacobian_phi(const Model& model, const Vector& theta,
                            const std::vector<double>& y,
                            const Hyperparams& prior) {
  validate_params(model, theta);
  const int m = model.dim();
  JacobianResult out;
  out.jacobian.resize(m, m);
  for (int j = 0; j < m; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
    Vector up = theta, dn = theta;
    up[j] += h;
    dn[j] -= h;
    if (!model.in_domain(up) || !model.in_domain(dn))
      throw DomainEscape("jacobian_phi: stencil point left the domain");
    out.jacobian.col(j) =
        (phi_map(model, up, y, prior) - phi_map(model, dn, y, prior)) /
        (2.0 * h);
  }
  Eigen::JacobiSVD<Matrix> svd(out.jacobian);
  out.spectral_norm = svd.singularValues()(0);
  return out;
}

Vector default_init(const Model& model, const Hyperparams& prior,
                    const std::vector<double>& y) {
  validate_hyperparams(model, prior);
  if (auto closed = model.posterior_mean_closed(prior)) return *closed;
  double ybar = 0.0;
  for (double v : y) ybar += v;
  if (!y.empty()) ybar /= static_cast<double>(y.size());
  const Vector target = Vector::Constant(model.dim(), ybar);
  return newton_solve_moment_match(model, target,
                                   Vector::Zero(model.dim()), 1e-9);
}

}  // namespace vblab
