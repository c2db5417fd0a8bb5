#include "vblab/asymptotics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "vblab/expfam.hpp"
#include "vblab/quadrature.hpp"
#include "vblab/vb.hpp"

namespace vblab {

Vector theta_hat(const Model& model, const std::vector<Vector>& r,
                 const Hyperparams& prior) {
  Hyperparams hp;
  hp.alpha = static_cast<double>(r.size()) + prior.alpha;
  hp.beta = prior.beta;
  for (const Vector& ri : r) hp.beta += ri;
  // (sum_r/n + beta0/n) / (1 + alpha0/n) == beta/alpha
  const Vector target = hp.beta / hp.alpha;
  Vector start = Vector::Zero(model.dim());
  if (model.hyperparams_integrable(hp))
    if (auto closed = model.posterior_mean_closed(hp))
      if (closed->allFinite() && model.in_domain(*closed)) start = *closed;
  return newton_solve_moment_match(model, target, start,
                                   1e-9 * (1.0 + target.norm()));
}

Matrix sigma_n(const Model& model, const Vector& theta_hat_value, double n,
               double alpha0) {
  validate_params(model, theta_hat_value);
  const Matrix h = (n + alpha0) * model.hess_psi(theta_hat_value);
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success)
    throw SingularHessian("sigma_n: (n + alpha0) hess_psi is not PD");
  return llt.solve(Matrix::Identity(model.dim(), model.dim()));
}

NormalLimit normal_limit(const Model& model, const Hyperparams& hp) {
  validate_hyperparams(model, hp);
  Vector start = Vector::Zero(model.dim());
  if (auto closed = model.posterior_mean_closed(hp);
      closed && closed->allFinite() && model.in_domain(*closed))
    start = *closed;
  const Vector target = hp.beta / hp.alpha;
  NormalLimit limit;
  limit.mean = newton_solve_moment_match(model, target, start,
                                         1e-9 * (1.0 + target.norm()));
  limit.cov = sigma_n(model, limit.mean, hp.alpha, 0.0);
  return limit;
}

std::string GridPlan::describe(int dims) const {
  return "simpson[mean±" + std::to_string(half_width_sds) + "sd]^" +
         std::to_string(dims) + "x" + std::to_string(points_per_axis);
}

namespace {

struct GaussianDensity {
  Vector mean;
  Matrix prec;
  double log_norm = 0.0;  // -m/2 log 2pi + 1/2 log det prec

  explicit GaussianDensity(const NormalLimit& limit) : mean(limit.mean) {
    const int m = static_cast<int>(mean.size());
    Eigen::LLT<Matrix> llt(limit.cov);
    if (llt.info() != Eigen::Success)
      throw SingularHessian("normal limit covariance is not PD");
    prec = llt.solve(Matrix::Identity(m, m));
    double half_logdet_cov = 0.0;
    for (int i = 0; i < m; ++i) half_logdet_cov += std::log(llt.matrixL()(i, i));
    log_norm = -0.5 * m * kLog2Pi - half_logdet_cov;
  }

  double operator()(const Vector& t) const {
    const Vector d = t - mean;
    return std::exp(log_norm - 0.5 * d.dot(prec * d));
  }
};

// Shared streaming walk over the quadrature grid (m <= 2).
template <typename Fn>
void for_each_grid_point(const NormalLimit& limit, const GridPlan& plan,
                         Fn&& fn) {
  const int m = static_cast<int>(limit.mean.size());
  const int points = plan.points_per_axis;
  if (m == 1) {
    const double sd = std::sqrt(limit.cov(0, 0));
    const double lo = limit.mean[0] - plan.half_width_sds * sd;
    const double h = 2.0 * plan.half_width_sds * sd / (points - 1);
    Vector t(1);
    for (int i = 0; i < points; ++i) {
      t[0] = lo + i * h;
      fn(t, simpson_weight(i, points, h));
    }
    return;
  }
  if (m == 2) {
    const double sd0 = std::sqrt(limit.cov(0, 0));
    const double sd1 = std::sqrt(limit.cov(1, 1));
    const double lo0 = limit.mean[0] - plan.half_width_sds * sd0;
    const double lo1 = limit.mean[1] - plan.half_width_sds * sd1;
    const double h0 = 2.0 * plan.half_width_sds * sd0 / (points - 1);
    const double h1 = 2.0 * plan.half_width_sds * sd1 / (points - 1);
    Vector t(2);
    for (int i = 0; i < points; ++i) {
      t[0] = lo0 + i * h0;
      const double wi = simpson_weight(i, points, h0);
      for (int j = 0; j < points; ++j) {
        t[1] = lo1 + j * h1;
        fn(t, wi * simpson_weight(j, points, h1));
      }
    }
    return;
  }
  throw ApproximationUnavailable("normality quadrature is limited to m <= 2");
}

struct QnGrid {
  double shift = 0.0;    // log q at the limit mean (unnormalized)
  double z = 0.0;        // \int exp(log q - shift)
  double normal_mass = 0.0;
};

QnGrid normalize_qn(const Model& model, const Hyperparams& hp,
                    const NormalLimit& limit, const GaussianDensity& normal,
                    const GridPlan& plan) {
  const VariationalPosterior q{&model, hp};
  QnGrid grid;
  grid.shift = q.unnormalized_log_density(limit.mean);
  for_each_grid_point(limit, plan, [&](const Vector& t, double w) {
    grid.z += w * std::exp(q.unnormalized_log_density(t) - grid.shift);
    grid.normal_mass += w * normal(t);
  });
  if (!(grid.z > 0.0) || !std::isfinite(grid.z))
    throw GridTooCoarse("q_n quadrature produced a non-finite normalizer");
  if (std::abs(grid.normal_mass - 1.0) > 1e-4)
    throw GridTooCoarse("normal limit mass on the grid deviates from 1 by " +
                        std::to_string(std::abs(grid.normal_mass - 1.0)));
  if (auto log_h = model.log_normalizer_closed(hp)) {
    const double q_mass = std::exp(std::log(grid.z) + grid.shift + *log_h);
    if (std::abs(q_mass - 1.0) > 1e-4)
      throw GridTooCoarse("q_n mass on the grid deviates from 1 by " +
                          std::to_string(std::abs(q_mass - 1.0)));
  }
  return grid;
}

}  // namespace

double normality_distance(const Model& model, const Hyperparams& hp,
                          const NormalLimit& limit, const GridPlan& plan) {
  validate_hyperparams(model, hp);
  const GaussianDensity normal(limit);
  const QnGrid grid = normalize_qn(model, hp, limit, normal, plan);
  const VariationalPosterior q{&model, hp};
  double tv = 0.0;
  for_each_grid_point(limit, plan, [&](const Vector& t, double w) {
    const double qn =
        std::exp(q.unnormalized_log_density(t) - grid.shift) / grid.z;
    tv += w * std::abs(qn - normal(t));
  });
  return 0.5 * tv;
}

std::vector<DensityRow> density_grid(const Model& model, const Hyperparams& hp,
                                     const NormalLimit& limit,
                                     const GridPlan& plan) {
  const GaussianDensity normal(limit);
  const QnGrid grid = normalize_qn(model, hp, limit, normal, plan);
  const VariationalPosterior q{&model, hp};
  std::vector<DensityRow> rows;
  for_each_grid_point(limit, plan, [&](const Vector& t, double) {
    DensityRow row;
    row.theta = t;
    row.q_n = std::exp(q.unnormalized_log_density(t) - grid.shift) / grid.z;
    row.normal_limit = normal(t);
    rows.push_back(std::move(row));
  });
  return rows;
}

NormalityReport check_c1_c2_c3(const Model& model, const Hyperparams& hp,
                               const NormalLimit& limit, double delta,
                               double eps_ball, const GridPlan& plan) {
  if (!(delta > 0.0) || !(eps_ball > 0.0))
    throw std::invalid_argument("check_c1_c2_c3: delta, eps_ball must be > 0");
  validate_hyperparams(model, hp);
  const int m = model.dim();
  if (m > 2)
    throw ApproximationUnavailable("check_c1_c2_c3 is limited to m <= 2");

  NormalityReport rep;
  rep.n = hp.alpha;
  rep.grid_spec = plan.describe(m);

  Eigen::SelfAdjointEigenSolver<Matrix> es(limit.cov);
  rep.c1_top_eig = es.eigenvalues().maxCoeff();

  // C2: eigenvalues of hess_psi(theta) hess_psi(theta_hat)^-1 over the ball;
  // for the symmetric pencil this is a generalized eigenproblem.
  const Matrix h_ref = model.hess_psi(limit.mean);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  const int directions = m == 1 ? 2 : 64;
  for (int d = 0; d < directions; ++d) {
    Vector dir(m);
    if (m == 1) {
      dir[0] = d == 0 ? 1.0 : -1.0;
    } else {
      const double a = 2.0 * M_PI * d / directions;
      dir.resize(2);
      dir << std::cos(a), std::sin(a);
    }
    for (double frac : {0.25, 0.5, 0.75, 1.0}) {
      const Vector t = limit.mean + frac * eps_ball * dir;
      if (!model.in_domain(t)) continue;
      Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(model.hess_psi(t),
                                                           h_ref);
      lo = std::min(lo, ges.eigenvalues().minCoeff());
      hi = std::max(hi, ges.eigenvalues().maxCoeff());
    }
  }
  rep.c2_ratio_bounds = {lo, hi};

  // C3 + TV + KL share one normalized grid pass.
  const GaussianDensity normal(limit);
  const QnGrid grid = normalize_qn(model, hp, limit, normal, plan);
  const VariationalPosterior q{&model, hp};
  double mass = 0.0, tv = 0.0, kl = 0.0;
  for_each_grid_point(limit, plan, [&](const Vector& t, double w) {
    const double qn =
        std::exp(q.unnormalized_log_density(t) - grid.shift) / grid.z;
    const double ph = normal(t);
    tv += w * std::abs(qn - ph);
    if (qn > 0.0 && ph > 0.0) kl += w * qn * std::log(qn / ph);
    if ((t - limit.mean).norm() <= delta) mass += w * qn;
  });
  rep.tv_distance = 0.5 * tv;
  rep.kl_divergence = kl;
  rep.c3_mass = std::min(mass, 1.0);
  return rep;
}

MonteCarloMatrix phi_moment_matrix(const Model& model, const Vector& theta_star,
                                   int mc_samples, std::uint64_t seed) {
  validate_params(model, theta_star);
  if (mc_samples < 1)
    throw std::invalid_argument("phi_moment_matrix: mc_samples must be >= 1");
  const int m = model.dim();
  const Vector mean_u = model.grad_psi(theta_star);
  const std::vector<double> y = model.simulate(theta_star, mc_samples, seed);

  Matrix acc = Matrix::Zero(m, m);
  Matrix acc_sq = Matrix::Zero(m, m);
  for (double yi : y) {
    const Vector phi = model.e_step(theta_star, yi) - mean_u;
    const Matrix outer = phi * phi.transpose();
    acc += outer;
    acc_sq += outer.cwiseProduct(outer);
  }
  MonteCarloMatrix out;
  out.samples = mc_samples;
  out.estimate = acc / mc_samples;
  const Matrix var =
      (acc_sq / mc_samples - out.estimate.cwiseProduct(out.estimate))
          .cwiseMax(0.0);
  out.standard_error = (var / mc_samples).cwiseSqrt();
  return out;
}

PsdReport verify_psd_inequality(const Model& model, const Vector& theta_star,
                                int mc_samples, std::uint64_t seed) {
  const MonteCarloMatrix mc = phi_moment_matrix(model, theta_star, mc_samples, seed);
  PsdReport rep;
  rep.difference = model.hess_psi(theta_star) - mc.estimate;
  Eigen::SelfAdjointEigenSolver<Matrix> es(rep.difference);
  int min_idx = 0;
  es.eigenvalues().minCoeff(&min_idx);
  rep.min_eigenvalue = es.eigenvalues()(min_idx);
  const Vector v = es.eigenvectors().col(min_idx);
  double se = 0.0;
  for (int i = 0; i < rep.difference.rows(); ++i)
    for (int j = 0; j < rep.difference.cols(); ++j)
      se += std::abs(v[i]) * std::abs(v[j]) * mc.standard_error(i, j);
  rep.mc_standard_error = se;
  rep.pass = rep.min_eigenvalue >= -3.0 * se;
  return rep;
}

EstepLimitReport verify_estep_limits(const Model& model,
                                         const Vector& theta_star, int n,
                                         std::uint64_t seed, int mc_samples) {
  validate_params(model, theta_star);
  if (n < 1)
    throw std::invalid_argument("verify_estep_limits: n must be >= 1");
  const int m = model.dim();
  const std::vector<double> y = model.simulate(theta_star, n, seed);

  EstepLimitReport rep;
  rep.n = n;

  // (18): beta(theta*)/n -> grad_psi(theta*).
  {
    Vector acc = Vector::Zero(m), acc_sq = Vector::Zero(m);
    for (double yi : y) {
      const Vector r = model.e_step(theta_star, yi);
      acc += r;
      acc_sq += r.cwiseProduct(r);
    }
    const Vector mean = acc / n;
    const Vector var =
        (acc_sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
    rep.growth_rate.label = "beta(theta*)/n vs grad_psi(theta*)";
    rep.growth_rate.observed = mean;
    rep.growth_rate.expected = model.grad_psi(theta_star);
    rep.growth_rate.max_abs_dev =
        (mean - model.grad_psi(theta_star)).cwiseAbs().maxCoeff();
    rep.growth_rate.tolerance = 3.0 * (var / n).cwiseSqrt().maxCoeff();
    rep.growth_rate.pass = rep.growth_rate.max_abs_dev <= rep.growth_rate.tolerance;
  }

  // (17): FD Jacobian of theta -> beta(theta)/n against
  // hess_psi - E{E[phi] E[phi]'}; both sides carry sampling error.
  {
    Matrix mean = Matrix::Zero(m, m), mom2 = Matrix::Zero(m, m);
    for (int k = 0; k < m; ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta_star[k]));
      Vector up = theta_star, dn = theta_star;
      up[k] += h;
      dn[k] -= h;
      for (double yi : y) {
        const Vector d =
            (model.e_step(up, yi) - model.e_step(dn, yi)) / (2.0 * h);
        mean.col(k) += d;
        mom2.col(k) += d.cwiseProduct(d);
      }
    }
    mean /= static_cast<double>(n);
    mom2 /= static_cast<double>(n);
    const Matrix se =
        ((mom2 - mean.cwiseProduct(mean)).cwiseMax(0.0) / n).cwiseSqrt();

    const MonteCarloMatrix mc =
        phi_moment_matrix(model, theta_star, mc_samples, seed + 1);
    rep.jacobian_limit.label =
        "D beta(theta*)/n vs hess_psi - phi moment matrix";
    rep.jacobian_limit.observed = mean;
    rep.jacobian_limit.expected = model.hess_psi(theta_star) - mc.estimate;
    rep.jacobian_limit.max_abs_dev =
        (mean - rep.jacobian_limit.expected).cwiseAbs().maxCoeff();
    const Matrix tol =
        3.0 * (se.cwiseProduct(se) + mc.standard_error.cwiseProduct(mc.standard_error))
                  .cwiseSqrt();
    rep.jacobian_limit.tolerance = tol.maxCoeff();
    rep.jacobian_limit.pass =
        ((mean - rep.jacobian_limit.expected).cwiseAbs().array() <=
         tol.array() + 1e-12)
            .all();
  }

  // (22): complete-data covariance of u equals hess_psi(theta*).
  {
    const std::vector<Vector> u =
        model.simulate_complete(theta_star, mc_samples, seed + 2);
    const Vector mean_u = model.grad_psi(theta_star);
    Matrix acc = Matrix::Zero(m, m), acc_sq = Matrix::Zero(m, m);
    for (const Vector& ui : u) {
      const Matrix outer = (ui - mean_u) * (ui - mean_u).transpose();
      acc += outer;
      acc_sq += outer.cwiseProduct(outer);
    }
    const Matrix mean = acc / mc_samples;
    const Matrix se =
        ((acc_sq / mc_samples - mean.cwiseProduct(mean)).cwiseMax(0.0) /
         mc_samples)
            .cwiseSqrt();
    rep.complete_cov.label =
        "E[(u - grad_psi)(u - grad_psi)'] vs hess_psi(theta*)";
    rep.complete_cov.observed = mean;
    rep.complete_cov.expected = model.hess_psi(theta_star);
    rep.complete_cov.max_abs_dev =
        (mean - rep.complete_cov.expected).cwiseAbs().maxCoeff();
    rep.complete_cov.tolerance = (3.0 * se).maxCoeff();
    rep.complete_cov.pass =
        ((mean - rep.complete_cov.expected).cwiseAbs().array() <=
         3.0 * se.array() + 1e-12)
            .all();
  }

  return rep;
}

LimitRatioReport limit_ratio_experiment(const Model& model,
                                        const Vector& theta_star,
                                        const std::vector<double>& n_grid,
                                        const std::vector<std::uint64_t>& seeds,
                                        const Hyperparams& prior) {
  validate_params(model, theta_star);
  validate_hyperparams(model, prior);
  const Matrix hess_star = model.hess_psi(theta_star);

  LimitRatioReport rep;
  for (double n : n_grid) {
    for (std::uint64_t seed : seeds) {
      const std::vector<double> y =
          model.simulate(theta_star, static_cast<int>(n), seed);
      VBConfig cfg;
      cfg.prior = prior;
      cfg.init = default_init(model, prior, y);
      cfg.tol = 1e-10;
      const VBTrace trace = run_vb(model, y, cfg);
      const Matrix cov = posterior_cov(model, trace.final_hyperparams);

      LimitRatioCell cell;
      cell.n = n;
      cell.seed = seed;
      cell.n_cov = n * cov;
      const Matrix product = cell.n_cov * hess_star;
      Eigen::SelfAdjointEigenSolver<Matrix> es(
          0.5 * (product + product.transpose()));
      cell.ratio_spectrum = es.eigenvalues();
      cell.ratio_to_inv_hess = es.eigenvalues().maxCoeff();
      cell.ratio_to_half_inv_hess = 2.0 * es.eigenvalues().maxCoeff();
      rep.cells.push_back(std::move(cell));
    }
  }
  return rep;
}

}  // namespace vblab
