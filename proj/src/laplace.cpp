#include "vblab/laplace.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

#include "vblab/expfam.hpp"
#include "vblab/rng.hpp"

namespace vblab {

double TiltedObjective::value(const Vector& theta) const {
  return coeff * (model->psi(theta) - theta.dot(scaled_target));
}

Vector TiltedObjective::grad(const Vector& theta) const {
  return coeff * (model->grad_psi(theta) - scaled_target);
}

Matrix TiltedObjective::hess(const Vector& theta) const {
  return coeff * model->hess_psi(theta);
}

Tensor3 TiltedObjective::d3(const Vector& theta) const {
  Tensor3 t = model->psi_d3(theta);
  const int m = t.dim();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) t(i, j, k) *= coeff;
  return t;
}

Tensor4 TiltedObjective::d4(const Vector& theta) const {
  Tensor4 t = model->psi_d4(theta);
  const int m = t.dim();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int s = 0; s < m; ++s) t(i, j, k, s) *= coeff;
  return t;
}

TiltedObjective TiltedObjective::from_counts(const Model& model, double n,
                                             double alpha0,
                                             const Vector& sum_r,
                                             const Vector& beta0) {
  if (!(n > 0.0))
    throw std::invalid_argument("TiltedObjective: n must be positive");
  TiltedObjective obj;
  obj.model = &model;
  obj.n = n;
  obj.coeff = 1.0 + alpha0 / n;
  obj.scaled_target = (sum_r / n + beta0 / n) / obj.coeff;
  return obj;
}

TiltedObjective TiltedObjective::from_hyperparams(const Model& model,
                                                  const Hyperparams& hp) {
  validate_hyperparams(model, hp);
  TiltedObjective obj;
  obj.model = &model;
  obj.n = hp.alpha;
  obj.coeff = 1.0;
  obj.scaled_target = hp.beta / hp.alpha;
  return obj;
}

Hyperparams TiltedObjective::hyperparams() const {
  Hyperparams hp;
  hp.alpha = n * coeff;
  hp.beta = n * coeff * scaled_target;
  return hp;
}

BFunction BFunction::one(int m) {
  BFunction b;
  b.value = [](const Vector&) { return 1.0; };
  b.grad = [m](const Vector&) { return Vector::Zero(m).eval(); };
  b.hess = [m](const Vector&) { return Matrix::Zero(m, m).eval(); };
  return b;
}

BFunction BFunction::coordinate(int j, int m) {
  if (j < 0 || j >= m) throw IndexOutOfRange("BFunction::coordinate");
  BFunction b;
  b.value = [j](const Vector& t) { return t[j]; };
  b.grad = [j, m](const Vector&) {
    Vector g = Vector::Zero(m);
    g[j] = 1.0;
    return g;
  };
  b.hess = [m](const Vector&) { return Matrix::Zero(m, m).eval(); };
  return b;
}

BFunction BFunction::of_psi(const Model& model) {
  BFunction b;
  b.value = [&model](const Vector& t) { return model.psi(t); };
  b.grad = [&model](const Vector& t) { return model.grad_psi(t); };
  b.hess = [&model](const Vector& t) { return model.hess_psi(t); };
  return b;
}

namespace {

void check_index(const Matrix& sigma, int idx) {
  if (idx < 0 || idx >= sigma.rows())
    throw IndexOutOfRange("central moment index out of range");
}

// Canonicalized element access plus sorted products and sums make the
// pairing assemblies bit-identical under any index permutation.
double sig(const Matrix& sigma, int a, int b) {
  return a <= b ? sigma(a, b) : sigma(b, a);
}

double sorted_product3(double a, double b, double c) {
  std::array<double, 3> f{a, b, c};
  std::sort(f.begin(), f.end());
  return (f[0] * f[1]) * f[2];
}

template <size_t N>
double sorted_sum(std::array<double, N> terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

}  // namespace

double moment4(const Matrix& sigma, int i, int j, int k, int s) {
  for (int idx : {i, j, k, s}) check_index(sigma, idx);
  return sorted_sum<3>({sig(sigma, i, j) * sig(sigma, k, s),
                        sig(sigma, i, k) * sig(sigma, j, s),
                        sig(sigma, i, s) * sig(sigma, j, k)});
}

double moment6(const Matrix& sigma, int i, int j, int k, int q, int r, int s) {
  for (int idx : {i, j, k, q, r, s}) check_index(sigma, idx);
  const auto term = [&](int a1, int a2, int b1, int b2, int c1, int c2) {
    return sorted_product3(sig(sigma, a1, a2), sig(sigma, b1, b2),
                           sig(sigma, c1, c2));
  };
  return sorted_sum<15>({term(i, j, k, q, r, s), term(i, j, k, r, q, s),
                         term(i, j, k, s, q, r), term(i, k, j, q, r, s),
                         term(i, k, j, r, q, s), term(i, k, j, s, q, r),
                         term(i, q, j, k, r, s), term(i, q, j, r, k, s),
                         term(i, q, j, s, k, r), term(i, r, j, k, q, s),
                         term(i, r, j, q, k, s), term(i, r, j, s, k, q),
                         term(i, s, j, k, q, r), term(i, s, j, q, k, r),
                         term(i, s, j, r, k, q)});
}

LaplaceExpansion laplace_expand(const TiltedObjective& obj, const BFunction& b,
                                const Vector* init) {
  const Model& model = *obj.model;
  const int m = model.dim();

  Vector start = Vector::Zero(m);
  if (init != nullptr) {
    start = *init;
  } else if (auto closed = model.posterior_mean_closed(obj.hyperparams());
             closed && closed->allFinite() && model.in_domain(*closed)) {
    start = *closed;
  }

  LaplaceExpansion exp;
  exp.m = m;
  // Tolerance sits above the finite-difference noise floor of models whose
  // gradient stack is numeric; center error enters the integral at O(delta^2).
  const double tol = 1e-9 * (1.0 + obj.scaled_target.norm());
  exp.center = newton_solve_moment_match(model, obj.scaled_target, start, tol);
  exp.a_min = obj.value(exp.center);
  exp.hess = obj.hess(exp.center);
  Eigen::LLT<Matrix> llt(exp.hess);
  if (llt.info() != Eigen::Success)
    throw SingularHessian("laplace_expand: D^2 a_n not positive definite");
  exp.sigma = llt.solve(Matrix::Identity(m, m));
  exp.d3 = obj.d3(exp.center);
  exp.d4 = obj.d4(exp.center);
  exp.b0 = b.value(exp.center);
  exp.b_grad = b.grad(exp.center);
  exp.b_hess = b.hess(exp.center);
  return exp;
}

LaplaceValue laplace_integral(const LaplaceExpansion& exp, double n) {
  if (!(n > 0.0))
    throw std::invalid_argument("laplace_integral: n must be positive");
  const int m = exp.m;

  Eigen::LLT<Matrix> llt(Matrix(n * exp.hess));
  if (llt.info() != Eigen::Success)
    throw SingularHessian("laplace_integral: n D^2 a_n not positive definite");
  double half_logdet = 0.0;
  for (int i = 0; i < m; ++i) half_logdet += std::log(llt.matrixL()(i, i));

  double correction = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      correction += 0.5 * exp.sigma(i, j) * exp.b_hess(i, j);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int s = 0; s < m; ++s)
          correction -= exp.d3(i, j, k) * exp.b_grad[s] *
                        moment4(exp.sigma, i, j, k, s) / 6.0;
  double six_sum = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int q = 0; q < m; ++q)
          for (int r = 0; r < m; ++r)
            for (int s = 0; s < m; ++s)
              six_sum += exp.d3(i, j, k) * exp.d3(q, r, s) *
                         moment6(exp.sigma, i, j, k, q, r, s);
  correction += exp.b0 * six_sum / 72.0;
  double four_sum = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int s = 0; s < m; ++s)
          four_sum += exp.d4(i, j, k, s) * moment4(exp.sigma, i, j, k, s);
  correction -= exp.b0 * four_sum / 24.0;

  LaplaceValue out;
  out.log_prefactor = 0.5 * m * kLog2Pi - half_logdet - n * exp.a_min;
  out.bracket_zeroth = exp.b0;
  out.bracket = exp.b0 + correction / n;
  return out;
}

double LaplaceValue::log_value() const {
  if (!(bracket > 0.0))
    throw NonFiniteResult(
        "laplace_integral: corrected bracket is not positive; value left log "
        "space");
  return log_prefactor + std::log(bracket);
}

double LaplaceValue::value() const {
  const double v = std::exp(log_prefactor) * bracket;
  if (!std::isfinite(v))
    throw NonFiniteResult("laplace_integral: value under/overflowed");
  return v;
}

double LaplaceValue::log_zeroth_value() const {
  if (!(bracket_zeroth > 0.0))
    throw NonFiniteResult("laplace_integral: zeroth bracket is not positive");
  return log_prefactor + std::log(bracket_zeroth);
}

double LaplaceValue::zeroth_value() const {
  const double v = std::exp(log_prefactor) * bracket_zeroth;
  if (!std::isfinite(v))
    throw NonFiniteResult("laplace_integral: zeroth value under/overflowed");
  return v;
}

Vector posterior_mean_laplace(const TiltedObjective& obj) {
  const int m = obj.model->dim();
  const LaplaceExpansion base = laplace_expand(obj, BFunction::one(m));
  const double denom = laplace_integral(base, obj.n).bracket;
  if (denom == 0.0)
    throw NonFiniteResult("posterior_mean_laplace: denominator bracket is 0");

  Vector mean(m);
  for (int j = 0; j < m; ++j) {
    const BFunction bj = BFunction::coordinate(j, m);
    LaplaceExpansion exp = base;
    exp.b0 = bj.value(base.center);
    exp.b_grad = bj.grad(base.center);
    exp.b_hess = bj.hess(base.center);
    mean[j] = laplace_integral(exp, obj.n).bracket / denom;
  }
  return mean;
}

namespace {

// Deterministic quasi-uniform directions on the unit sphere: exact for m = 1,
// equispaced angles for m = 2, normalized low-discrepancy normals otherwise.
std::vector<Vector> sphere_directions(int m, int count) {
  std::vector<Vector> dirs;
  if (count <= 0) return dirs;
  if (m == 1) {
    dirs.push_back(Vector::Constant(1, 1.0));
    dirs.push_back(Vector::Constant(1, -1.0));
    return dirs;
  }
  if (m == 2) {
    for (int i = 0; i < count; ++i) {
      const double a = 2.0 * M_PI * i / count;
      Vector d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
    return dirs;
  }
  Rng rng(0x5eedULL);
  for (int i = 0; i < count; ++i) {
    Vector d(m);
    for (int j = 0; j < m; ++j) d[j] = rng.normal();
    const double norm = d.norm();
    if (norm > 0) dirs.push_back(d / norm);
  }
  return dirs;
}

}  // namespace

AssumptionReport check_assumptions(const TiltedObjective& obj, double eps,
                                   double delta, const AssumptionPlan& plan) {
  if (!(delta > 0.0) || !(delta < eps))
    throw std::invalid_argument("check_assumptions: need 0 < delta < eps");

  const int m = obj.model->dim();
  const LaplaceExpansion exp = laplace_expand(obj, BFunction::one(m));
  AssumptionReport rep;

  // (i): derivative magnitudes, orders 0..4, sampled on B(center, eps).
  const std::vector<Vector> dirs = sphere_directions(m, std::max(plan.shell_points / 4, 4));
  std::vector<Vector> ball_points{exp.center};
  for (const Vector& d : dirs)
    for (double frac : {0.25, 0.5, 0.75, 1.0})
      ball_points.push_back(exp.center + frac * eps * d);
  for (const Vector& p : ball_points) {
    if (!obj.model->in_domain(p)) continue;
    rep.max_abs_deriv[0] =
        std::max(rep.max_abs_deriv[0], std::abs(obj.value(p)));
    rep.max_abs_deriv[1] =
        std::max(rep.max_abs_deriv[1], obj.grad(p).cwiseAbs().maxCoeff());
    rep.max_abs_deriv[2] =
        std::max(rep.max_abs_deriv[2], obj.hess(p).cwiseAbs().maxCoeff());
    rep.max_abs_deriv[3] = std::max(rep.max_abs_deriv[3], obj.d3(p).max_abs());
    rep.max_abs_deriv[4] = std::max(rep.max_abs_deriv[4], obj.d4(p).max_abs());
  }
  bool bounded = true;
  for (double v : rep.max_abs_deriv) bounded = bounded && std::isfinite(v);
  rep.derivatives_bounded = bounded ? CheckFlag::Pass : CheckFlag::Fail;

  // (ii): determinant of the Hessian at the center.
  rep.det_hess = exp.hess.determinant();
  rep.det_positive = rep.det_hess > 0.0 ? CheckFlag::Pass : CheckFlag::Fail;

  // (iii'): by convexity the supremum over the complement of B(center, delta)
  // is attained at radius delta; sample that sphere plus radii out to eps.
  rep.shell_points = 0;
  double shell_max = -std::numeric_limits<double>::infinity();
  const std::vector<Vector> shell_dirs =
      plan.shell_points > 0
          ? sphere_directions(m, std::max(plan.shell_points / 3, 1))
          : std::vector<Vector>{};
  for (const Vector& d : shell_dirs)
    for (double radius : {delta, 0.5 * (delta + eps), eps}) {
      const Vector p = exp.center + radius * d;
      if (!obj.model->in_domain(p)) continue;
      shell_max = std::max(shell_max, exp.a_min - obj.value(p));
      ++rep.shell_points;
    }
  if (rep.shell_points == 0) {
    rep.shell_negative = CheckFlag::Inconclusive;
    rep.shell_max = std::numeric_limits<double>::quiet_NaN();
  } else {
    rep.shell_max = shell_max;
    rep.shell_negative =
        shell_max < 0.0 ? CheckFlag::Pass : CheckFlag::Fail;
  }
  return rep;
}

const char* to_string(CheckFlag flag) {
  switch (flag) {
    case CheckFlag::Pass:
      return "pass";
    case CheckFlag::Fail:
      return "fail";
    default:
      return "inconclusive";
  }
}

}  // namespace vblab
