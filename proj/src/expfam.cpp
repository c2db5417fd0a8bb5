#include "vblab/expfam.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

#include "vblab/laplace.hpp"

namespace vblab {

namespace {

double coord_step(double base, double x) {
  return base * std::max(1.0, std::abs(x));
}

// Recursive central difference along a list of coordinates. The stencil is a
// product of one-dimensional stencils, so the result is exactly symmetric
// under permutations of `dims`.
double central_diff(const std::function<double(const Vector&)>& f,
                    const Vector& theta, const int* dims, int count,
                    double step) {
  if (count == 0) return f(theta);
  const int d = dims[0];
  const double h = coord_step(step, theta[d]);
  Vector up = theta, dn = theta;
  up[d] += h;
  dn[d] -= h;
  return (central_diff(f, up, dims + 1, count - 1, step) -
          central_diff(f, dn, dims + 1, count - 1, step)) /
         (2.0 * h);
}

}  // namespace

Vector fd_gradient(const std::function<double(const Vector&)>& f,
                   const Vector& theta, double step) {
  const int m = static_cast<int>(theta.size());
  Vector g(m);
  for (int j = 0; j < m; ++j) {
    const int dims[1] = {j};
    g[j] = central_diff(f, theta, dims, 1, step);
  }
  return g;
}

Matrix fd_hessian_of_values(const std::function<double(const Vector&)>& f,
                            const Vector& theta, double step) {
  const int m = static_cast<int>(theta.size());
  Matrix h(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      const int dims[2] = {i, j};
      h(i, j) = central_diff(f, theta, dims, 2, step);
      h(j, i) = h(i, j);
    }
  return h;
}

Tensor3 fd_tensor3(const std::function<double(const Vector&)>& f,
                   const Vector& theta, double step) {
  const int m = static_cast<int>(theta.size());
  Tensor3 t(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const int dims[3] = {i, j, k};
        t(i, j, k) = central_diff(f, theta, dims, 3, step);
      }
  t.symmetrize();
  return t;
}

Tensor4 fd_tensor4(const std::function<double(const Vector&)>& f,
                   const Vector& theta, double step) {
  const int m = static_cast<int>(theta.size());
  Tensor4 t(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int s = 0; s < m; ++s) {
          const int dims[4] = {i, j, k, s};
          t(i, j, k, s) = central_diff(f, theta, dims, 4, step);
        }
  t.symmetrize();
  return t;
}

Matrix hessian_fd(const Model& model, const Vector& theta, double step) {
  validate_params(model, theta);
  const int m = model.dim();
  Matrix h(m, m);
  for (int j = 0; j < m; ++j) {
    const double hj = coord_step(step, theta[j]);
    Vector up = theta, dn = theta;
    up[j] += hj;
    dn[j] -= hj;
    if (!model.in_domain(up) || !model.in_domain(dn))
      throw DomainEscape("hessian_fd: stencil point left the domain");
    h.col(j) = (model.grad_psi(up) - model.grad_psi(dn)) / (2.0 * hj);
  }
  return 0.5 * (h + h.transpose());
}

Vector newton_solve_moment_match(const Model& model, const Vector& target,
                                 const Vector& init, double tol,
                                 const NewtonOptions& opts) {
  validate_params(model, init);
  if (target.size() != model.dim() || !target.allFinite())
    throw std::invalid_argument("newton_solve_moment_match: bad target");
  if (!(tol > 0.0))
    throw std::invalid_argument("newton_solve_moment_match: tol must be > 0");

  const auto objective = [&](const Vector& t) {
    return model.psi(t) - t.dot(target);
  };

  Vector theta = init;
  double obj = objective(theta);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const Vector g = model.grad_psi(theta) - target;
    if (g.norm() <= tol) return theta;

    const Matrix h = model.hess_psi(theta);
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) {
      // Indefinite curvature breaks the model contract; a merely degenerate
      // (underflowed) Hessian means the iterate ran into a flat region, which
      // happens exactly when the target is outside the range of grad_psi.
      Eigen::SelfAdjointEigenSolver<Matrix> es(h);
      if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + h.norm()))
        throw SingularHessian(
            "newton_solve_moment_match: hess_psi is not positive definite at "
            "the current iterate");
      throw NonConvergence(
          "newton_solve_moment_match: degenerate curvature encountered "
          "(target may lie outside the range of grad_psi)");
    }
    const Vector dir = llt.solve(-g);
    const double slope = g.dot(dir);

    double s = 1.0;
    bool stepped = false;
    while (s > 1e-16) {
      const Vector cand = theta + s * dir;
      if (model.in_domain(cand)) {
        const double cand_obj = objective(cand);
        if (cand_obj <= obj + opts.armijo * s * slope) {
          theta = cand;
          obj = cand_obj;
          stepped = true;
          break;
        }
      }
      s *= 0.5;
    }
    if (!stepped)
      throw NonConvergence(
          "newton_solve_moment_match: line search failed (target may lie "
          "outside the range of grad_psi)");
  }
  if ((model.grad_psi(theta) - target).norm() <= tol) return theta;
  throw NonConvergence(
      "newton_solve_moment_match: iteration cap reached (target may lie "
      "outside the range of grad_psi)");
}

double prior_log_normalizer(const Model& model, const Hyperparams& hp) {
  validate_hyperparams(model, hp);
  if (auto closed = model.log_normalizer_closed(hp)) return *closed;
  const TiltedObjective tilt = TiltedObjective::from_hyperparams(model, hp);
  const LaplaceExpansion exp1 = laplace_expand(tilt, BFunction::one(model.dim()));
  return -laplace_integral(exp1, tilt.n).log_value();
}

}  // namespace vblab
