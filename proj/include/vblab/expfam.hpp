#pragma once

#include <functional>

#include "vblab/model.hpp"

namespace vblab {

// Central-difference derivative helpers. Steps are relative to the coordinate
// scale: h_j = step * max(1, |theta_j|). Orders 3 and 4 difference the bare
// function with a larger step to control cancellation.
Vector fd_gradient(const std::function<double(const Vector&)>& f,
                   const Vector& theta, double step = 1e-5);
Matrix fd_hessian_of_values(const std::function<double(const Vector&)>& f,
                            const Vector& theta, double step = 1e-4);
Tensor3 fd_tensor3(const std::function<double(const Vector&)>& f,
                   const Vector& theta, double step = 1e-3);
Tensor4 fd_tensor4(const std::function<double(const Vector&)>& f,
                   const Vector& theta, double step = 1e-3);

// Finite-difference Hessian of psi from grad_psi, symmetrized by averaging
// with its transpose. Throws DomainEscape if a stencil point leaves the
// model domain.
Matrix hessian_fd(const Model& model, const Vector& theta, double step = 1e-5);

struct NewtonOptions {
  int max_iter = 100;
  double armijo = 1e-4;
};

// Solves grad_psi(theta) = target by Newton with backtracking (halving) line
// search on psi(theta) - theta' target. Strict convexity of psi makes the
// solution unique, so the result is independent of init up to tol.
// Throws NonConvergence when the iteration cap is hit or the search leaves
// the domain (the target lies outside the range of grad_psi), and
// SingularHessian when hess_psi loses positive definiteness numerically.
Vector newton_solve_moment_match(const Model& model, const Vector& target,
                                 const Vector& init, double tol,
                                 const NewtonOptions& opts = {});

// log h(alpha, beta) = -log \int exp{theta' beta - alpha psi(theta)} dtheta.
// Uses the model closed form when available, else the corrected Laplace
// expansion with b == 1. Throws DivergentIntegral when the integrability
// check fails.
double prior_log_normalizer(const Model& model, const Hyperparams& hp);

}  // namespace vblab
