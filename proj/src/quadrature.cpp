#include "vblab/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace vblab {

double simpson_weight(int i, int points, double h) {
  if (i == 0 || i == points - 1) return h / 3.0;
  return (i % 2 == 1) ? 4.0 * h / 3.0 : 2.0 * h / 3.0;
}

double simpson(const std::function<double(double)>& f, double lo, double hi,
               int points) {
  if (points < 3 || points % 2 == 0)
    throw std::invalid_argument("simpson: points must be odd and >= 3");
  const double h = (hi - lo) / (points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i)
    acc += simpson_weight(i, points, h) * f(lo + i * h);
  return acc;
}

double simpson_2d(const std::function<double(double, double)>& f, double lo1,
                  double hi1, int points1, double lo2, double hi2,
                  int points2) {
  if (points1 < 3 || points1 % 2 == 0 || points2 < 3 || points2 % 2 == 0)
    throw std::invalid_argument("simpson_2d: points must be odd and >= 3");
  const double h1 = (hi1 - lo1) / (points1 - 1);
  const double h2 = (hi2 - lo2) / (points2 - 1);
  double acc = 0.0;
  for (int i = 0; i < points1; ++i) {
    const double wi = simpson_weight(i, points1, h1);
    const double x = lo1 + i * h1;
    double row = 0.0;
    for (int j = 0; j < points2; ++j)
      row += simpson_weight(j, points2, h2) * f(x, lo2 + j * h2);
    acc += wi * row;
  }
  return acc;
}

GaussHermite gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  Vector diag = Vector::Zero(n);
  Vector sub(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(diag, sub);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights.resize(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    gh.weights[i] = sqrt_pi * v0 * v0;
  }
  return gh;
}

}  // namespace vblab
