#pragma once

#include <functional>

#include "vblab/common.hpp"

namespace vblab {

// Composite Simpson rule on [lo, hi]; points must be odd and >= 3.
double simpson(const std::function<double(double)>& f, double lo, double hi,
               int points);

// Tensor-product Simpson on [lo1,hi1] x [lo2,hi2], streamed (no grid stored).
double simpson_2d(const std::function<double(double, double)>& f, double lo1,
                  double hi1, int points1, double lo2, double hi2, int points2);

// Simpson weight of node i on an (odd) grid of `points` nodes with spacing h.
double simpson_weight(int i, int points, double h);

// Gauss-Hermite nodes/weights for weight function exp(-t^2), computed by
// Golub-Welsch from the Hermite recurrence.
struct GaussHermite {
  Vector nodes;
  Vector weights;
};
GaussHermite gauss_hermite(int n);

}  // namespace vblab
