#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "vblab/common.hpp"

namespace vblab {

// Dense symmetric derivative tensors. Dimensions stay tiny (m <= 4), so the
// full m^3 / m^4 storage is cheaper than canonical indexing.

class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int m) : m_(m), v_(static_cast<size_t>(m) * m * m, 0.0) {}

  int dim() const { return m_; }

  double& operator()(int i, int j, int k) { return v_[idx(i, j, k)]; }
  double operator()(int i, int j, int k) const { return v_[idx(i, j, k)]; }

  void symmetrize() {
    Tensor3 out(m_);
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j)
        for (int k = 0; k < m_; ++k) {
          std::array<int, 3> p{i, j, k};
          std::sort(p.begin(), p.end());
          double s = 0.0;
          int count = 0;
          do {
            s += (*this)(p[0], p[1], p[2]);
            ++count;
          } while (std::next_permutation(p.begin(), p.end()));
          out(i, j, k) = s / count;
        }
    *this = out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

  bool all_zero(double tol = 0.0) const { return max_abs() <= tol; }

 private:
  size_t idx(int i, int j, int k) const {
    if (i < 0 || j < 0 || k < 0 || i >= m_ || j >= m_ || k >= m_)
      throw IndexOutOfRange("Tensor3 index out of range");
    return (static_cast<size_t>(i) * m_ + j) * m_ + k;
  }

  int m_ = 0;
  std::vector<double> v_;
};

class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(int m)
      : m_(m), v_(static_cast<size_t>(m) * m * m * m, 0.0) {}

  int dim() const { return m_; }

  double& operator()(int i, int j, int k, int s) { return v_[idx(i, j, k, s)]; }
  double operator()(int i, int j, int k, int s) const {
    return v_[idx(i, j, k, s)];
  }

  void symmetrize() {
    Tensor4 out(m_);
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j)
        for (int k = 0; k < m_; ++k)
          for (int l = 0; l < m_; ++l) {
            std::array<int, 4> p{i, j, k, l};
            std::sort(p.begin(), p.end());
            double s = 0.0;
            int count = 0;
            do {
              s += (*this)(p[0], p[1], p[2], p[3]);
              ++count;
            } while (std::next_permutation(p.begin(), p.end()));
            out(i, j, k, l) = s / count;
          }
    *this = out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

  bool all_zero(double tol = 0.0) const { return max_abs() <= tol; }

 private:
  size_t idx(int i, int j, int k, int s) const {
    if (i < 0 || j < 0 || k < 0 || s < 0 || i >= m_ || j >= m_ || k >= m_ ||
        s >= m_)
      throw IndexOutOfRange("Tensor4 index out of range");
    return ((static_cast<size_t>(i) * m_ + j) * m_ + k) * m_ + s;
  }

  int m_ = 0;
  std::vector<double> v_;
};

}  // namespace vblab
