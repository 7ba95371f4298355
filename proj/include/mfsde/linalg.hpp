#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mfsde {

using Vec = std::vector<double>;

// Hard cap on the state dimension; lets hot loops use stack buffers.
inline constexpr int kMaxDim = 16;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Small dense row-major matrix; sized for d x d Jacobians (d <= kMaxDim).
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, 0.0) {}

  static Mat identity(int d) {
    Mat m(d, d);
    for (int i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
  }
  static Mat zero(int rows, int cols) { return Mat(rows, cols); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  std::span<const double> data() const { return a_; }
  std::span<double> data() { return a_; }

  Mat& operator+=(const Mat& o) {
    for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    for (std::size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
    return *this;
  }
  Mat& operator*=(double c) {
    for (double& x : a_) x *= c;
    return *this;
  }
  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, double c) { return a *= c; }

  friend Mat operator*(const Mat& a, const Mat& b) {
    Mat c(a.rows_, b.cols_);
    mat_mul(a, b, c);
    return c;
  }

  // c = a * b (no aliasing)
  static void mat_mul(const Mat& a, const Mat& b, Mat& c) {
    for (int i = 0; i < a.rows_; ++i)
      for (int j = 0; j < b.cols_; ++j) {
        double s = 0.0;
        for (int k = 0; k < a.cols_; ++k) s += a(i, k) * b(k, j);
        c(i, j) = s;
      }
  }

  // y = A * x
  void apply(std::span<const double> x, std::span<double> y) const {
    for (int i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
      y[i] = s;
    }
  }

  // y = A^T * x
  void apply_transposed(std::span<const double> x, std::span<double> y) const {
    for (int j = 0; j < cols_; ++j) {
      double s = 0.0;
      for (int i = 0; i < rows_; ++i) s += (*this)(i, j) * x[i];
      y[j] = s;
    }
  }

  double frobenius() const {
    double s = 0.0;
    for (double x : a_) s += x * x;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : a_) m = std::max(m, std::abs(x));
    return m;
  }

  bool finite() const { return all_finite(a_); }

  /// Spectral norm via power iteration on A^T A; exact enough for bound checks.
  double op_norm(int iters = 60) const {
    if (rows_ == 1 && cols_ == 1) return std::abs(a_[0]);
    Vec v(static_cast<std::size_t>(cols_), 1.0), av(static_cast<std::size_t>(rows_)), w(static_cast<std::size_t>(cols_));
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
      apply(v, av);
      apply_transposed(av, w);
      double n = norm(w);
      if (n == 0.0) return 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] / n;
      lambda = n;
    }
    apply(v, av);
    return norm(av);
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

}  // namespace mfsde
