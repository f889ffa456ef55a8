#pragma once

#include <initializer_list>
#include <vector>

namespace geomix {

// Dense row-major matrix of doubles. Deliberately small: the library needs
// only a handful of kernels, and explicit loops keep the hand-written
// reverse-mode passes auditable.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  void fill(double value);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// a (m x k) * b (k x n)
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) * b, a is (m x k) so the result is (k x n)
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * transpose(b), b is (n x k) so the result is (m x n)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// dst += s * src (shapes must match)
void add_scaled(Matrix& dst, double s, const Matrix& src);
// a*x + b*y elementwise
Matrix linear_combo(double a, const Matrix& x, double b, const Matrix& y);

std::vector<double> column_sums(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

}  // namespace geomix
