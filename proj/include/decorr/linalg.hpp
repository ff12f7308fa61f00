#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace decorr {

/// Dense row-major matrix of doubles. Feature batches are stored D x B
/// (one sample per column).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double value);
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double factor);
double frobenius_norm(const Matrix& a);

/// a * a^T, exactly symmetric.
Matrix gram(const Matrix& a);

/// Column vector of row means.
Matrix row_means(const Matrix& a);

/// a with each row shifted to zero mean.
Matrix center_rows(const Matrix& a);

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // column k pairs with eigenvalues[k]
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Each eigenvector is
/// signed so that its largest-magnitude component is positive.
EigenDecomposition sym_eig(const Matrix& a);

/// Singular values (descending) via the eigenvalues of the smaller Gram matrix.
std::vector<double> singular_values(const Matrix& x);

}  // namespace decorr
