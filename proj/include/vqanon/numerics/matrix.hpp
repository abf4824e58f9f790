#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace vqanon {

// Dense row-major matrix of doubles. Frames are rows.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a * b. Throws ShapeError on a.cols != b.rows, NumericError on non-finite output.
Matrix matmul(const Matrix& a, const Matrix& b);

// a^T * b without materializing the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

// a * b^T without materializing the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Stacks rows of several matrices with a common column count.
Matrix vstack(std::span<const Matrix> parts);

Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace vqanon
