#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gloss {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Every entry is finite on construction.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2D(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2D identity(std::size_t n);
  static Tensor2D from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vector row_vector(std::size_t r) const;
  Vector col_vector(std::size_t c) const;

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Tensor2D transpose() const;
  bool all_finite() const;

  bool operator==(const Tensor2D& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
Vector scaled(std::span<const double> a, double s);
Vector add(std::span<const double> a, std::span<const double> b);
Vector subtract(std::span<const double> a, std::span<const double> b);
Vector normalized(std::span<const double> a);

// a·b
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
// a·bᵀ
Tensor2D matmul_bt(const Tensor2D& a, const Tensor2D& b);
// aᵀ·a
Tensor2D gram_cols(const Tensor2D& a);
// a·aᵀ
Tensor2D gram_rows(const Tensor2D& a);
// a·x
Vector matvec(const Tensor2D& a, std::span<const double> x);
// aᵀ·x
Vector matvec_t(const Tensor2D& a, std::span<const double> x);

double frobenius_norm(const Tensor2D& a);
double max_abs_diff(const Tensor2D& a, const Tensor2D& b);

}  // namespace gloss
