#pragma once

// Dense real arrays: a row-major matrix, an N-d tensor, and the 4-d
// convolution kernel built on top of it. Everything is 64-bit internally.

#include <cstddef>
#include <span>
#include <vector>

namespace deeptwist {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

/// Row-major real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Matrix transposed() const;
  Matrix block(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) const;
  void set_block(std::size_t r0, std::size_t c0, const Matrix& src);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// N-d row-major tensor (last index fastest). The shape never changes after
/// construction; reshape returns a new value over the same data.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  /// Flat offset of a multi-index; throws ArgumentError when out of range.
  std::size_t offset(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  DenseTensor reshaped(Shape new_shape) const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Convolution kernel with logical index order (i, j, s, t) and extents
/// (d, d, S, T).
class Kernel4 {
 public:
  Kernel4() = default;
  Kernel4(std::size_t d, std::size_t in_channels, std::size_t out_channels, double fill = 0.0);
  /// Adopts a tensor of shape [d, d, S, T]; throws ArgumentError otherwise.
  explicit Kernel4(DenseTensor tensor);

  std::size_t d() const noexcept { return d_; }
  std::size_t in_channels() const noexcept { return s_; }
  std::size_t out_channels() const noexcept { return t_; }

  double& operator()(std::size_t i, std::size_t j, std::size_t s, std::size_t t) {
    return tensor_[((i * d_ + j) * s_ + s) * t_ + t];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t s, std::size_t t) const {
    return tensor_[((i * d_ + j) * s_ + s) * t_ + t];
  }

  const DenseTensor& tensor() const noexcept { return tensor_; }
  DenseTensor& tensor() noexcept { return tensor_; }

  friend bool operator==(const Kernel4&, const Kernel4&) = default;

 private:
  std::size_t d_ = 0, s_ = 0, t_ = 0;
  DenseTensor tensor_;
};

/// Mode-n matricization: rows index `mode`, columns run over the remaining
/// modes in ascending order, row-major.
Matrix unfold(const DenseTensor& tensor, std::size_t mode);

/// Inverse of unfold for the same mode and shape.
DenseTensor fold(const Matrix& matrix, std::size_t mode, const Shape& target_shape);

/// tensor ×_mode matrix: contracts `mode` against the matrix columns.
DenseTensor mode_multiply(const DenseTensor& tensor, const Matrix& matrix, std::size_t mode);

}  // namespace deeptwist
