#include "deeptwist/tensor.hpp"

#include <functional>
#include <numeric>
#include <string>
#include <utility>

#include "deeptwist/errors.hpp"

namespace deeptwist {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Extents before and after `mode`, so a flat index decomposes as
// (outer, k, inner).
std::pair<std::size_t, std::size_t> split_extents(const Shape& shape, std::size_t mode) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < mode; ++i) outer *= shape[i];
  for (std::size_t i = mode + 1; i < shape.size(); ++i) inner *= shape[i];
  return {outer, inner};
}

}  // namespace

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ArgumentError("Matrix: " + std::to_string(data_.size()) + " values for a " +
                        std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) const {
  if (r0 + h > rows_ || c0 + w > cols_) throw ArgumentError("Matrix::block out of range");
  Matrix b(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) b(r, c) = (*this)(r0 + r, c0 + c);
  return b;
}

void Matrix::set_block(std::size_t r0, std::size_t c0, const Matrix& src) {
  if (r0 + src.rows() > rows_ || c0 + src.cols() > cols_) {
    throw ArgumentError("Matrix::set_block out of range");
  }
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) (*this)(r0 + r, c0 + c) = src(r, c);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ArgumentError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                        std::to_string(b.rows()) + " differ");
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ArgumentError("matmul_tn: row counts differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ArgumentError("matmul_nt: column counts differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

// ----------------------------------------------------------- DenseTensor

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto e : shape_)
    if (e == 0) throw ArgumentError("DenseTensor: zero extent in shape " + shape_str(shape_));
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) throw ArgumentError("DenseTensor: zero extent in shape " + shape_str(shape_));
  if (data_.size() != shape_size(shape_)) {
    throw ArgumentError("DenseTensor: " + std::to_string(data_.size()) +
                        " values for shape " + shape_str(shape_));
  }
}

std::size_t DenseTensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ArgumentError("DenseTensor: index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t m = 0; m < shape_.size(); ++m) {
    if (index[m] >= shape_[m]) throw ArgumentError("DenseTensor: index out of range");
    flat = flat * shape_[m] + index[m];
  }
  return flat;
}

double& DenseTensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset({index.begin(), index.size()})];
}

double DenseTensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset({index.begin(), index.size()})];
}

DenseTensor DenseTensor::reshaped(Shape new_shape) const {
  if (shape_size(new_shape) != data_.size()) {
    throw ArgumentError("reshape: " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                        " changes the element count");
  }
  return DenseTensor(std::move(new_shape), data_);
}

// --------------------------------------------------------------- Kernel4

Kernel4::Kernel4(std::size_t d, std::size_t in_channels, std::size_t out_channels, double fill)
    : d_(d), s_(in_channels), t_(out_channels), tensor_({d, d, in_channels, out_channels}, fill) {}

Kernel4::Kernel4(DenseTensor tensor) : tensor_(std::move(tensor)) {
  const auto& sh = tensor_.shape();
  if (sh.size() != 4 || sh[0] != sh[1]) {
    throw ArgumentError("Kernel4: expected shape [d,d,S,T], got " + shape_str(sh));
  }
  d_ = sh[0];
  s_ = sh[2];
  t_ = sh[3];
}

// ------------------------------------------------------ unfold / fold

Matrix unfold(const DenseTensor& tensor, std::size_t mode) {
  if (mode >= tensor.rank()) {
    throw ArgumentError("unfold: mode " + std::to_string(mode) + " out of range for rank " +
                        std::to_string(tensor.rank()));
  }
  const auto [outer, inner] = split_extents(tensor.shape(), mode);
  const std::size_t n = tensor.extent(mode);
  Matrix out(n, outer * inner);
  auto src = tensor.data();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t k = 0; k < n; ++k) {
      const double* from = src.data() + (a * n + k) * inner;
      double* to = out.data().data() + k * out.cols() + a * inner;
      std::copy(from, from + inner, to);
    }
  return out;
}

DenseTensor fold(const Matrix& matrix, std::size_t mode, const Shape& target_shape) {
  if (mode >= target_shape.size()) throw ArgumentError("fold: mode out of range");
  const auto [outer, inner] = split_extents(target_shape, mode);
  const std::size_t n = target_shape[mode];
  if (matrix.rows() != n || matrix.cols() != outer * inner) {
    throw ArgumentError("fold: matrix " + std::to_string(matrix.rows()) + "x" +
                        std::to_string(matrix.cols()) + " does not match shape " +
                        shape_str(target_shape) + " at mode " + std::to_string(mode));
  }
  DenseTensor out(target_shape);
  auto dst = out.data();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t k = 0; k < n; ++k) {
      const double* from = matrix.data().data() + k * matrix.cols() + a * inner;
      std::copy(from, from + inner, dst.data() + (a * n + k) * inner);
    }
  return out;
}

DenseTensor mode_multiply(const DenseTensor& tensor, const Matrix& matrix, std::size_t mode) {
  if (mode >= tensor.rank()) throw ArgumentError("mode_multiply: mode out of range");
  const std::size_t n = tensor.extent(mode);
  if (matrix.cols() != n) {
    throw ArgumentError("mode_multiply: matrix has " + std::to_string(matrix.cols()) +
                        " columns but mode " + std::to_string(mode) + " has extent " +
                        std::to_string(n));
  }
  const auto [outer, inner] = split_extents(tensor.shape(), mode);
  Shape out_shape = tensor.shape();
  out_shape[mode] = matrix.rows();
  DenseTensor out(out_shape);
  auto src = tensor.data();
  auto dst = out.data();
  const std::size_t r_count = matrix.rows();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t r = 0; r < r_count; ++r) {
      double* to = dst.data() + (a * r_count + r) * inner;
      for (std::size_t k = 0; k < n; ++k) {
        const double coef = matrix(r, k);
        const double* from = src.data() + (a * n + k) * inner;
        for (std::size_t b = 0; b < inner; ++b) to[b] += coef * from[b];
      }
    }
  return out;
}

}  // namespace deeptwist
