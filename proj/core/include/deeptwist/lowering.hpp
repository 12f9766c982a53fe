#pragma once

// im2col lowering. A kernel becomes a T × (S·d·d) matrix and an input feature
// map becomes an (S·d·d) × (H_out·W_out) Toeplitz matrix, so convolution is a
// single matrix product. Both sides pack the reduction index as
//   c = s·d² + i·d + j.

#include <cstddef>

#include "deeptwist/tensor.hpp"

namespace deeptwist {

struct ConvGeometry {
  std::size_t d = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// floor((extent + 2·padding − d) / stride) + 1; throws ArgumentError when
  /// the kernel does not fit the padded input.
  std::size_t output_extent(std::size_t extent) const;
};

struct LoweredKernel {
  Matrix matrix;  // T × (S·d·d)
  std::size_t d = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

struct ToeplitzInput {
  Matrix matrix;  // (S·d·d) × (H_out·W_out)
  std::size_t out_h = 0;
  std::size_t out_w = 0;
};

LoweredKernel lower_kernel(const Kernel4& kernel);

/// Inverse of lower_kernel; throws ArgumentError if the matrix shape
/// disagrees with the recorded (d, S, T).
Kernel4 raise_kernel(const LoweredKernel& lowered);

/// `input` has shape [S, H, W].
ToeplitzInput im2col(const DenseTensor& input, const ConvGeometry& geometry);

/// Convolution through the lowered GEMM path; returns shape [T, H_out, W_out].
DenseTensor conv2d_lowered(const Kernel4& kernel, const DenseTensor& input,
                           std::size_t stride, std::size_t padding);

}  // namespace deeptwist
