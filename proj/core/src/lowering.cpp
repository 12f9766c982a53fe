#include "deeptwist/lowering.hpp"

#include <string>

#include "deeptwist/errors.hpp"

namespace deeptwist {

std::size_t ConvGeometry::output_extent(std::size_t extent) const {
  if (d == 0 || stride == 0) throw ArgumentError("conv geometry: d and stride must be positive");
  if (extent + 2 * padding < d) {
    throw ArgumentError("conv geometry: kernel " + std::to_string(d) +
                        " larger than padded input " + std::to_string(extent + 2 * padding));
  }
  return (extent + 2 * padding - d) / stride + 1;
}

LoweredKernel lower_kernel(const Kernel4& kernel) {
  const std::size_t d = kernel.d(), S = kernel.in_channels(), T = kernel.out_channels();
  LoweredKernel out{Matrix(T, S * d * d), d, S, T};
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t t = 0; t < T; ++t) out.matrix(t, s * d * d + i * d + j) = kernel(i, j, s, t);
  return out;
}

Kernel4 raise_kernel(const LoweredKernel& lowered) {
  const std::size_t d = lowered.d, S = lowered.in_channels, T = lowered.out_channels;
  if (d == 0 || S == 0 || T == 0 || lowered.matrix.rows() != T ||
      lowered.matrix.cols() != S * d * d) {
    throw ArgumentError("raise_kernel: matrix " + std::to_string(lowered.matrix.rows()) + "x" +
                        std::to_string(lowered.matrix.cols()) + " inconsistent with d=" +
                        std::to_string(d) + " S=" + std::to_string(S) + " T=" + std::to_string(T));
  }
  Kernel4 kernel(d, S, T);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t t = 0; t < T; ++t) kernel(i, j, s, t) = lowered.matrix(t, s * d * d + i * d + j);
  return kernel;
}

ToeplitzInput im2col(const DenseTensor& input, const ConvGeometry& g) {
  if (input.rank() != 3) throw ArgumentError("im2col: input must have shape [S, H, W]");
  const std::size_t S = input.extent(0), H = input.extent(1), W = input.extent(2);
  const std::size_t oh = g.output_extent(H), ow = g.output_extent(W);
  const std::size_t d = g.d;
  ToeplitzInput out{Matrix(S * d * d, oh * ow), oh, ow};
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        auto row = out.matrix.row(s * d * d + i * d + j);
        for (std::size_t y = 0; y < oh; ++y) {
          // Signed arithmetic: padding may put the tap before the image.
          const long iy = static_cast<long>(y * g.stride + i) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x * g.stride + j) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            row[y * ow + x] = input[(s * H + static_cast<std::size_t>(iy)) * W +
                                    static_cast<std::size_t>(ix)];
          }
        }
      }
  return out;
}

DenseTensor conv2d_lowered(const Kernel4& kernel, const DenseTensor& input, std::size_t stride,
                           std::size_t padding) {
  if (input.rank() != 3 || input.extent(0) != kernel.in_channels()) {
    throw ArgumentError("conv2d_lowered: input channels do not match kernel");
  }
  const ToeplitzInput cols = im2col(input, {kernel.d(), stride, padding});
  Matrix product = matmul(lower_kernel(kernel).matrix, cols.matrix);
  return DenseTensor({kernel.out_channels(), cols.out_h, cols.out_w},
                     std::vector<double>(product.data().begin(), product.data().end()));
}

}  // namespace deeptwist
