#include "deeptwist/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deeptwist/errors.hpp"

namespace deeptwist {

namespace {

// Leading r left singular vectors of m as an m.rows() × r matrix. When r
// exceeds the column count the matrix is padded with zero columns so the SVD
// completes the basis.
Matrix leading_left_vectors(const Matrix& m, std::size_t r) {
  const Matrix* src = &m;
  Matrix padded;
  if (m.cols() < r) {
    padded = Matrix(m.rows(), r);
    padded.set_block(0, 0, m);
    src = &padded;
  }
  SvdFactors f = svd(*src);
  return f.u.block(0, 0, f.u.rows(), r);
}

constexpr std::size_t kModeS = 2;
constexpr std::size_t kModeT = 3;

double residual_sq(const Kernel4& kernel, const TuckerFactors& f) {
  return frobenius_sq_diff(kernel.tensor().data(), tucker_reconstruct(f).tensor().data());
}

}  // namespace

TuckerRanks tucker_ranks(std::size_t in_channels, std::size_t out_channels, double rc) {
  if (!(rc > 0.0 && rc <= 1.0)) throw ArgumentError("tucker_ranks: R_c must lie in (0, 1]");
  auto pick = [rc](std::size_t dim) {
    // Half-up; the small offset keeps products like 0.5·5 from landing on 2.4999….
    const double scaled = std::floor(rc * static_cast<double>(dim) + 0.5 + 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(scaled), 1, dim);
  };
  return {pick(in_channels), pick(out_channels)};
}

TuckerFactors tucker_decompose(const Kernel4& kernel, TuckerRanks ranks, const TuckerOptions& options,
                               std::vector<double>* residual_history) {
  const std::size_t S = kernel.in_channels(), T = kernel.out_channels();
  if (ranks.s < 1 || ranks.s > S || ranks.t < 1 || ranks.t > T) {
    throw ArgumentError("tucker_decompose: ranks (" + std::to_string(ranks.s) + "," +
                        std::to_string(ranks.t) + ") outside [1," + std::to_string(S) + "]x[1," +
                        std::to_string(T) + "]");
  }
  const DenseTensor& x = kernel.tensor();

  TuckerFactors f;
  f.p_s = leading_left_vectors(unfold(x, kModeS), ranks.s);
  f.p_t = leading_left_vectors(unfold(x, kModeT), ranks.t);
  f.core = mode_multiply(mode_multiply(x, f.p_s.transposed(), kModeS), f.p_t.transposed(), kModeT);

  double prev = residual_sq(kernel, f);
  if (residual_history) residual_history->assign(1, prev);

  for (int iter = 0; iter < options.hooi_iters; ++iter) {
    if (prev == 0.0) break;
    const DenseTensor y = mode_multiply(x, f.p_t.transposed(), kModeT);
    f.p_s = leading_left_vectors(unfold(y, kModeS), ranks.s);
    const DenseTensor z = mode_multiply(x, f.p_s.transposed(), kModeS);
    f.p_t = leading_left_vectors(unfold(z, kModeT), ranks.t);
    f.core = mode_multiply(z, f.p_t.transposed(), kModeT);

    const double cur = residual_sq(kernel, f);
    if (residual_history) residual_history->push_back(cur);
    const bool stalled = (prev - cur) < options.min_improvement * prev;
    prev = cur;
    if (stalled) break;
  }
  return f;
}

Kernel4 tucker_reconstruct(const TuckerFactors& f) {
  if (f.core.rank() != 4 || f.core.extent(2) != f.p_s.cols() || f.core.extent(3) != f.p_t.cols()) {
    throw ArgumentError("tucker_reconstruct: core and factor ranks disagree");
  }
  return Kernel4(mode_multiply(mode_multiply(f.core, f.p_s, kModeS), f.p_t, kModeT));
}

double tucker_ratio(std::size_t d, std::size_t in_channels, std::size_t out_channels,
                    std::size_t rank_s, std::size_t rank_t) {
  const double dd = static_cast<double>(d * d);
  const double original = dd * static_cast<double>(in_channels * out_channels);
  const double compressed = static_cast<double>(in_channels * rank_s) +
                            dd * static_cast<double>(rank_s * rank_t) +
                            static_cast<double>(out_channels * rank_t);
  return original / compressed;
}

// ------------------------------------------------------------ tiled SVD

std::size_t TileGridSvd::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tiles) total += t.factors.rank() * (t.h + t.w);
  return total;
}

double TileGridSvd::compression_ratio() const {
  return static_cast<double>(rows * cols) / static_cast<double>(parameter_count());
}

std::size_t tiled_parameter_count(std::size_t rows, std::size_t cols, std::size_t tile_h,
                                  std::size_t tile_w, std::size_t rank) {
  if (tile_h == 0 || tile_w == 0 || rank == 0) throw ArgumentError("tiling: zero tile size or rank");
  std::size_t total = 0;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile_h)
    for (std::size_t c0 = 0; c0 < cols; c0 += tile_w) {
      const std::size_t h = std::min(tile_h, rows - r0), w = std::min(tile_w, cols - c0);
      total += std::min({rank, h, w}) * (h + w);
    }
  return total;
}

TileGridSvd tiled_svd_decompose(const Matrix& m, std::size_t tile_h, std::size_t tile_w,
                                std::size_t rank) {
  if (tile_h == 0 || tile_w == 0 || rank == 0) throw ArgumentError("tiled_svd: zero tile size or rank");
  TileGridSvd grid{m.rows(), m.cols(), tile_h, tile_w, rank, {}};
  for (std::size_t r0 = 0; r0 < m.rows(); r0 += tile_h)
    for (std::size_t c0 = 0; c0 < m.cols(); c0 += tile_w) {
      const std::size_t h = std::min(tile_h, m.rows() - r0), w = std::min(tile_w, m.cols() - c0);
      grid.tiles.push_back({r0, c0, h, w, truncated_svd(m.block(r0, c0, h, w), std::min({rank, h, w}))});
    }
  return grid;
}

Matrix tiled_svd_reconstruct(const TileGridSvd& grid) {
  Matrix out(grid.rows, grid.cols);
  for (const auto& t : grid.tiles) out.set_block(t.row0, t.col0, t.factors.reconstruct());
  return out;
}

RankChoice svd_rank_for_ratio(std::size_t rows, std::size_t cols, std::size_t tile_h,
                              std::size_t tile_w, double target_ratio) {
  if (rows == 0 || cols == 0) throw ArgumentError("svd_rank_for_ratio: empty matrix");
  const std::size_t max_rank = std::min({tile_h, tile_w, rows, cols});
  const double original = static_cast<double>(rows * cols);
  auto ratio_at = [&](std::size_t r) {
    return original / static_cast<double>(tiled_parameter_count(rows, cols, tile_h, tile_w, r));
  };
  if (target_ratio <= 1.0) return {max_rank, ratio_at(max_rank)};
  for (std::size_t r = max_rank; r >= 1; --r) {
    const double achieved = ratio_at(r);
    if (achieved >= target_ratio * (1.0 - 1e-12)) return {r, achieved};
  }
  const double best = ratio_at(1);
  throw InfeasibleRatio("svd_rank_for_ratio: target " + std::to_string(target_ratio) +
                            "x unreachable; rank 1 gives " + std::to_string(best) + "x",
                        best);
}

// ------------------------------------------------------- variance study

std::vector<HistogramBin> positive_histogram(std::span<const double> values, std::size_t bins) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  std::vector<HistogramBin> hist(bins);
  const double width = peak / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    hist[b].lo = width * static_cast<double>(b);
    hist[b].hi = (b + 1 == bins) ? peak : width * static_cast<double>(b + 1);
  }
  if (peak == 0.0) return hist;
  for (double v : values) {
    if (!(v > 0.0)) continue;
    auto b = static_cast<std::size_t>(v / width);
    hist[std::min(b, bins - 1)].count++;
  }
  return hist;
}

std::vector<TilingStudyRow> tiling_variance_study(const Matrix& m, const std::vector<TileDims>& tilings,
                                                  double target_ratio) {
  for (double x : m.data())
    if (!std::isfinite(x)) throw ArgumentError("tiling_variance_study: non-finite entry");
  std::vector<TilingStudyRow> rows;
  for (const auto& dims : tilings) {
    const RankChoice choice = svd_rank_for_ratio(m.rows(), m.cols(), dims.h, dims.w, target_ratio);
    const Matrix rebuilt = tiled_svd_reconstruct(tiled_svd_decompose(m, dims.h, dims.w, choice.rank));

    const auto values = rebuilt.data();
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);

    rows.push_back({dims.h, dims.w, choice.rank, choice.ratio, values.size() > 1 ? ss / (n - 1.0) : 0.0,
                    positive_histogram(values)});
  }
  return rows;
}

}  // namespace deeptwist
