#pragma once

// Low-rank approximations of convolution kernels and the parameter-count
// arithmetic behind their compression ratios.
//
// Tucker: K[i,j,s,t] ≈ Σ_{a<Rs} Σ_{b<Rt} core[i,j,a,b] · P_S[s,a] · P_T[t,b]
// (spatial modes are kept; only the channel modes are reduced).
//
// Tiled SVD: a matrix (usually a lowered T × S·d² kernel) is cut into a grid
// of tiles and each tile is replaced by its rank-r truncation. Parameters are
// counted with sigma folded into U, i.e. r·(h + w) per tile.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "deeptwist/errors.hpp"
#include "deeptwist/linalg.hpp"
#include "deeptwist/tensor.hpp"

namespace deeptwist {

struct TuckerFactors {
  DenseTensor core;  // [d, d, Rs, Rt]
  Matrix p_s;        // S × Rs
  Matrix p_t;        // T × Rt

  std::size_t rank_s() const noexcept { return p_s.cols(); }
  std::size_t rank_t() const noexcept { return p_t.cols(); }
  std::size_t d() const { return core.extent(0); }
  std::size_t parameter_count() const { return core.size() + p_s.size() + p_t.size(); }
};

struct TuckerRanks {
  std::size_t s = 0;
  std::size_t t = 0;
  friend bool operator==(const TuckerRanks&, const TuckerRanks&) = default;
};

/// Rs = clamp(round_half_up(rc·S), 1, S), likewise for T. rc must be in (0, 1].
TuckerRanks tucker_ranks(std::size_t in_channels, std::size_t out_channels, double rc);

struct TuckerOptions {
  int hooi_iters = 3;
  /// Stop early once the relative drop in residual falls below this.
  double min_improvement = 1e-6;
};

/// HOSVD initialisation followed by up to `hooi_iters` rounds of
/// higher-order orthogonal iteration over the two channel modes.
/// If `residual_history` is given it receives ‖K − K̃‖²_F after the HOSVD
/// step and after every HOOI round.
TuckerFactors tucker_decompose(const Kernel4& kernel, TuckerRanks ranks,
                               const TuckerOptions& options = {},
                               std::vector<double>* residual_history = nullptr);

Kernel4 tucker_reconstruct(const TuckerFactors& factors);

/// d²ST / (S·Rs + d²·Rs·Rt + T·Rt).
double tucker_ratio(std::size_t d, std::size_t in_channels, std::size_t out_channels,
                    std::size_t rank_s, std::size_t rank_t);

struct SvdTile {
  std::size_t row0 = 0, col0 = 0, h = 0, w = 0;
  SvdFactors factors;
};

struct TileGridSvd {
  std::size_t rows = 0, cols = 0;
  std::size_t tile_h = 0, tile_w = 0;
  std::size_t rank = 0;  // requested rank; edge tiles may carry less
  std::vector<SvdTile> tiles;

  /// Σ r_tile·(h_tile + w_tile).
  std::size_t parameter_count() const;
  double compression_ratio() const;
};

/// Folded-sigma parameter count of a tiling without decomposing anything.
std::size_t tiled_parameter_count(std::size_t rows, std::size_t cols, std::size_t tile_h,
                                  std::size_t tile_w, std::size_t rank);

TileGridSvd tiled_svd_decompose(const Matrix& m, std::size_t tile_h, std::size_t tile_w,
                                std::size_t rank);
Matrix tiled_svd_reconstruct(const TileGridSvd& grid);

/// Thrown by svd_rank_for_ratio when even rank 1 misses the target.
class InfeasibleRatio : public ArgumentError {
 public:
  InfeasibleRatio(const std::string& what, double best) : ArgumentError(what), best_(best) {}
  double best_achievable() const noexcept { return best_; }

 private:
  double best_;
};

struct RankChoice {
  std::size_t rank = 0;
  double ratio = 0.0;
};

/// Largest r with tiled compression ratio >= target. A target of 1 or less
/// means "no compression" and selects full rank per tile.
RankChoice svd_rank_for_ratio(std::size_t rows, std::size_t cols, std::size_t tile_h,
                              std::size_t tile_w, double target_ratio);

struct HistogramBin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
};

struct TilingStudyRow {
  std::size_t tile_h = 0, tile_w = 0;
  std::size_t rank = 0;
  double ratio = 0.0;
  double variance = 0.0;  // sample variance of all reconstructed entries
  std::vector<HistogramBin> histogram;
};

struct TileDims {
  std::size_t h = 0, w = 0;
};

constexpr std::size_t kStudyHistogramBins = 200;

/// For each tiling: pick the rank for `target_ratio`, decompose, reconstruct,
/// then report the variance of the result and a histogram of its positive
/// entries over [0, max|w|].
std::vector<TilingStudyRow> tiling_variance_study(const Matrix& m,
                                                  const std::vector<TileDims>& tilings,
                                                  double target_ratio);

/// 200-bin histogram of the strictly positive entries over [0, max|x|].
std::vector<HistogramBin> positive_histogram(std::span<const double> values,
                                             std::size_t bins = kStudyHistogramBins);

}  // namespace deeptwist
