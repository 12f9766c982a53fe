#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deeptwist/tensor.hpp"

namespace deeptwist {

/// M ≈ U·diag(sigma)·Vᵀ with U n×r and V m×r column-orthonormal and sigma
/// sorted non-increasing.
struct SvdFactors {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;

  std::size_t rank() const noexcept { return sigma.size(); }
  Matrix reconstruct() const;
};

struct JacobiOptions {
  double tolerance = 1e-12;
  int max_sweeps = 60;
};

/// Full thin SVD (r = min(n, m)) by one-sided Jacobi rotations.
///
/// Deterministic: cyclic pair ordering, no pivoting randomness. Each
/// singular pair is signed so the largest-magnitude entry of the U column is
/// positive. Throws ArgumentError on empty or non-finite input and
/// NumericalError when the sweep cap is hit before convergence.
SvdFactors svd(const Matrix& m, const JacobiOptions& options = {});

/// Leading r singular triplets of m; 1 <= r <= min(n, m).
SvdFactors truncated_svd(const Matrix& m, std::size_t r, const JacobiOptions& options = {});

double frobenius_sq(std::span<const double> values);
inline double frobenius_sq(const Matrix& m) { return frobenius_sq(m.data()); }
inline double frobenius_sq(const DenseTensor& t) { return frobenius_sq(t.data()); }

/// Σ (a_i - b_i)²; sizes must match.
double frobenius_sq_diff(std::span<const double> a, std::span<const double> b);

}  // namespace deeptwist
