#include "deeptwist/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "deeptwist/errors.hpp"

namespace deeptwist {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void rotate(std::span<double> p, std::span<double> q, double c, double s) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p[i], y = q[i];
    p[i] = c * x - s * y;
    q[i] = s * x + c * y;
  }
}

// Fills the rows of `basis` flagged in `missing` with unit vectors orthogonal
// to every other row. Candidates are the standard basis vectors, tried in
// order; classical Gram-Schmidt is applied twice for stability.
void complete_orthonormal(Matrix& basis, const std::vector<bool>& missing) {
  const std::size_t k = basis.rows(), n = basis.cols();
  std::vector<bool> done(k);
  for (std::size_t j = 0; j < k; ++j) done[j] = !missing[j];
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (done[j]) continue;
    while (true) {
      if (candidate >= n) throw NumericalError("svd: failed to complete orthonormal basis");
      std::vector<double> v(n, 0.0);
      v[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t o = 0; o < k; ++o) {
          if (!done[o]) continue;
          auto row = basis.row(o);
          const double proj = dot(v, row);
          for (std::size_t i = 0; i < n; ++i) v[i] -= proj * row[i];
        }
      const double norm = std::sqrt(dot(v, v));
      if (norm < 0.5) continue;
      auto row = basis.row(j);
      for (std::size_t i = 0; i < n; ++i) row[i] = v[i] / norm;
      done[j] = true;
      break;
    }
  }
}

// One-sided Jacobi on a tall matrix, handed over as its transpose so that each
// column of the original is a contiguous row. Returns U, sigma, V unsorted,
// with U and V also stored transposed (one singular vector per row).
struct RawSvd {
  Matrix ut;
  std::vector<double> sigma;
  Matrix vt;
};

RawSvd jacobi_tall(Matrix cols, const JacobiOptions& opt) {
  const std::size_t k = cols.rows();  // number of columns of the original
  Matrix vt = Matrix::identity(k);
  std::vector<double> norms(k);

  bool converged = (k < 2);
  for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
    for (std::size_t j = 0; j < k; ++j) norms[j] = dot(cols.row(j), cols.row(j));
    double worst = 0.0;
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        const double alpha = norms[p], beta = norms[q];
        if (alpha <= 0.0 || beta <= 0.0) continue;
        const double scale = std::sqrt(alpha) * std::sqrt(beta);
        if (scale < 1e-300) continue;
        const double gamma = dot(cols.row(p), cols.row(q));
        const double off = std::abs(gamma) / scale;
        worst = std::max(worst, off);
        if (off <= opt.tolerance) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(cols.row(p), cols.row(q), c, s);
        rotate(vt.row(p), vt.row(q), c, s);
        norms[p] = alpha - t * gamma;
        norms[q] = beta + t * gamma;
      }
    }
    converged = worst <= opt.tolerance;
  }
  if (!converged) {
    throw NumericalError("svd: one-sided Jacobi did not converge within " +
                         std::to_string(opt.max_sweeps) + " sweeps");
  }

  RawSvd raw{std::move(cols), std::vector<double>(k), std::move(vt)};
  std::vector<bool> missing(k, false);
  for (std::size_t j = 0; j < k; ++j) {
    auto row = raw.ut.row(j);
    const double norm = std::sqrt(dot(row, row));
    raw.sigma[j] = norm;
    if (norm < 1e-300) {
      missing[j] = true;
      raw.sigma[j] = 0.0;
      continue;
    }
    for (auto& x : row) x /= norm;
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) {
    complete_orthonormal(raw.ut, missing);
  }
  return raw;
}

}  // namespace

Matrix SvdFactors::reconstruct() const {
  Matrix scaled = u;
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t j = 0; j < sigma.size(); ++j) scaled(i, j) *= sigma[j];
  return matmul_nt(scaled, v);
}

SvdFactors svd(const Matrix& m, const JacobiOptions& options) {
  if (m.rows() == 0 || m.cols() == 0) throw ArgumentError("svd: empty matrix");
  for (double x : m.data())
    if (!std::isfinite(x)) throw ArgumentError("svd: non-finite entry");

  // Orthogonalise along the shorter dimension.
  const bool wide = m.rows() < m.cols();
  RawSvd raw = jacobi_tall(wide ? m : m.transposed(), options);
  // For a tall input, raw.ut holds left vectors and raw.vt right vectors;
  // for a wide input we decomposed mᵀ, so the roles swap.
  Matrix& left_t = wide ? raw.vt : raw.ut;
  Matrix& right_t = wide ? raw.ut : raw.vt;

  const std::size_t r = raw.sigma.size();
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw.sigma[a] > raw.sigma[b]; });

  SvdFactors out{Matrix(m.rows(), r), std::vector<double>(r), Matrix(m.cols(), r)};
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t src = order[k];
    auto lrow = left_t.row(src);
    auto rrow = right_t.row(src);
    std::size_t peak = 0;
    for (std::size_t i = 1; i < lrow.size(); ++i)
      if (std::abs(lrow[i]) > std::abs(lrow[peak])) peak = i;
    const double sign = lrow[peak] < 0.0 ? -1.0 : 1.0;
    out.sigma[k] = raw.sigma[src];
    for (std::size_t i = 0; i < m.rows(); ++i) out.u(i, k) = sign * lrow[i];
    for (std::size_t i = 0; i < m.cols(); ++i) out.v(i, k) = sign * rrow[i];
  }
  return out;
}

SvdFactors truncated_svd(const Matrix& m, std::size_t r, const JacobiOptions& options) {
  const std::size_t full = std::min(m.rows(), m.cols());
  if (r < 1 || r > full) {
    throw ArgumentError("truncated_svd: rank " + std::to_string(r) + " outside [1, " +
                        std::to_string(full) + "]");
  }
  SvdFactors f = svd(m, options);
  if (r == full) return f;
  f.u = f.u.block(0, 0, f.u.rows(), r);
  f.v = f.v.block(0, 0, f.v.rows(), r);
  f.sigma.resize(r);
  return f;
}

double frobenius_sq(std::span<const double> values) {
  double acc = 0.0;
  for (double x : values) acc += x * x;
  return acc;
}

double frobenius_sq_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("frobenius_sq_diff: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace deeptwist
