#include "specslice/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

namespace specslice {

SymMatrix::SymMatrix(Index n) : data_(Matrix::Zero(n, n)) {}

SymMatrix SymMatrix::from_lower(Matrix m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("symmetric matrix must be square");
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = j + 1; i < m.rows(); ++i) m(j, i) = m(i, j);
  return SymMatrix(std::move(m));
}

SymMatrix SymMatrix::from_dense(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) throw DimensionMismatch("symmetric matrix must be square");
  const double scale = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
  const double asym = m.size() ? (m - m.transpose()).cwiseAbs().maxCoeff() : 0.0;
  if (asym > rel_tol * scale)
    throw DimensionMismatch("matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  return SymMatrix(Matrix(0.5 * (m + m.transpose())));
}

SymMatrix SymMatrix::identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }

SymMatrix SymMatrix::diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

double SymMatrix::max_abs() const { return data_.size() ? data_.cwiseAbs().maxCoeff() : 0.0; }

SymMatrix shifted(const SymMatrix& a, const SymMatrix& b, double sigma) {
  if (a.order() != b.order()) throw DimensionMismatch("pencil matrices differ in order");
  return SymMatrix::from_lower(a.dense() - sigma * b.dense());
}

// ---------------------------------------------------------------------------
// Bunch-Kaufman, lower storage, unblocked (after LAPACK dsytf2).

namespace {

void swap_symmetric(Matrix& w, Index k, Index kk, Index kp, Index n) {
  // Rows/columns kk < kp of the trailing lower triangle; column k < kk only
  // matters for the 2x2 case where kk = k + 1.
  for (Index i = kp + 1; i < n; ++i) std::swap(w(i, kk), w(i, kp));
  for (Index j = kk + 1; j < kp; ++j) std::swap(w(j, kk), w(kp, j));
  std::swap(w(kk, kk), w(kp, kp));
  if (kk != k) std::swap(w(kk, k), w(kp, k));
  // Multipliers already computed for earlier columns.
  for (Index j = 0; j < k; ++j) std::swap(w(kk, j), w(kp, j));
}

}  // namespace

LdltFactorization factor_ldlt(const SymMatrix& m) {
  const Index n = m.order();
  LdltFactorization f;
  f.perm_.resize(static_cast<std::size_t>(n));
  std::iota(f.perm_.begin(), f.perm_.end(), Index{0});
  f.zero_tol_ = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * m.max_abs();

  Matrix w = m.dense();
  const double alpha = (1.0 + std::sqrt(17.0)) / 8.0;

  Index k = 0;
  while (k < n) {
    const double absakk = std::abs(w(k, k));
    Index imax = k;
    double colmax = 0.0;
    for (Index i = k + 1; i < n; ++i) {
      if (std::abs(w(i, k)) > colmax) {
        colmax = std::abs(w(i, k));
        imax = i;
      }
    }

    int kstep = 1;
    Index kp = k;
    if (std::max(absakk, colmax) == 0.0) {
      kp = k;  // zero column, nothing to eliminate
    } else if (absakk >= alpha * colmax) {
      kp = k;
    } else {
      double rowmax = 0.0;
      for (Index j = k; j < imax; ++j) rowmax = std::max(rowmax, std::abs(w(imax, j)));
      for (Index i = imax + 1; i < n; ++i) rowmax = std::max(rowmax, std::abs(w(i, imax)));
      if (absakk * rowmax >= alpha * colmax * colmax) {
        kp = k;
      } else if (std::abs(w(imax, imax)) >= alpha * rowmax) {
        kp = imax;
      } else {
        kp = imax;
        kstep = 2;
      }
    }

    const Index kk = k + kstep - 1;
    if (kp != kk) {
      swap_symmetric(w, k, kk, kp, n);
      std::swap(f.perm_[static_cast<std::size_t>(kk)], f.perm_[static_cast<std::size_t>(kp)]);
    }

    if (kstep == 1) {
      const double d = w(k, k);
      if (d != 0.0) {
        const double r = 1.0 / d;
        for (Index j = k + 1; j < n; ++j) {
          const double ljd = w(j, k) * r;
          if (ljd == 0.0) continue;
          for (Index i = j; i < n; ++i) w(i, j) -= w(i, k) * ljd;
        }
        for (Index i = k + 1; i < n; ++i) w(i, k) *= r;
      }
      f.blocks_.push_back({k, 1, d, 0.0, 0.0});
    } else {
      const double d11 = w(k, k);
      const double d21 = w(k + 1, k);
      const double d22 = w(k + 1, k + 1);
      const double det = d11 * d22 - d21 * d21;
      // Rows i >= k+2: [l_i1 l_i2] = [w_ik w_ik1] D^{-1}
      for (Index i = k + 2; i < n; ++i) {
        const double a = w(i, k);
        const double b = w(i, k + 1);
        w(i, k) = (a * d22 - b * d21) / det;
        w(i, k + 1) = (b * d11 - a * d21) / det;
      }
      for (Index j = k + 2; j < n; ++j) {
        const double aj = w(j, k) * d11 + w(j, k + 1) * d21;
        const double bj = w(j, k) * d21 + w(j, k + 1) * d22;
        for (Index i = j; i < n; ++i) w(i, j) -= w(i, k) * aj + w(i, k + 1) * bj;
      }
      f.blocks_.push_back({k, 2, d11, d21, d22});
    }
    k += kstep;
  }

  // Unpack L and count block signs.
  f.lower_ = Matrix::Identity(n, n);
  for (const auto& blk : f.blocks_) {
    for (Index c = blk.start; c < blk.start + blk.size; ++c)
      for (Index i = blk.start + blk.size; i < n; ++i) f.lower_(i, c) = w(i, c);
    if (blk.size == 1) {
      if (std::abs(blk.d11) <= f.zero_tol_) ++f.inertia_.n_zero;
      else if (blk.d11 < 0.0) ++f.inertia_.n_neg;
      else ++f.inertia_.n_pos;
    } else {
      const double mean = 0.5 * (blk.d11 + blk.d22);
      const double rad = std::hypot(0.5 * (blk.d11 - blk.d22), blk.d21);
      for (const double ev : {mean - rad, mean + rad}) {
        if (std::abs(ev) <= f.zero_tol_) ++f.inertia_.n_zero;
        else if (ev < 0.0) ++f.inertia_.n_neg;
        else ++f.inertia_.n_pos;
      }
    }
  }
  return f;
}

Matrix LdltFactorization::permuted_product() const {
  const Index n = order();
  Matrix d = Matrix::Zero(n, n);
  for (const auto& blk : blocks_) {
    d(blk.start, blk.start) = blk.d11;
    if (blk.size == 2) {
      d(blk.start + 1, blk.start) = blk.d21;
      d(blk.start, blk.start + 1) = blk.d21;
      d(blk.start + 1, blk.start + 1) = blk.d22;
    }
  }
  return lower_ * d * lower_.transpose();
}

Matrix LdltFactorization::reconstruct() const {
  const Matrix pm = permuted_product();
  const Index n = order();
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      out(perm_[static_cast<std::size_t>(i)], perm_[static_cast<std::size_t>(j)]) = pm(i, j);
  return out;
}

namespace {

void check_solvable(const LdltFactorization& f, const Matrix& rhs) {
  if (rhs.rows() != f.order())
    throw DimensionMismatch("right-hand side has " + std::to_string(rhs.rows()) +
                            " rows, factorization has order " + std::to_string(f.order()));
  if (f.singular())
    throw SingularPivot("shifted matrix has " + std::to_string(f.inertia().n_zero) +
                        " numerically zero pivot(s); perturb the shift");
}

// In-place P^T L^{-T} D^{-1} L^{-1} P on a column block.
void solve_block(const LdltFactorization& f, const Matrix& rhs, Index col0, Index ncols,
                 Matrix& out) {
  const Index n = f.order();
  const auto& perm = f.permutation();
  Matrix y(n, ncols);
  for (Index i = 0; i < n; ++i) y.row(i) = rhs.block(perm[static_cast<std::size_t>(i)], col0, 1, ncols);
  const auto lower = f.unit_lower().triangularView<Eigen::UnitLower>();
  lower.solveInPlace(y);
  for (const auto& blk : f.blocks()) {
    if (blk.size == 1) {
      y.row(blk.start) /= blk.d11;
    } else {
      const double det = blk.d11 * blk.d22 - blk.d21 * blk.d21;
      for (Index c = 0; c < ncols; ++c) {
        const double a = y(blk.start, c);
        const double b = y(blk.start + 1, c);
        y(blk.start, c) = (blk.d22 * a - blk.d21 * b) / det;
        y(blk.start + 1, c) = (blk.d11 * b - blk.d21 * a) / det;
      }
    }
  }
  f.unit_lower().transpose().triangularView<Eigen::UnitUpper>().solveInPlace(y);
  for (Index i = 0; i < n; ++i) out.block(perm[static_cast<std::size_t>(i)], col0, 1, ncols) = y.row(i);
}

constexpr Index kSolvePanel = 32;

}  // namespace

Matrix solve_ldlt_reference(const LdltFactorization& f, const Matrix& rhs) {
  check_solvable(f, rhs);
  Matrix out(rhs.rows(), rhs.cols());
  if (rhs.cols() > 0) solve_block(f, rhs, 0, rhs.cols(), out);
  return out;
}

Matrix solve_ldlt(const LdltFactorization& f, const Matrix& rhs) {
  check_solvable(f, rhs);
  Matrix out(rhs.rows(), rhs.cols());
  const Index panels = (rhs.cols() + kSolvePanel - 1) / kSolvePanel;
#pragma omp parallel for schedule(static) if (panels > 1)
  for (Index p = 0; p < panels; ++p) {
    const Index c0 = p * kSolvePanel;
    solve_block(f, rhs, c0, std::min(kSolvePanel, rhs.cols() - c0), out);
  }
  return out;
}

// ---------------------------------------------------------------------------

Matrix cholesky(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("cholesky needs a square matrix");
  const Index n = m.rows();
  Matrix r = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = m(j, j);
    for (Index p = 0; p < j; ++p) d -= r(j, p) * r(j, p);
    if (!(d > 0.0) || !std::isfinite(d))
      throw NotPositiveDefinite("nonpositive pivot " + std::to_string(d) + " in column " + std::to_string(j), j);
    const double rjj = std::sqrt(d);
    r(j, j) = rjj;
    // Column j below the diagonal: m(i,j) - sum_p r(i,p) r(j,p)
    Vector col = m.block(j + 1, j, n - j - 1, 1);
    if (j > 0) col.noalias() -= r.block(j + 1, 0, n - j - 1, j) * r.block(j, 0, 1, j).transpose();
    r.block(j + 1, j, n - j - 1, 1) = col / rjj;
  }
  return r;
}

Matrix cholesky(const SymMatrix& m) { return cholesky(m.dense()); }

GenEigResult dense_gen_eig(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw DimensionMismatch("dense_gen_eig: A and B must be square and of equal order");
  const Matrix l = cholesky(b);
  const auto lv = l.triangularView<Eigen::Lower>();
  // C = L^{-1} A L^{-T}
  Matrix c = lv.solve(a);
  c = lv.solve(c.transpose()).eval();
  c = 0.5 * (c + c.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  if (es.info() != Eigen::Success) throw Error("dense_gen_eig: symmetric eigensolver did not converge");
  GenEigResult out;
  out.values = es.eigenvalues();
  out.vectors = l.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
  return out;
}

GenEigResult dense_gen_eig(const SymMatrix& a, const SymMatrix& b) { return dense_gen_eig(a.dense(), b.dense()); }

}  // namespace specslice
