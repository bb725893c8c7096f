#pragma once

// Dense symmetric kernels: pivoted LDL^T with inertia, Cholesky, and the
// symmetric-definite generalized eigensolver.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "specslice/errors.hpp"

namespace specslice {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Real symmetric matrix in full storage. The lower triangle is
/// authoritative; constructors mirror it so both triangles always agree.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Index n);

  /// Mirrors the lower triangle of `m` onto its upper triangle.
  static SymMatrix from_lower(Matrix m);
  /// Accepts `m` if |m - m^T| <= rel_tol * max|m| entrywise, then averages
  /// the two triangles. Throws DimensionMismatch otherwise.
  static SymMatrix from_dense(const Matrix& m, double rel_tol = 1e-12);
  static SymMatrix identity(Index n);
  static SymMatrix diagonal(const Vector& d);

  Index order() const noexcept { return data_.rows(); }
  const Matrix& dense() const noexcept { return data_; }
  double operator()(Index i, Index j) const { return data_(i, j); }

  double max_abs() const;
  double frobenius_norm() const { return data_.norm(); }

 private:
  explicit SymMatrix(Matrix m) : data_(std::move(m)) {}
  Matrix data_;
};

/// a - sigma * b
SymMatrix shifted(const SymMatrix& a, const SymMatrix& b, double sigma);

struct Inertia {
  Index n_neg = 0;
  Index n_zero = 0;
  Index n_pos = 0;

  Index order() const noexcept { return n_neg + n_zero + n_pos; }
  friend bool operator==(const Inertia&, const Inertia&) = default;
};

/// One diagonal block of D: 1x1 (d21 = d22 = 0) or symmetric 2x2.
struct PivotBlock {
  Index start = 0;
  int size = 1;
  double d11 = 0.0;
  double d21 = 0.0;
  double d22 = 0.0;
};

/// P M P^T = L D L^T with unit lower L and block-diagonal D.
class LdltFactorization {
 public:
  Index order() const noexcept { return static_cast<Index>(perm_.size()); }
  /// perm()[i] is the row of M placed at position i.
  const std::vector<Index>& permutation() const noexcept { return perm_; }
  const Matrix& unit_lower() const noexcept { return lower_; }
  const std::vector<PivotBlock>& blocks() const noexcept { return blocks_; }
  const Inertia& inertia() const noexcept { return inertia_; }
  double zero_tolerance() const noexcept { return zero_tol_; }
  bool singular() const noexcept { return inertia_.n_zero > 0; }

  /// L D L^T (still permuted).
  Matrix permuted_product() const;
  /// P^T L D L^T P, i.e. the reconstructed input.
  Matrix reconstruct() const;

 private:
  friend LdltFactorization factor_ldlt(const SymMatrix& m);

  std::vector<Index> perm_;
  Matrix lower_;
  std::vector<PivotBlock> blocks_;
  Inertia inertia_;
  double zero_tol_ = 0.0;
};

/// Bunch-Kaufman factorization. Never throws on singular input: numerically
/// zero pivots are counted in inertia().n_zero and make solves throw.
LdltFactorization factor_ldlt(const SymMatrix& m);

/// Solves M Y = rhs. Column panels are processed in parallel with OpenMP;
/// the panel width is fixed so results do not depend on the thread count.
Matrix solve_ldlt(const LdltFactorization& f, const Matrix& rhs);
/// Serial reference for solve_ldlt, whole block at once.
Matrix solve_ldlt_reference(const LdltFactorization& f, const Matrix& rhs);

/// Lower-triangular R with R R^T = m. Throws NotPositiveDefinite.
Matrix cholesky(const SymMatrix& m);
Matrix cholesky(const Matrix& m);

struct GenEigResult {
  Vector values;   ///< ascending
  Matrix vectors;  ///< B-orthonormal columns
};

/// A x = lambda B x via Cholesky reduction of B and a dense symmetric
/// eigensolve. Throws NotPositiveDefinite for B.
GenEigResult dense_gen_eig(const SymMatrix& a, const SymMatrix& b);
GenEigResult dense_gen_eig(const Matrix& a, const Matrix& b);

}  // namespace specslice
