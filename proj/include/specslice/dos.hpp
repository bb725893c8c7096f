#pragma once

// Lanczos-based spectral density: Gaussian-broadened density phi(w) and its
// closed-form cumulative Phi(w).

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "specslice/pencil.hpp"

namespace specslice {

struct LanczosResult {
  Vector thetas;        ///< Ritz values of T_k, ascending
  Matrix t_vectors;     ///< eigenvectors g_j of T_k (columns)
  Vector first_components;  ///< e_1^T g_j
  Index steps = 0;      ///< completed steps (< k after breakdown)
  bool breakdown = false;
  double max_orthogonality_loss = 0.0;  ///< max |Q^T B Q - I|
};

/// B-orthonormal Lanczos on B^{-1}A from an N(0,1) start, with full
/// reorthogonalization. Throws InputError unless 1 <= k <= N.
LanczosResult lanczos_b_orthogonal(const MatrixPencil& p, Index k, std::uint64_t seed);

enum class WidthRule { max_gap, avg_gap };

/// Reciprocal of the Gaussian tail level that counts as "vanished".
inline constexpr double kWidthCutoff = 1e3;

class DosModel {
 public:
  DosModel() = default;
  DosModel(Index n, Vector thetas, Vector weights, Vector widths, double a, double b, Index steps,
           std::uint64_t seed);

  Index order() const noexcept { return n_; }
  Index size() const noexcept { return thetas_.size(); }
  const Vector& thetas() const noexcept { return thetas_; }
  /// zeta_j^2, normalized to sum to one
  const Vector& weights() const noexcept { return weights_; }
  const Vector& widths() const noexcept { return widths_; }
  double source_lower() const noexcept { return a_; }
  double source_upper() const noexcept { return b_; }
  Index lanczos_steps() const noexcept { return steps_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// Exact sum of weights, used to pin Phi(+inf) to N.
  double weight_sum() const noexcept { return weight_sum_; }

 private:
  Index n_ = 0;
  Vector thetas_, weights_, widths_;
  double a_ = 0.0, b_ = 0.0;
  Index steps_ = 0;
  std::uint64_t seed_ = 0;
  double weight_sum_ = 1.0;
};

/// Widths from neighbor gaps of each run; runs are concatenated with weights
/// scaled by 1/runs.size(). `a`, `b` bound the source interval (used for the
/// single-pair fallback width).
DosModel build_dos_model(const std::vector<LanczosResult>& runs, Index n, WidthRule rule, double a, double b,
                         std::uint64_t seed = 0);
DosModel build_dos_model(const LanczosResult& run, Index n, WidthRule rule, double a, double b,
                         std::uint64_t seed = 0);

/// Lanczos runs with seeds seed, seed+1, ... merged into one model. The
/// source interval defaults to the Ritz range.
DosModel estimate_dos(const MatrixPencil& p, Index steps, std::uint64_t seed, WidthRule rule = WidthRule::max_gap,
                      int n_vectors = 1);

double dos_eval(const DosModel& m, double omega);
double cdos_eval(const DosModel& m, double omega);

struct CountEstimate {
  double gamma = 0.0;
  Index ceil_count = 0;
};

/// gamma = Phi(b) - Phi(a). Throws InputError if a > b.
CountEstimate count(const DosModel& m, double a, double b);

struct ShiftEstimate {
  double sigma = 0.0;
  bool fallback = false;  ///< midpoint used because the mass was below 1e-8
};

inline constexpr double kCountFloor = 1e-8;

/// DOS-weighted mean of omega over [l, u], clamped into [l, u].
ShiftEstimate expected_shift(const DosModel& m, double l, double u);

struct DosGrid {
  Vector omega, dos, cdos;
};

/// Uniform grid of npts >= 2 points on [lo, hi]. OpenMP over grid points.
DosGrid evaluate_grid(const DosModel& m, double lo, double hi, Index npts);
/// Serial reference for evaluate_grid.
DosGrid evaluate_grid_reference(const DosModel& m, double lo, double hi, Index npts);

/// Columns omega,dos,cdos with a header row.
void write_dos_csv(std::ostream& out, const DosGrid& g);

}  // namespace specslice
