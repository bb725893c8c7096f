#pragma once

// Shift-invert subspace iteration around one shift.

#include <cstdint>
#include <random>
#include <vector>

#include "specslice/pencil.hpp"

namespace specslice {

struct ProbeConfig {
  Index basis_dim = 0;  ///< k; must be set (>= 1) before use
  int subspace_iters = 4;
  int ortho_retry_limit = 3;
  double shift_perturb_scale = 1e-8;
  int max_shift_perturbations = 3;
  /// Stop the M loop once every Ritz residual is below this (0 = never).
  double early_exit_tol = 0.0;
  /// Record the max residual after each subspace iteration (costs one
  /// Rayleigh-Ritz per iteration; used by tests).
  bool record_history = false;
};

struct ProbeStats {
  int factorizations = 0;
  int solves = 0;
  int ortho_retries = 0;
  int shift_perturbations = 0;
};

struct SpectralProbe {
  int probe_id = 0;
  double sigma = 0.0;  ///< shift actually factored (after any perturbation)
  Vector ritz_values;  ///< ascending
  Matrix ritz_vectors;  ///< N x k, B-orthonormal
  Vector residual_norms;
  Index inertia_neg = 0;
  int iteration_count = 0;
  ProbeStats stats;
  std::vector<double> residual_history;
};

/// Per-probe random stream, independent of execution order.
std::mt19937_64 probe_rng(std::uint64_t global_seed, int probe_id, int iteration);

/// W = V R^{-T} with V^T B V = R R^T. Throws NotPositiveDefinite when the
/// Gram matrix is not numerically SPD.
Matrix cholesky_qr(const Matrix& v, const MatrixPencil& p);

/// Robust B-orthonormalization: column scaling, Cholesky QR (twice when
/// needed); rank-deficient columns are replaced by random ones and the
/// attempt repeated up to `retry_limit` times.
Matrix b_orthonormalize(Matrix v, const MatrixPencil& p, std::mt19937_64& rng, int retry_limit, int* retries = nullptr);

struct RitzPairs {
  Vector values;  ///< ascending
  Matrix vectors;
};

/// Projected problem on span(V) for B-orthonormal V.
RitzPairs rayleigh_ritz(const MatrixPencil& p, const Matrix& v);

/// Previous vectors (first k columns) padded with N(0,1) columns up to k.
Matrix seed_block(const Matrix* previous, Index k, Index n, std::mt19937_64& rng);

/// One factorization of A - sigma B, M solves each followed by
/// re-orthonormalization, then Rayleigh-Ritz. `window_width` scales the
/// shift perturbation applied on a singular factorization.
SpectralProbe si_subspace_iteration(const MatrixPencil& p, double sigma, Matrix v0, const ProbeConfig& cfg,
                                    int probe_id, std::mt19937_64& rng, double window_width);

}  // namespace specslice
