#include "specslice/probe.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace specslice {

std::mt19937_64 probe_rng(std::uint64_t global_seed, int probe_id, int iteration) {
  std::seed_seq ss{static_cast<std::uint32_t>(global_seed), static_cast<std::uint32_t>(global_seed >> 32),
                   static_cast<std::uint32_t>(probe_id), static_cast<std::uint32_t>(iteration)};
  return std::mt19937_64(ss);
}

Matrix cholesky_qr(const Matrix& v, const MatrixPencil& p) {
  if (v.rows() != p.order()) throw DimensionMismatch("cholesky_qr: block rows differ from pencil order");
  Matrix g = v.transpose() * p.apply_b(v);
  g = 0.5 * (g + g.transpose()).eval();
  const Matrix r = cholesky(g);
  // W = V R^{-T}  <=>  W R^T = V
  return r.triangularView<Eigen::Lower>().solve(v.transpose()).transpose();
}

namespace {

double ortho_error(const Matrix& w, const MatrixPencil& p) {
  const Matrix g = w.transpose() * p.apply_b(w);
  return (g - Matrix::Identity(w.cols(), w.cols())).norm();
}

void randomize_columns(Matrix& v, const std::vector<Index>& cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Index c : cols)
    for (Index i = 0; i < v.rows(); ++i) v(i, c) = nd(rng);
}

// Columns outside the numerical rank of L^T V, found by pivoted QR.
std::vector<Index> deficient_columns(const Matrix& v, const MatrixPencil& p) {
  const Matrix lv = p.b_is_identity() ? v : Matrix(p.b_cholesky().transpose() * v);
  Eigen::ColPivHouseholderQR<Matrix> qr(lv);
  qr.setThreshold(1e-10);
  const Index r = qr.rank();
  std::vector<Index> out;
  const auto& perm = qr.colsPermutation().indices();
  for (Index j = r; j < v.cols(); ++j) out.push_back(perm(j));
  std::sort(out.begin(), out.end());
  return out;
}

double gram_error(const Matrix& w, const Matrix& bw) {
  return (w.transpose() * bw - Matrix::Identity(w.cols(), w.cols())).norm();
}

// cond(V^T B V) above which the Gram route is not trusted.
constexpr double kGramCondLimit = 1e8;

// Condition number of V^T B V; infinite when it is not positive definite.
double gram_condition(const Matrix& v, const Matrix& bv) {
  Matrix g = v.transpose() * bv;
  g = 0.5 * (g + g.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

// One Cholesky QR step given B V; returns W and the factor R.
std::pair<Matrix, Matrix> cholqr_pass(const Matrix& v, const Matrix& bv) {
  Matrix g = v.transpose() * bv;
  g = 0.5 * (g + g.transpose()).eval();
  Matrix r = cholesky(g);
  Matrix w = r.triangularView<Eigen::Lower>().solve(v.transpose()).transpose();
  return {std::move(w), std::move(r)};
}

// Householder QR of L^T V mapped back by L^{-T}; stable for full-rank blocks
// whose condition number defeats the Gram-matrix route.
Matrix householder_b(const Matrix& v, const MatrixPencil& p) {
  const bool ident = p.b_is_identity();
  Eigen::HouseholderQR<Matrix> qr(ident ? v : Matrix(p.b_cholesky().transpose() * v));
  Matrix q = qr.householderQ() * Matrix::Identity(v.rows(), v.cols());
  if (ident) return q;
  return p.b_cholesky().transpose().triangularView<Eigen::Upper>().solve(q);
}

}  // namespace

Matrix b_orthonormalize(Matrix v, const MatrixPencil& p, std::mt19937_64& rng, int retry_limit, int* retries) {
  if (v.rows() != p.order()) throw DimensionMismatch("b_orthonormalize: block rows differ from pencil order");
  if (v.cols() > v.rows()) throw InputError("b_orthonormalize: more columns than rows");
  for (int attempt = 0;; ++attempt) {
    // Scale columns to unit B-norm; zero columns are rank deficient.
    Matrix bv = p.apply_b(v);
    std::vector<Index> zero;
    for (Index j = 0; j < v.cols(); ++j) {
      const double nrm = std::sqrt(std::max(0.0, v.col(j).dot(bv.col(j))));
      if (nrm > 0.0 && std::isfinite(nrm)) {
        v.col(j) /= nrm;
        bv.col(j) /= nrm;
      } else {
        zero.push_back(j);
      }
    }
    if (zero.empty()) {
      // Cholesky QR keeps span(V) only to about eps * cond(V); past
      // kGramCondLimit the Householder route below is used instead.
      if (gram_condition(v, bv) <= kGramCondLimit) {
        try {
          // Two Gram passes; B W is refreshed once between them and then
          // carried through the triangular update.
          auto [w, r] = cholqr_pass(v, bv);
          Matrix bw = p.apply_b(w);
          auto [w2, r2] = cholqr_pass(w, bw);
          bw = r2.triangularView<Eigen::Lower>().solve(bw.transpose()).transpose();
          if (gram_error(w2, bw) <= 1e-8) return w2;
        } catch (const NotPositiveDefinite&) {
        }
      }
      if (deficient_columns(v, p).empty()) {
        Matrix w = householder_b(v, p);
        if (ortho_error(w, p) <= 1e-8) return w;
      }
    }
    if (attempt >= retry_limit)
      throw NotPositiveDefinite("block stays rank deficient after " + std::to_string(retry_limit) + " retries", 0);
    if (retries) ++*retries;
    auto bad = zero.empty() ? deficient_columns(v, p) : zero;
    if (bad.empty()) bad.push_back(v.cols() - 1);  // ill-conditioned but full rank: refresh one column
    randomize_columns(v, bad, rng);
  }
}

RitzPairs rayleigh_ritz(const MatrixPencil& p, const Matrix& v) {
  if (v.rows() != p.order()) throw DimensionMismatch("rayleigh_ritz: block rows differ from pencil order");
  Matrix ah = v.transpose() * p.apply_a(v);
  Matrix bh = v.transpose() * p.apply_b(v);
  ah = 0.5 * (ah + ah.transpose()).eval();
  bh = 0.5 * (bh + bh.transpose()).eval();
  auto r = dense_gen_eig(ah, bh);
  return {std::move(r.values), v * r.vectors};
}

Matrix seed_block(const Matrix* previous, Index k, Index n, std::mt19937_64& rng) {
  if (k < 1 || k > n) throw InputError("probe basis dimension must lie in [1, N]");
  Matrix v(n, k);
  Index c = 0;
  if (previous && previous->cols() > 0) {
    if (previous->rows() != n) throw DimensionMismatch("seed_block: previous vectors have wrong row count");
    c = std::min(k, previous->cols());
    v.leftCols(c) = previous->leftCols(c);
  }
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Index j = c; j < k; ++j)
    for (Index i = 0; i < n; ++i) v(i, j) = nd(rng);
  return v;
}

// Ritz pairs of (A - sigma B)^{-1} B on span(V), given B V and
// Y = (A - sigma B)^{-1} B V.
// Directions mixing eigenvalues on both sides of sigma get theta near zero
// instead of a Rayleigh quotient near sigma, so they cannot pollute the
// pairs closest to the shift. Vectors are the images Y c, B-orthonormalized
// in order of decreasing |theta|; values are their Rayleigh quotients.
RitzPairs shift_invert_extract(const MatrixPencil& p, const Matrix& bv, const Matrix& y,
                               std::mt19937_64& rng, int retry_limit, int* retries) {
  Matrix h = bv.transpose() * y;
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success) throw Error("shift-invert extraction: eigensolver did not converge");
  const Index k = h.rows();
  std::vector<Index> order(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) order[static_cast<std::size_t>(j)] = j;
  const Vector& theta = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return std::abs(theta(a)) > std::abs(theta(b)); });
  Matrix c(k, k);
  for (Index j = 0; j < k; ++j) c.col(j) = es.eigenvectors().col(order[static_cast<std::size_t>(j)]);
  Matrix w = b_orthonormalize(y * c, p, rng, retry_limit, retries);
  const Matrix aw = p.apply_a(w);
  Vector q(k);
  for (Index j = 0; j < k; ++j) q(j) = w.col(j).dot(aw.col(j));
  std::vector<Index> asc(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) asc[static_cast<std::size_t>(j)] = j;
  std::stable_sort(asc.begin(), asc.end(), [&](Index a, Index b) { return q(a) < q(b); });
  RitzPairs out{Vector(k), Matrix(w.rows(), k)};
  for (Index j = 0; j < k; ++j) {
    out.values(j) = q(asc[static_cast<std::size_t>(j)]);
    out.vectors.col(j) = w.col(asc[static_cast<std::size_t>(j)]);
  }
  return out;
}

SpectralProbe si_subspace_iteration(const MatrixPencil& p, double sigma, Matrix v0, const ProbeConfig& cfg,
                                    int probe_id, std::mt19937_64& rng, double window_width) {
  const Index n = p.order();
  if (v0.rows() != n) throw DimensionMismatch("subspace iteration: start block rows differ from pencil order");
  if (v0.cols() < 1 || v0.cols() > n) throw InputError("probe basis dimension must lie in [1, N]");
  if (cfg.subspace_iters < 1) throw InputError("subspace iterations must be at least 1");

  SpectralProbe out;
  out.probe_id = probe_id;
  Matrix v = b_orthonormalize(std::move(v0), p, rng, cfg.ortho_retry_limit, &out.stats.ortho_retries);

  LdltFactorization f;
  double s = sigma;
  for (int attempt = 0;; ++attempt) {
    f = factor_ldlt(p.shifted(s));
    ++out.stats.factorizations;
    if (!f.singular()) break;
    if (attempt >= cfg.max_shift_perturbations)
      throw SingularPivot("shift " + std::to_string(sigma) + " stays singular after " +
                          std::to_string(cfg.max_shift_perturbations) + " perturbations");
    s += cfg.shift_perturb_scale * std::max(window_width, 1e-300);
    ++out.stats.shift_perturbations;
  }
  out.sigma = s;
  out.inertia_neg = f.inertia().n_neg;

  for (int it = 0; it < cfg.subspace_iters; ++it) {
    const Matrix bv = p.apply_b(v);
    Matrix y = solve_ldlt(f, bv);
    ++out.stats.solves;
    out.iteration_count = it + 1;
    const bool last = it + 1 == cfg.subspace_iters;
    if (last || cfg.record_history || cfg.early_exit_tol > 0.0) {
      auto rr = shift_invert_extract(p, bv, y, rng, cfg.ortho_retry_limit, &out.stats.ortho_retries);
      const Vector res = residual_norms(p, rr.vectors, rr.values);
      const double worst = res.size() ? res.maxCoeff() : 0.0;
      if (cfg.record_history) out.residual_history.push_back(worst);
      if (last || (cfg.early_exit_tol > 0.0 && worst < cfg.early_exit_tol)) {
        out.ritz_values = std::move(rr.values);
        out.ritz_vectors = std::move(rr.vectors);
        out.residual_norms = res;
        return out;
      }
    }
    v = b_orthonormalize(std::move(y), p, rng, cfg.ortho_retry_limit, &out.stats.ortho_retries);
  }
  return out;  // not reached: subspace_iters >= 1
}

}  // namespace specslice
