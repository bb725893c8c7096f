#include "specslice/pencil.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <string>

namespace specslice {

MatrixPencil::MatrixPencil(SymMatrix a, SymMatrix b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.order() != b_.order())
    throw DimensionMismatch("pencil: A has order " + std::to_string(a_.order()) + ", B has order " +
                            std::to_string(b_.order()));
  if (a_.order() < 1) throw DimensionMismatch("pencil: order must be at least 1");
  b_identity_ = b_.dense().isIdentity(0.0);
  b_chol_ = b_identity_ ? Matrix::Identity(b_.order(), b_.order()) : cholesky(b_);
}

Matrix MatrixPencil::apply_a(const Matrix& x) const {
  if (x.rows() != order()) throw DimensionMismatch("apply_a: row count differs from pencil order");
  return a_.dense() * x;
}

Matrix MatrixPencil::apply_b(const Matrix& x) const {
  if (x.rows() != order()) throw DimensionMismatch("apply_b: row count differs from pencil order");
  if (b_identity_) return x;
  return b_.dense() * x;
}

Matrix MatrixPencil::solve_b(const Matrix& x) const {
  if (x.rows() != order()) throw DimensionMismatch("solve_b: row count differs from pencil order");
  if (b_identity_) return x;
  Matrix y = b_chol_.triangularView<Eigen::Lower>().solve(x);
  b_chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
  return y;
}

PencilSequence::PencilSequence(SymMatrix b, Supplier a_supplier, std::optional<std::size_t> declared_length)
    : b_(std::make_shared<const SymMatrix>(std::move(b))),
      a_supplier_(std::move(a_supplier)),
      length_(declared_length) {
  if (length_ && *length_ == 0) throw InputError("pencil sequence must contain at least one matrix");
}

PencilSequence PencilSequence::fixed(const MatrixPencil& p) {
  auto a = std::make_shared<const SymMatrix>(p.a());
  return PencilSequence(p.b(), [a](std::size_t) { return *a; }, 1);
}

MatrixPencil PencilSequence::pencil(std::size_t i) const {
  if (!has(i)) throw InputError("pencil index " + std::to_string(i) + " past end of sequence");
  SymMatrix a = a_supplier_(i);
  if (a.order() != b_->order())
    throw DimensionMismatch("A(" + std::to_string(i) + ") has order " + std::to_string(a.order()) +
                            ", B has order " + std::to_string(b_->order()));
  return MatrixPencil(std::move(a), *b_);
}

Vector residual_norms(const MatrixPencil& p, const Matrix& x, const Vector& lambda) {
  if (x.rows() != p.order()) throw DimensionMismatch("residual_norms: X rows differ from pencil order");
  if (x.cols() != lambda.size()) throw DimensionMismatch("residual_norms: X columns differ from value count");
  if (x.cols() == 0) return Vector(0);
  const Matrix r = p.apply_a(x) - p.apply_b(x) * lambda.asDiagonal();
  return r.colwise().norm().transpose();
}

// ---------------------------------------------------------------------------
// Synthetic spectra

namespace {

std::mt19937_64 make_rng(std::uint64_t a, std::uint64_t b, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = nd(rng);
  return g;
}

Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, n, rng));
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

void check_spec(const SyntheticSpectrumSpec& spec, Index n) {
  if (n < 1) throw InputError("synthetic order must be positive");
  Index total = 0;
  std::vector<ClusterSpec> sorted = spec.clusters;
  std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) { return x.center < y.center; });
  for (std::size_t c = 0; c < sorted.size(); ++c) {
    if (sorted[c].count < 1) throw InputError("cluster count must be positive");
    if (sorted[c].half_width < 0.0) throw InputError("cluster half_width must be nonnegative");
    total += sorted[c].count;
    if (c > 0 && sorted[c - 1].center + sorted[c - 1].half_width > sorted[c].center - sorted[c].half_width)
      throw InputError("synthetic clusters overlap near " + std::to_string(sorted[c].center));
  }
  if (total > n)
    throw InputError("cluster counts (" + std::to_string(total) + ") exceed order " + std::to_string(n));
  if (spec.perturbation_amplitude < 0.0) throw InputError("perturbation_amplitude must be nonnegative");
  if (spec.jump_at && spec.jump_cluster >= spec.clusters.size())
    throw InputError("jump_cluster does not name a cluster");
  if (spec.b_mode == BMode::random_spd && !(spec.condition_target >= 1.0))
    throw InputError("condition_target must be at least 1");
}

// Everything a sequence needs, drawn once.
struct Generator {
  Vector base;                  // final eigenvalues (unsorted, fixed order)
  std::vector<int> cluster_of;  // -1 for filler values
  Vector delta;
  SymMatrix b;
  Matrix l;  // Cholesky factor of B
  Matrix q;  // base eigenvector rotation
  // exp(tS) = W diag(exp(-i t mu)) W^*, kept as W and W^* Q.
  Eigen::MatrixXcd w;
  Eigen::MatrixXcd wq;
  Vector mu;
  bool rotates = false;
};

Generator make_generator(const SyntheticSpectrumSpec& spec, Index n, std::uint64_t seed) {
  check_spec(spec, n);
  Generator g;
  auto value_rng = make_rng(seed, 0, 1);
  g.base.resize(n);
  g.cluster_of.assign(static_cast<std::size_t>(n), -1);
  Index pos = 0;
  double top = 0.0, bottom = 0.0;
  for (std::size_t c = 0; c < spec.clusters.size(); ++c) {
    const auto& cl = spec.clusters[c];
    std::uniform_real_distribution<double> ud(cl.center - cl.half_width, cl.center + cl.half_width);
    for (Index i = 0; i < cl.count; ++i, ++pos) {
      g.base(pos) = cl.half_width > 0.0 ? ud(value_rng) : cl.center;
      g.cluster_of[static_cast<std::size_t>(pos)] = static_cast<int>(c);
    }
    top = c == 0 ? cl.center + cl.half_width : std::max(top, cl.center + cl.half_width);
    bottom = c == 0 ? cl.center - cl.half_width : std::min(bottom, cl.center - cl.half_width);
  }
  const Index rem = n - pos;
  const double span = std::max(top - bottom, 1.0);
  for (Index r = 0; r < rem; ++r, ++pos) g.base(pos) = top + span * static_cast<double>(r + 1) / static_cast<double>(rem);

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  g.delta.resize(n);
  for (Index i = 0; i < n; ++i) g.delta(i) = spec.perturbation_amplitude * unit(value_rng);

  auto basis_rng = make_rng(seed, spec.basis_rotation_seed, 2);
  g.q = random_orthogonal(n, basis_rng);
  if (spec.b_mode == BMode::random_spd) {
    const Matrix wmat = gaussian_matrix(n, n, basis_rng);
    const Matrix wwt = wmat * wmat.transpose();
    // Frobenius norm bounds the 2-norm, so cond(B) <= condition_target.
    g.b = SymMatrix::from_lower(Matrix::Identity(n, n) + (spec.condition_target - 1.0) * wwt / wwt.norm());
    g.l = cholesky(g.b);
  } else {
    g.b = SymMatrix::identity(n);
    g.l = Matrix::Identity(n, n);
  }

  if (spec.perturbation_amplitude > 0.0) {
    const Matrix gm = gaussian_matrix(n, n, basis_rng);
    const Matrix s = spec.perturbation_amplitude * (gm - gm.transpose()) / (2.0 * std::sqrt(static_cast<double>(n)));
    // iS is Hermitian.
    const Eigen::MatrixXcd is = std::complex<double>(0.0, 1.0) * s.cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(is);
    g.w = es.eigenvectors();
    g.mu = es.eigenvalues();
    g.wq = g.w.adjoint() * g.q.cast<std::complex<double>>();
    g.rotates = true;
  }
  return g;
}

Vector values_at(const Generator& g, const SyntheticSpectrumSpec& spec, std::size_t i) {
  Vector lam = g.base + std::pow(spec.decay, static_cast<double>(i)) * g.delta;
  if (spec.jump_at && i < *spec.jump_at) {
    for (Index j = 0; j < lam.size(); ++j)
      if (g.cluster_of[static_cast<std::size_t>(j)] == static_cast<int>(spec.jump_cluster))
        lam(j) += spec.jump_amplitude;
  }
  return lam;
}

Matrix basis_at(const Generator& g, double t) {
  if (!g.rotates || t == 0.0) return g.q;
  Eigen::VectorXcd phase(g.mu.size());
  for (Index j = 0; j < g.mu.size(); ++j) phase(j) = std::exp(std::complex<double>(0.0, -t * g.mu(j)));
  return (g.w * (phase.asDiagonal() * g.wq)).real();
}

SymMatrix assemble_a(const Generator& g, const Matrix& q, const Vector& lam) {
  const Matrix lq = g.l.triangularView<Eigen::Lower>() * q;
  return SymMatrix::from_lower(lq * lam.asDiagonal() * lq.transpose());
}

Vector sorted(Vector v) {
  std::sort(v.data(), v.data() + v.size());
  return v;
}

}  // namespace

SyntheticPencil synth_pencil(const SyntheticSpectrumSpec& spec, Index n, std::uint64_t seed) {
  const Generator g = make_generator(spec, n, seed);
  return {MatrixPencil(assemble_a(g, g.q, g.base), g.b), sorted(g.base)};
}

SyntheticSequence synth_sequence(const SyntheticSpectrumSpec& spec, Index n, std::size_t n_iters,
                                 std::uint64_t seed) {
  if (n_iters < 1) throw InputError("synthetic sequence needs at least one iteration");
  const Generator g = make_generator(spec, n, seed);
  auto mats = std::make_shared<std::vector<SymMatrix>>();
  std::vector<Vector> spectra;
  std::vector<Vector> means;
  for (std::size_t i = 0; i < n_iters; ++i) {
    const Vector lam = values_at(g, spec, i);
    const Matrix q = basis_at(g, std::pow(spec.decay, static_cast<double>(i)));
    mats->push_back(assemble_a(g, q, lam));
    spectra.push_back(sorted(lam));
    Vector m = Vector::Zero(static_cast<Index>(spec.clusters.size()));
    for (Index j = 0; j < lam.size(); ++j) {
      const int c = g.cluster_of[static_cast<std::size_t>(j)];
      if (c >= 0) m(c) += lam(j) / static_cast<double>(spec.clusters[static_cast<std::size_t>(c)].count);
    }
    means.push_back(m);
  }
  PencilSequence seq(g.b, [mats](std::size_t i) { return (*mats)[i]; }, n_iters);
  return {std::move(seq), std::move(spectra), std::move(means)};
}

}  // namespace specslice
