#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "specslice/linalg.hpp"

namespace specslice {

/// Symmetric A and SPD B of equal order. The Cholesky factor of B is
/// computed once at construction and shared by every consumer.
class MatrixPencil {
 public:
  MatrixPencil(SymMatrix a, SymMatrix b);

  const SymMatrix& a() const noexcept { return a_; }
  const SymMatrix& b() const noexcept { return b_; }
  Index order() const noexcept { return a_.order(); }
  bool b_is_identity() const noexcept { return b_identity_; }
  /// Lower factor L of B = L L^T.
  const Matrix& b_cholesky() const noexcept { return b_chol_; }

  Matrix apply_a(const Matrix& x) const;
  Matrix apply_b(const Matrix& x) const;
  /// B^{-1} x
  Matrix solve_b(const Matrix& x) const;
  SymMatrix shifted(double sigma) const { return specslice::shifted(a_, b_, sigma); }

 private:
  SymMatrix a_;
  SymMatrix b_;
  Matrix b_chol_;
  bool b_identity_ = false;
};

/// A fixed B with an indexed source of A matrices.
class PencilSequence {
 public:
  using Supplier = std::function<SymMatrix(std::size_t)>;

  PencilSequence(SymMatrix b, Supplier a_supplier, std::optional<std::size_t> declared_length);
  /// A length-1 sequence.
  static PencilSequence fixed(const MatrixPencil& p);

  std::optional<std::size_t> declared_length() const noexcept { return length_; }
  bool has(std::size_t i) const noexcept { return !length_ || i < *length_; }
  MatrixPencil pencil(std::size_t i) const;
  const SymMatrix& b() const noexcept { return *b_; }

 private:
  std::shared_ptr<const SymMatrix> b_;
  Supplier a_supplier_;
  std::optional<std::size_t> length_;
};

struct ClusterSpec {
  double center = 0.0;
  double half_width = 0.0;
  Index count = 1;
};

enum class BMode { identity, random_spd };

struct SyntheticSpectrumSpec {
  std::vector<ClusterSpec> clusters;
  double perturbation_amplitude = 0.0;
  double decay = 0.5;
  std::optional<std::size_t> jump_at;
  double jump_amplitude = 0.0;
  std::size_t jump_cluster = 0;
  std::uint64_t basis_rotation_seed = 0;
  BMode b_mode = BMode::identity;
  double condition_target = 10.0;
};

struct SyntheticPencil {
  MatrixPencil pencil;
  Vector true_eigenvalues;  ///< ascending
};

struct SyntheticSequence {
  PencilSequence sequence;
  std::vector<Vector> true_spectra;  ///< ascending, one per iteration
  std::vector<Vector> cluster_means;  ///< per iteration, per cluster
};

/// Throws InputError for overlapping clusters or counts exceeding n.
SyntheticPencil synth_pencil(const SyntheticSpectrumSpec& spec, Index n, std::uint64_t seed);
SyntheticSequence synth_sequence(const SyntheticSpectrumSpec& spec, Index n, std::size_t n_iters,
                                 std::uint64_t seed);

/// Column i holds ||A x_i - lambda_i B x_i||_2.
Vector residual_norms(const MatrixPencil& p, const Matrix& x, const Vector& lambda);

// Matrix Market -------------------------------------------------------------

enum class MarketFormat { coordinate, array };

SymMatrix read_matrix_market(std::istream& in);
SymMatrix load_matrix_market(const std::filesystem::path& path);
void write_matrix_market(std::ostream& out, const SymMatrix& m, MarketFormat format);
void save_matrix_market(const std::filesystem::path& path, const SymMatrix& m, MarketFormat format);

// Sequence manifest (JSON) ----------------------------------------------------

/// Either explicit files or a synthetic generator description.
struct SequenceManifest {
  std::optional<std::filesystem::path> b_path;  ///< empty means B = I
  std::vector<std::filesystem::path> a_paths;
  std::optional<SyntheticSpectrumSpec> synthetic;
  Index n = 0;
  std::size_t iters = 1;
  std::uint64_t seed = 0;
};

SyntheticSpectrumSpec parse_spectrum_spec(const std::string& json_text);
std::string spectrum_spec_to_json(const SyntheticSpectrumSpec& spec);
/// Relative paths are resolved against the manifest's directory.
SequenceManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const SequenceManifest& manifest);
PencilSequence open_sequence(const SequenceManifest& manifest);

}  // namespace specslice
