#pragma once

// Independent reference computations and hand-rolled random generators
// shared by the test binaries.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "specslice/linalg.hpp"

namespace oracle {

using specslice::Index;
using specslice::Matrix;
using specslice::Vector;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  Matrix gaussian(Index r, Index c) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = normal();
    return m;
  }
  Matrix symmetric(Index n) {
    const Matrix g = gaussian(n, n);
    return 0.5 * (g + g.transpose());
  }
  Matrix orthogonal(Index n) {
    Eigen::HouseholderQR<Matrix> qr(gaussian(n, n));
    return qr.householderQ();
  }
  // SPD with condition number at most `cond`.
  Matrix spd(Index n, double cond) {
    const Matrix q = orthogonal(n);
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = uniform(1.0, cond);
    d(0) = 1.0;
    Matrix m = q * d.asDiagonal() * q.transpose();
    return 0.5 * (m + m.transpose());
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Generalized eigenvalues via Eigen's own generalized solver: a code path
// separate from the library's reduction.
inline Vector gen_eigenvalues(const Matrix& a, const Matrix& b) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(a, b, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline Vector eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline Index count_open(const Vector& vals, double lo, double hi) {
  Index c = 0;
  for (Index i = 0; i < vals.size(); ++i) c += vals(i) > lo && vals(i) < hi;
  return c;
}

inline Index count_below(const Vector& vals, double x) {
  Index c = 0;
  for (Index i = 0; i < vals.size(); ++i) c += vals(i) < x;
  return c;
}

inline double min_distance(const Vector& vals, double x) {
  double d = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < vals.size(); ++i) d = std::min(d, std::abs(vals(i) - x));
  return d;
}

// Greedy matching of sorted `got` to distinct entries of sorted `want`
// within tol. Returns the number of unmatched entries of `got`.
inline Index unmatched(const std::vector<double>& got, const Vector& want, double tol) {
  std::vector<bool> used(static_cast<std::size_t>(want.size()), false);
  Index bad = 0;
  for (double g : got) {
    Index best = -1;
    double bd = tol;
    for (Index i = 0; i < want.size(); ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double d = std::abs(want(i) - g);
      if (d <= bd) {
        bd = d;
        best = i;
      }
    }
    if (best < 0) {
      ++bad;
    } else {
      used[static_cast<std::size_t>(best)] = true;
    }
  }
  return bad;
}

}  // namespace oracle
