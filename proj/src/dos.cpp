#include "specslice/dos.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

namespace specslice {

LanczosResult lanczos_b_orthogonal(const MatrixPencil& p, Index k, std::uint64_t seed) {
  const Index n = p.order();
  if (k < 1 || k > n)
    throw InputError("Lanczos steps must lie in [1, " + std::to_string(n) + "], got " + std::to_string(k));

  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(ss);
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector q(n);
  for (Index i = 0; i < n; ++i) q(i) = nd(rng);

  Matrix qs(n, k), bqs(n, k);
  Vector alpha(k), beta(k);
  Vector bq = p.apply_b(q);
  double nrm = std::sqrt(q.dot(bq));
  qs.col(0) = q / nrm;
  bqs.col(0) = bq / nrm;

  LanczosResult res;
  Index j = 0;
  for (; j < k; ++j) {
    const Vector aq = p.apply_a(qs.col(j));
    alpha(j) = qs.col(j).dot(aq);
    Vector w = p.solve_b(aq) - alpha(j) * qs.col(j);
    if (j > 0) w -= beta(j - 1) * qs.col(j - 1);
    // Full reorthogonalization in the B inner product, applied twice.
    for (int pass = 0; pass < 2; ++pass) {
      const Vector c = bqs.leftCols(j + 1).transpose() * w;
      w -= qs.leftCols(j + 1) * c;
    }
    if (j + 1 == k) break;
    const Vector bw = p.apply_b(w);
    const double b2 = w.dot(bw);
    const double scale = std::abs(alpha(j)) + (j > 0 ? beta(j - 1) : 0.0);
    if (!(b2 > 0.0) || std::sqrt(b2) <= 1e-12 * std::max(scale, 1e-300)) {
      res.breakdown = true;
      break;
    }
    beta(j) = std::sqrt(b2);
    qs.col(j + 1) = w / beta(j);
    bqs.col(j + 1) = bw / beta(j);
  }
  const Index m = j + 1;

  Eigen::SelfAdjointEigenSolver<Matrix> es;
  const Vector d = alpha.head(m);
  const Vector e = m > 1 ? Vector(beta.head(m - 1)) : Vector(0);
  if (m > 1) {
    es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
    res.thetas = es.eigenvalues();
    res.t_vectors = es.eigenvectors();
  } else {
    res.thetas = d;
    res.t_vectors = Matrix::Ones(1, 1);
  }
  res.first_components = res.t_vectors.row(0).transpose();
  res.steps = m;
  const Matrix gram = qs.leftCols(m).transpose() * bqs.leftCols(m);
  res.max_orthogonality_loss = (gram - Matrix::Identity(m, m)).cwiseAbs().maxCoeff();
  return res;
}

DosModel::DosModel(Index n, Vector thetas, Vector weights, Vector widths, double a, double b, Index steps,
                   std::uint64_t seed)
    : n_(n),
      thetas_(std::move(thetas)),
      weights_(std::move(weights)),
      widths_(std::move(widths)),
      a_(a),
      b_(b),
      steps_(steps),
      seed_(seed) {
  if (thetas_.size() < 1) throw InputError("DOS model needs at least one Ritz pair");
  if (weights_.size() != thetas_.size() || widths_.size() != thetas_.size())
    throw DimensionMismatch("DOS model triple arrays differ in length");
  for (Index j = 0; j < widths_.size(); ++j)
    if (!(widths_(j) > 0.0)) throw InputError("DOS widths must be positive");
  // Same summation order as cdos_eval so that Phi(+inf) == N exactly.
  weight_sum_ = 0.0;
  for (Index j = 0; j < weights_.size(); ++j) weight_sum_ += weights_(j);
}

namespace {

Vector gap_widths(const Vector& th, WidthRule rule, Index steps, double a, double b) {
  const Index m = th.size();
  const double cut = std::sqrt(2.0 * std::log(kWidthCutoff));
  Vector nu(m);
  if (m == 1) {
    double d = (b - a) / static_cast<double>(std::max<Index>(steps, 1));
    if (!(d > 0.0)) d = 1e-3 * std::max(std::abs(th(0)), 1.0);
    nu(0) = d / cut;
    return nu;
  }
  const double floor = 1e-3 * (th(m - 1) - th(0)) / static_cast<double>(std::max<Index>(steps, 1));
  for (Index j = 0; j < m; ++j) {
    double d;
    if (j == 0) {
      d = th(1) - th(0);
    } else if (j == m - 1) {
      d = th(m - 1) - th(m - 2);
    } else {
      const double gl = th(j) - th(j - 1), gr = th(j + 1) - th(j);
      d = rule == WidthRule::max_gap ? std::max(gl, gr) : 0.5 * (gl + gr);
    }
    d = std::max(d, floor);
    if (!(d > 0.0)) d = 1e-3 * std::max(std::abs(th(j)), 1.0);
    nu(j) = d / cut;
  }
  return nu;
}

}  // namespace

DosModel build_dos_model(const std::vector<LanczosResult>& runs, Index n, WidthRule rule, double a, double b,
                         std::uint64_t seed) {
  if (runs.empty()) throw InputError("DOS model needs at least one Lanczos run");
  struct Triple {
    double theta, w, nu;
  };
  std::vector<Triple> all;
  Index steps = 0;
  for (const auto& r : runs) {
    if (r.thetas.size() < 1) throw InputError("DOS model needs at least one Ritz pair");
    const Vector nu = gap_widths(r.thetas, rule, r.steps, a, b);
    const double z2 = r.first_components.squaredNorm();
    for (Index j = 0; j < r.thetas.size(); ++j) {
      const double z = r.first_components(j);
      all.push_back({r.thetas(j), z * z / z2 / static_cast<double>(runs.size()), nu(j)});
    }
    steps = std::max(steps, r.steps);
  }
  std::stable_sort(all.begin(), all.end(), [](const Triple& x, const Triple& y) { return x.theta < y.theta; });
  Vector th(static_cast<Index>(all.size())), w(th.size()), nu(th.size());
  for (Index j = 0; j < th.size(); ++j) {
    th(j) = all[static_cast<std::size_t>(j)].theta;
    w(j) = all[static_cast<std::size_t>(j)].w;
    nu(j) = all[static_cast<std::size_t>(j)].nu;
  }
  w /= w.sum();
  return DosModel(n, std::move(th), std::move(w), std::move(nu), a, b, steps, seed);
}

DosModel build_dos_model(const LanczosResult& run, Index n, WidthRule rule, double a, double b, std::uint64_t seed) {
  return build_dos_model(std::vector<LanczosResult>{run}, n, rule, a, b, seed);
}

DosModel estimate_dos(const MatrixPencil& p, Index steps, std::uint64_t seed, WidthRule rule, int n_vectors) {
  if (n_vectors < 1) throw InputError("n_vectors must be at least 1");
  std::vector<LanczosResult> runs;
  double a = std::numeric_limits<double>::infinity(), b = -a;
  for (int r = 0; r < n_vectors; ++r) {
    runs.push_back(lanczos_b_orthogonal(p, std::min(steps, p.order()), seed + static_cast<std::uint64_t>(r)));
    a = std::min(a, runs.back().thetas(0));
    b = std::max(b, runs.back().thetas(runs.back().thetas.size() - 1));
  }
  return build_dos_model(runs, p.order(), rule, a, b, seed);
}

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2 pi)

// Mass of a standard Gaussian (in kappa units, times 2) between two points,
// i.e. erf(ku) - erf(kl), computed without cancellation in the tails.
double erf_diff(double kl, double ku) {
  if (kl >= 0.0) return std::erfc(kl) - std::erfc(ku);
  if (ku <= 0.0) return std::erfc(-ku) - std::erfc(-kl);
  return std::erf(ku) - std::erf(kl);
}

}  // namespace

double dos_eval(const DosModel& m, double omega) {
  double s = 0.0;
  for (Index j = 0; j < m.size(); ++j) {
    const double k = (omega - m.thetas()(j)) / (m.widths()(j) * std::numbers::sqrt2);
    s += m.weights()(j) / m.widths()(j) * std::exp(-k * k);
  }
  return static_cast<double>(m.order()) * kInvSqrt2Pi * s / m.weight_sum();
}

double cdos_eval(const DosModel& m, double omega) {
  double s = 0.0;
  for (Index j = 0; j < m.size(); ++j) {
    const double k = (omega - m.thetas()(j)) / (m.widths()(j) * std::numbers::sqrt2);
    // erf(k) + 1 == erfc(-k), accurate in the lower tail.
    s += m.weights()(j) * std::erfc(-k) / 2.0;
  }
  return static_cast<double>(m.order()) * (s / m.weight_sum());
}

CountEstimate count(const DosModel& m, double a, double b) {
  if (a > b) throw InputError("count: lower bound exceeds upper bound");
  if (a == b) return {0.0, 0};
  double s = 0.0;
  if (std::isinf(a) && std::isinf(b)) {
    s = 2.0 * m.weight_sum();
  } else {
    for (Index j = 0; j < m.size(); ++j) {
      const double sc = m.widths()(j) * std::numbers::sqrt2;
      s += m.weights()(j) * erf_diff((a - m.thetas()(j)) / sc, (b - m.thetas()(j)) / sc);
    }
  }
  const double gamma = std::max(0.0, static_cast<double>(m.order()) * (s / 2.0) / m.weight_sum());
  return {gamma, static_cast<Index>(std::ceil(gamma))};
}

ShiftEstimate expected_shift(const DosModel& m, double l, double u) {
  if (l > u) throw InputError("expected_shift: lower bound exceeds upper bound");
  const double mid = 0.5 * (l + u);
  double mass = 0.0, first = 0.0;
  for (Index j = 0; j < m.size(); ++j) {
    const double th = m.thetas()(j), nu = m.widths()(j);
    const double sc = nu * std::numbers::sqrt2;
    const double kl = (l - th) / sc, ku = (u - th) / sc;
    const double dm = erf_diff(kl, ku) / 2.0;
    const double tail = nu * kInvSqrt2Pi * (std::exp(-ku * ku) - std::exp(-kl * kl));
    mass += m.weights()(j) * dm;
    first += m.weights()(j) * (th * dm - tail);
  }
  const double n = static_cast<double>(m.order()) / m.weight_sum();
  if (!(n * mass > kCountFloor)) return {mid, true};
  return {std::clamp(first / mass, l, u), false};
}

namespace {

void check_grid(double lo, double hi, Index npts) {
  if (npts < 2) throw InputError("DOS grid needs at least 2 points");
  if (!(lo < hi)) throw InputError("DOS grid needs lo < hi");
}

double grid_point(double lo, double hi, Index i, Index npts) {
  return i + 1 == npts ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(npts - 1);
}

}  // namespace

DosGrid evaluate_grid(const DosModel& m, double lo, double hi, Index npts) {
  check_grid(lo, hi, npts);
  DosGrid g{Vector(npts), Vector(npts), Vector(npts)};
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < npts; ++i) {
    const double w = grid_point(lo, hi, i, npts);
    g.omega(i) = w;
    g.dos(i) = dos_eval(m, w);
    g.cdos(i) = cdos_eval(m, w);
  }
  return g;
}

DosGrid evaluate_grid_reference(const DosModel& m, double lo, double hi, Index npts) {
  check_grid(lo, hi, npts);
  DosGrid g{Vector(npts), Vector(npts), Vector(npts)};
  for (Index i = 0; i < npts; ++i) {
    const double w = grid_point(lo, hi, i, npts);
    g.omega(i) = w;
    g.dos(i) = dos_eval(m, w);
    g.cdos(i) = cdos_eval(m, w);
  }
  return g;
}

void write_dos_csv(std::ostream& out, const DosGrid& g) {
  out << "omega,dos,cdos\n";
  char buf[128];
  for (Index i = 0; i < g.omega.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", g.omega(i), g.dos(i), g.cdos(i));
    out << buf;
  }
}

}  // namespace specslice
