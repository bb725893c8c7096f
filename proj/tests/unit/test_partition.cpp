#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "specslice/partition.hpp"

using namespace specslice;

namespace {

DosModel gaussians(std::vector<double> th, std::vector<double> w, double nu, Index n) {
  const Index m = static_cast<Index>(th.size());
  Vector t(m), ww(m);
  for (Index j = 0; j < m; ++j) {
    t(j) = th[static_cast<std::size_t>(j)];
    ww(j) = w[static_cast<std::size_t>(j)];
  }
  ww /= ww.sum();
  return DosModel(n, t, ww, Vector::Constant(m, nu), t(0), t(m - 1), m, 0);
}

MatrixPencil diag_pencil(const Vector& d) { return MatrixPencil(SymMatrix::diagonal(d), SymMatrix::identity(d.size())); }

SyntheticSpectrumSpec silane_like() {
  SyntheticSpectrumSpec s;
  s.clusters = {{-20.57, 0.02, 37}, {-6.0, 0.05, 6}, {-0.645, 0.255, 141}};
  return s;
}

}  // namespace

TEST_CASE("uniform CDOS partition of a uniform spectrum") {
  const Vector ev = Vector::LinSpaced(100, 0.0, 99.0);
  const auto p = diag_pencil(ev);
  // One start vector gives chi-square weights per eigenvalue; averaging
  // 40 starts tightens the per-interval count.
  const auto m = estimate_dos(p, 100, 3, WidthRule::max_gap, 40);
  const auto iv = cdos_uniform_partition(m, -0.5, 99.5, 10.0);
  REQUIRE(iv.size() == 10);
  for (std::size_t j = 0; j < iv.size(); ++j) {
    CHECK(std::abs(iv[j].est.gamma - 10.0) <= 1.0);
    CHECK(std::abs(double(oracle::count_open(ev, iv[j].lower, iv[j].upper)) - 10.0) <= 3.0);
    if (j > 0) CHECK(iv[j].lower == iv[j - 1].upper);
  }
  CHECK(iv.front().lower == -0.5);
  CHECK(iv.back().upper == 99.5);
}

TEST_CASE("K equal to the window count gives the window itself") {
  const auto m = gaussians({0, 1, 2}, {1, 1, 1}, 0.2, 30);
  const double g = count(m, -1, 3).gamma;
  const auto iv = cdos_uniform_partition(m, -1, 3, g);
  REQUIRE(iv.size() == 1);
  CHECK(iv[0].lower == -1);
  CHECK(iv[0].upper == 3);
  CHECK_THROWS_AS(cdos_uniform_partition(m, -1, 3, g + 1), InputError);
  CHECK_THROWS_AS(cdos_uniform_partition(m, -1, 3, 0.5), InputError);
}

TEST_CASE("dos_cluster on one and two Gaussians") {
  const auto one = gaussians({1.0}, {1}, 0.3, 10);
  const auto r1 = dos_cluster(one, -2, 4, 100);
  REQUIRE(r1.size() == 1);
  CHECK(r1[0].lower == -2);
  CHECK(r1[0].upper == 4);

  const auto two = gaussians({0.0, 10.0}, {1, 1}, 1.0, 10);
  const auto r2 = dos_cluster(two, -5, 15, 401);
  REQUIRE(r2.size() == 2);
  CHECK(r2[0].upper == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(r2[1].lower == r2[0].upper);
  CHECK_THROWS_AS(dos_cluster(two, -5, 15, 2), InputError);
}

TEST_CASE("dos_cluster drops intervals without Ritz values") {
  // Every surviving interval must contain a Ritz value.
  const auto m = gaussians({0.0, 4.0, 8.0}, {1, 1, 1}, 0.5, 30);
  const auto iv = dos_cluster(m, -2, 10, 601);
  CHECK(iv.size() == 3);
  for (const auto& x : iv) {
    bool any = false;
    for (Index j = 0; j < m.size(); ++j) any |= m.thetas()(j) >= x.lower && m.thetas()(j) <= x.upper;
    CHECK(any);
  }
}

TEST_CASE("finer grid reveals a hidden sub-cluster") {
  // A narrow peak next to a broad one: visible only once the grid resolves it.
  const auto m = gaussians({-6.3, -6.0}, {20, 1}, 0.02, 100);
  const auto coarse = dos_cluster(m, -10, 0, 21);
  const auto fine = dos_cluster(m, -10, 0, 2001);
  CHECK(coarse.size() < fine.size());
  CHECK(fine.size() == 2);
}

TEST_CASE("refinement merges a light interval into its lighter neighbor") {
  const auto m = gaussians({0.0, 5.0, 10.0}, {45, 1, 54}, 0.5, 100);
  const auto r = refine_clusters(m, -3, 13, RefineConfig{2.0, 50.0, 20, 1601});
  REQUIRE(r.intervals.size() == 2);
  CHECK(!r.capped);
  CHECK(r.intervals[0].lower == -3);
  CHECK(r.intervals[0].upper > 5.0);  // the light middle joined the left one
  CHECK(r.intervals[0].est.gamma == doctest::Approx(46.0).epsilon(0.02));
}

TEST_CASE("isolated light cluster with no touching neighbor is kept") {
  // The light right-hand peak sits far from the heavy one.
  const auto m = gaussians({0.0, 20.0}, {99, 1}, 0.3, 100);
  const auto r = refine_clusters(m, -2, 22, RefineConfig{2.0, 50.0, 20, 2001});
  CHECK(r.intervals.size() >= 1);
  // The heavy cluster exceeds the refine threshold but is a single peak.
  CHECK(!r.capped);
}

TEST_CASE("smooth band above the refine threshold is split") {
  const Vector ev = Vector::LinSpaced(200, 0.0, 1.0);
  const auto m = estimate_dos(diag_pencil(ev), 100, 4);
  const auto r = refine_clusters(m, -0.1, 1.1);
  CHECK(r.rounds < 20);
  double total = 0;
  for (const auto& x : r.intervals) total += x.est.gamma;
  CHECK(total == doctest::Approx(count(m, -0.1, 1.1).gamma).epsilon(1e-6));
}

TEST_CASE("enforce_shift_count splits and keeps") {
  const auto m = gaussians({0, 1, 2, 3, 4}, {1, 1, 1, 1, 1}, 0.2, 50);
  std::vector<SpectralInterval> three = {{-1, 0.5, count(m, -1, 0.5)}, {0.5, 2.5, count(m, 0.5, 2.5)},
                                         {2.5, 5, count(m, 2.5, 5)}};
  const auto r = enforce_shift_count(three, 5, m);
  REQUIRE(r.intervals.size() == 5);
  for (std::size_t j = 1; j < 5; ++j) CHECK(r.intervals[j].lower == r.intervals[j - 1].upper);
  // The heaviest interval (middle, 20) is halved first.
  CHECK(r.intervals[1].est.gamma == doctest::Approx(10.0).epsilon(1e-4));

  std::vector<SpectralInterval> five;
  for (int j = 0; j < 5; ++j) five.push_back({j - 0.5, j + 0.5, count(m, j - 0.5, j + 0.5)});
  const auto same = enforce_shift_count(five, 5, m);
  REQUIRE(same.intervals.size() == 5);
  for (std::size_t j = 0; j < 5; ++j) CHECK(same.intervals[j].lower == five[j].lower);
}

TEST_CASE("enforce_shift_count merges the lightest into its lighter neighbor") {
  const auto m = gaussians({0, 1, 2, 3}, {10, 1, 3, 10}, 0.1, 24);
  std::vector<SpectralInterval> iv;
  for (int j = 0; j < 4; ++j) iv.push_back({j - 0.5, j + 0.5, count(m, j - 0.5, j + 0.5)});
  const auto r = enforce_shift_count(iv, 3, m);
  REQUIRE(r.intervals.size() == 3);
  CHECK(!r.forced_merge);
  CHECK(r.intervals[1].lower == 0.5);
  CHECK(r.intervals[1].upper == 2.5);
}

TEST_CASE("enforce_shift_count flags a merge across the gap guard") {
  const auto m = gaussians({0, 100}, {1, 1}, 0.1, 10);
  std::vector<SpectralInterval> iv = {{-1, 1, count(m, -1, 1)}, {99, 101, count(m, 99, 101)}};
  const auto r = enforce_shift_count(iv, 1, m);
  REQUIRE(r.intervals.size() == 1);
  CHECK(r.forced_merge);
}

TEST_CASE("place_shifts examples") {
  const auto m = gaussians({1.3}, {1}, 1e-3, 10);
  std::vector<SpectralInterval> iv = {{0, 2, count(m, 0, 2)}};
  CHECK(place_shifts(iv, m, ShiftScheme::midpoint, -1, 3).shifts[0] == 1.0);
  CHECK(place_shifts(iv, m, ShiftScheme::expectation, -1, 3).shifts[0] == doctest::Approx(1.3).epsilon(1e-6));
  // Equal midpoints are separated.
  std::vector<SpectralInterval> dup = {{0, 2, {}}, {0, 2, {}}};
  const auto s = place_shifts(dup, m, ShiftScheme::midpoint, -1, 3);
  CHECK(s.shifts[1] > s.shifts[0]);
  CHECK_NOTHROW(check_shift_set(s));
}

TEST_CASE("isolated cluster of the silane-like analog gets its own shift") {
  const auto sp = synth_pencil(silane_like(), 300, 7);
  const auto m = estimate_dos(sp.pencil, 100, 11);
  PartitionOptions opt;
  opt.shift_scheme = ShiftScheme::expectation;
  const auto rep = partition_window(m, -21.0, -0.3, 4, opt);
  REQUIRE(rep.shifts.size() == 4);
  bool inside = false;
  for (double s : rep.shifts.shifts) inside |= s > -20.59 && s < -20.55;
  MESSAGE(rep.text());
  CHECK(inside);
  CHECK(!rep.text().empty());
}

TEST_CASE("property: pipeline always yields n_s ascending shifts inside the window") {
  oracle::Gen g(31);
  for (int t = 0; t < 25; ++t) {
    const Index n = g.integer(40, 120);
    const Matrix a = g.symmetric(n);
    const MatrixPencil p(SymMatrix::from_lower(a), SymMatrix::identity(n));
    const auto m = estimate_dos(p, std::min<Index>(n, 40), t);
    const double lo = g.uniform(-8, 0), hi = lo + g.uniform(0.5, 10);
    const Index ns = g.integer(1, 16);
    PartitionOptions opt;
    opt.shift_scheme = t % 2 ? ShiftScheme::midpoint : ShiftScheme::expectation;
    opt.scheme = t % 3 ? PartitionScheme::clusters : PartitionScheme::uniform_cdos;
    const auto rep = partition_window(m, lo, hi, ns, opt);
    CHECK(static_cast<Index>(rep.shifts.size()) == ns);
    CHECK_NOTHROW(check_shift_set(rep.shifts));
    // Determinism
    const auto again = partition_window(m, lo, hi, ns, opt);
    CHECK(again.shifts.shifts == rep.shifts.shifts);
  }
}

TEST_CASE("cluster capture on a well-separated cluster") {
  SyntheticSpectrumSpec s;
  s.clusters = {{-10.0, 0.05, 20}, {0.0, 2.0, 80}};
  const auto sp = synth_pencil(s, 150, 3);
  const auto m = estimate_dos(sp.pencil, 60, 2);
  const auto rep = partition_window(m, -12, 2.5, 6);
  bool captured = false;
  for (std::size_t j = 0; j < rep.intervals.size(); ++j) {
    const auto& iv = rep.intervals[j];
    if (iv.lower <= -10.05 && iv.upper >= -9.95) captured |= rep.shifts.shifts[j] > iv.lower && rep.shifts.shifts[j] < iv.upper;
  }
  CHECK(captured);
}
