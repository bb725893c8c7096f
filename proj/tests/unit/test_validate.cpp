#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracle.hpp"
#include "specslice/probe.hpp"
#include "specslice/validate.hpp"

using namespace specslice;

namespace {

RitzSummary summary(int id, double sigma, Index neg, std::vector<double> vals, std::vector<double> res = {}) {
  if (res.empty()) res.assign(vals.size(), 1e-14);
  return {id, sigma, neg, std::move(vals), std::move(res)};
}

RitzSummary summarize(const SpectralProbe& p) {
  RitzSummary s;
  s.probe_id = p.probe_id;
  s.sigma = p.sigma;
  s.inertia_neg = p.inertia_neg;
  s.values.assign(p.ritz_values.data(), p.ritz_values.data() + p.ritz_values.size());
  s.residuals.assign(p.residual_norms.data(), p.residual_norms.data() + p.residual_norms.size());
  return s;
}

Index neg_at(const MatrixPencil& p, double x) { return factor_ldlt(p.shifted(x)).inertia().n_neg; }

SpectralProbe run_probe(const MatrixPencil& p, int id, double sigma, Index k, int m, std::uint64_t seed, double width) {
  ProbeConfig c;
  c.basis_dim = k;
  c.subspace_iters = m;
  auto rng = probe_rng(seed, id, 0);
  Matrix v0 = seed_block(nullptr, k, p.order(), rng);
  return si_subspace_iteration(p, sigma, v0, c, id, rng, width);
}

std::vector<double> values_of(const std::vector<Candidate>& c) {
  std::vector<double> v;
  for (const auto& x : c) v.push_back(x.value);
  return v;
}

}  // namespace

TEST_CASE("candidates split at tau") {
  const auto l = summary(0, 1.0, 0, {0.7, 1.1, 1.4});
  const auto r = summary(1, 2.0, 4, {1.6, 1.9, 2.3});
  const auto sl = make_slices({l, r}, 0.0, 3.0, 0, 6);
  REQUIRE(sl.size() == 3);
  CHECK(sl[1].tau == 1.5);
  const auto c = select_candidates(&l, &r, sl[1]);
  CHECK(values_of(c) == std::vector<double>{1.1, 1.4, 1.6, 1.9});
  CHECK(c[0].source_probe == 0);
  CHECK(c[3].source_probe == 1);
}

TEST_CASE("a duplicate across probes is taken once, from the left") {
  const auto l = summary(0, 1.0, 0, {1.3});
  const auto r = summary(1, 2.0, 1, {1.3});
  const auto sl = make_slices({l, r}, 0.0, 3.0, 0, 1);
  const auto c = select_candidates(&l, &r, sl[1]);
  REQUIRE(c.size() == 1);
  CHECK(c[0].source_probe == 0);
  // A value exactly at tau also belongs to the left probe.
  const auto l2 = summary(0, 1.0, 0, {1.5});
  const auto r2 = summary(1, 2.0, 1, {1.5});
  const auto c2 = select_candidates(&l2, &r2, sl[1]);
  REQUIRE(c2.size() == 1);
  CHECK(c2[0].source_probe == 0);
}

TEST_CASE("end slices take everything from their single probe") {
  const auto p = summary(0, 1.0, 3, {0.2, 0.5, 0.9, 1.2});
  const auto sl = make_slices({p}, 0.0, 2.0, 0, 4);
  REQUIRE(sl.size() == 2);
  CHECK(values_of(select_candidates(nullptr, &p, sl[0])) == std::vector<double>{0.2, 0.5, 0.9});
  CHECK(values_of(select_candidates(&p, nullptr, sl[1])) == std::vector<double>{1.2});
  CHECK(!sl[0].left_probe);
  CHECK(!sl[1].right_probe);
}

TEST_CASE("make_slices rejects inconsistent shifts") {
  CHECK_THROWS_AS(make_slices({summary(0, 1.0, 0, {}), summary(1, 1.0, 0, {})}, 0, 2, 0, 0), InputError);
  CHECK_THROWS_AS(make_slices({summary(0, 3.0, 0, {})}, 0, 2, 0, 0), InputError);
  CHECK_THROWS_AS(make_slices({}, 0, 2, 0, 0), InputError);
}

TEST_CASE("exact_count examples") {
  CHECK(exact_count(7, 7) == 0);
  const MatrixPencil p(SymMatrix::diagonal(Vector::LinSpaced(10, 1, 10)), SymMatrix::identity(10));
  CHECK(exact_count(neg_at(p, 2.5), neg_at(p, 6.5)) == 4);
  CHECK_THROWS_AS(exact_count(5, 4), Error);
}

TEST_CASE("exact_count on random pencils matches the oracle") {
  oracle::Gen g(21);
  for (int t = 0; t < 10; ++t) {
    const MatrixPencil p(SymMatrix::from_lower(g.symmetric(80)), SymMatrix::from_lower(g.spd(80, 30)));
    const Vector ev = oracle::gen_eigenvalues(p.a().dense(), p.b().dense());
    const double lo = g.uniform(-3, 0), hi = lo + g.uniform(0.1, 3);
    CHECK(exact_count(neg_at(p, lo), neg_at(p, hi)) == oracle::count_open(ev, lo, hi));
  }
}

TEST_CASE("validate_slice cases") {
  std::vector<Candidate> five;
  for (int i = 0; i < 5; ++i) five.push_back({double(i), 1e-12, 0, i, 0.0});
  auto v = validate_slice(five, 5);
  CHECK(v.status == SliceStatus::validated);
  CHECK(v.validated.size() == 5);

  auto m = validate_slice({five.begin(), five.begin() + 3}, 5);
  CHECK(m.status == SliceStatus::missing);
  CHECK(m.missing == 2);

  // Residual ties go to the candidate nearer its shift.
  std::vector<Candidate> tie = {{1.0, 1e-9, 0, 0, 0.0}, {1.0, 1e-9, 1, 0, 2.0}, {1.9, 1e-9, 1, 1, 2.0}};
  auto p = validate_slice(tie, 2);
  CHECK(p.status == SliceStatus::pruned);
  REQUIRE(p.validated.size() == 2);
  CHECK(p.validated[0].source_probe == 0);
  CHECK(p.validated[1].value == 1.9);
}

TEST_CASE("pruning drops poorly converged duplicates") {
  oracle::Gen g(22);
  const Index n = 60;
  Vector d = Vector::LinSpaced(n, 0, 59);
  const Matrix q = g.orthogonal(n);
  const Matrix a = q * d.asDiagonal() * q.transpose();
  const MatrixPencil p(SymMatrix::from_lower(0.5 * (a + a.transpose())), SymMatrix::identity(n));
  // A converged probe gives 4 values in [20.5, 24.5); a barely iterated one
  // adds two rough copies.
  const auto good = run_probe(p, 0, 22.5, 8, 30, 1, 59);
  const auto bad = run_probe(p, 1, 40.0, 30, 1, 2, 59);
  std::vector<Candidate> c;
  for (const auto& pr : {good, bad}) {
    int taken = 0;
    for (Index i = 0; i < pr.ritz_values.size(); ++i) {
      const double x = pr.ritz_values(i);
      if (x >= 20.5 && x < 24.5 && (pr.probe_id == 0 || taken < 2)) {
        c.push_back({x, pr.residual_norms(i), pr.probe_id, i, pr.sigma});
        taken += pr.probe_id == 1;
      }
    }
  }
  REQUIRE(c.size() == 6);
  const Index n_exact = exact_count(neg_at(p, 20.5), neg_at(p, 24.5));
  REQUIRE(n_exact == 4);
  const auto v = validate_slice(c, n_exact);
  CHECK(v.status == SliceStatus::pruned);
  CHECK(v.pruned == 2);
  const std::vector<double> want = {21, 22, 23, 24};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(v.validated[i].source_probe == 0);
    CHECK(std::abs(v.validated[i].value - want[i]) < 1e-9);
  }
}

TEST_CASE("an eigenvalue on a shift is accepted by the slice that counts it") {
  // The Ritz value rounds just above the shift while inertia places it below.
  const double sigma = 1.0;
  const auto l = summary(0, sigma, 1, {sigma + 1e-13, 1.7});
  const auto rep = validate_all({l}, 0.0, 2.0, 0, 2);
  REQUIRE(rep.verdicts.size() == 2);
  CHECK(rep.verdicts[0].status == SliceStatus::validated);
  CHECK(rep.verdicts[1].status == SliceStatus::validated);
  // Far from the shift it stays put and the slices disagree.
  const auto far = summary(0, sigma, 1, {sigma + 1e-6, 1.7});
  const auto rep2 = validate_all({far}, 0.0, 2.0, 0, 2);
  CHECK(rep2.verdicts[0].status == SliceStatus::missing);
  CHECK(rep2.verdicts[1].status == SliceStatus::pruned);
}

TEST_CASE("assemble_validated") {
  const auto l = summary(0, 1.0, 2, {0.3, 0.8, 1.2});
  const auto r = summary(1, 2.0, 4, {1.6, 2.4});
  const auto rep = validate_all({l, r}, 0.0, 3.0, 0, 5);
  const auto all = assemble_validated(rep.verdicts);
  CHECK(static_cast<Index>(all.size()) == rep.window_count);
  CHECK(values_of(all) == std::vector<double>{0.3, 0.8, 1.2, 1.6, 2.4});
  CHECK(rep.json().find("\"validated\"") != std::string::npos);

  const auto rep2 = validate_all({l, r}, 0.0, 3.0, 0, 6);
  REQUIRE(rep2.missing_slices() == std::vector<int>{2});
  try {
    assemble_validated(rep2.verdicts);
    FAIL("expected OutstandingMissing");
  } catch (const OutstandingMissing& e) {
    CHECK(e.slices() == std::vector<int>{2});
  }
}

TEST_CASE("full 200-dim run with 8 shifts validates every eigenvalue once") {
  oracle::Gen g(23);
  const Index n = 200;
  const MatrixPencil p(SymMatrix::from_lower(g.symmetric(n)), SymMatrix::from_lower(g.spd(n, 10)));
  const Vector ev = oracle::gen_eigenvalues(p.a().dense(), p.b().dense());
  const double lo = 0.5 * (ev(79) + ev(80)), hi = 0.5 * (ev(119) + ev(120));
  std::vector<RitzSummary> probes;
  for (int j = 0; j < 8; ++j) {
    const double s = lo + (hi - lo) * (j + 0.5) / 8;
    probes.push_back(summarize(run_probe(p, j, s, 14, 25, 7, hi - lo)));
  }
  const auto rep = validate_all(probes, lo, hi, neg_at(p, lo), neg_at(p, hi));
  CHECK(rep.window_count == 40);
  const auto all = assemble_validated(rep.verdicts);
  REQUIRE(all.size() == 40);
  CHECK(oracle::unmatched(values_of(all), ev, 1e-9) == 0);
  Index sum = 0;
  for (const auto& v : rep.verdicts) sum += v.n_exact;
  CHECK(sum == rep.window_count);
}

TEST_CASE("property: count conservation and idempotence") {
  oracle::Gen g(24);
  for (int t = 0; t < 30; ++t) {
    const int ns = static_cast<int>(g.integer(1, 6));
    std::vector<double> shifts;
    for (int j = 0; j < ns; ++j) shifts.push_back(g.uniform(0.1, 9.9));
    std::sort(shifts.begin(), shifts.end());
    shifts.erase(std::unique(shifts.begin(), shifts.end()), shifts.end());
    std::vector<RitzSummary> probes;
    Index neg = static_cast<Index>(g.integer(0, 3));
    const Index neg0 = neg;
    for (std::size_t j = 0; j < shifts.size(); ++j) {
      neg += g.integer(0, 5);
      std::vector<double> vals;
      const Index kk = g.integer(1, 8);
      for (Index i = 0; i < kk; ++i) vals.push_back(g.uniform(0, 10));
      std::sort(vals.begin(), vals.end());
      std::vector<double> res;
      for (Index i = 0; i < kk; ++i) res.push_back(std::pow(10.0, g.uniform(-14, -2)));
      probes.push_back(summary(static_cast<int>(j), shifts[j], neg, vals, res));
    }
    const Index neg1 = neg + g.integer(0, 5);
    const auto rep = validate_all(probes, 0.0, 10.0, neg0, neg1);
    Index sum = 0;
    for (const auto& v : rep.verdicts) {
      sum += v.n_exact;
      if (v.status != SliceStatus::missing) {
        CHECK(static_cast<Index>(v.validated.size()) == v.n_exact);
        const auto again = validate_slice(v.validated, v.n_exact, v.slice);
        CHECK(again.status == SliceStatus::validated);
        CHECK(values_of(again.validated) == values_of(v.validated));
      } else {
        CHECK(v.missing == v.n_exact - v.n_cand);
      }
    }
    CHECK(sum == neg1 - neg0);
  }
}

TEST_CASE("property: the nearer shift gives the smaller residual") {
  oracle::Gen g(25);
  int trials = 0, nearer_wins = 0;
  for (int t = 0; t < 20; ++t) {
    const Index n = 60;
    // Jittered integer spectrum under an SPD B: A = L Q D Q^T L^T.
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = double(i) + g.uniform(-0.3, 0.3);
    const Matrix b = g.spd(n, 10);
    const Matrix l = Eigen::LLT<Matrix>(b).matrixL();
    const Matrix q = g.orthogonal(n);
    const Matrix a = l * q * d.asDiagonal() * q.transpose() * l.transpose();
    const MatrixPencil p(SymMatrix::from_lower(0.5 * (a + a.transpose())), SymMatrix::from_lower(b));
    const Vector ev = oracle::gen_eigenvalues(p.a().dense(), p.b().dense());
    const Index i0 = g.integer(10, 40);
    const double s1 = 0.5 * (ev(i0) + ev(i0 + 1)), s2 = 0.5 * (ev(i0 + 4) + ev(i0 + 5));
    const auto p1 = run_probe(p, 0, s1, 10, 8, t, 1.0);
    const auto p2 = run_probe(p, 1, s2, 10, 8, t, 1.0);
    for (Index e = i0 + 1; e <= i0 + 4; ++e) {
      auto closest = [&](const SpectralProbe& pr) {
        Index best = 0;
        for (Index i = 1; i < pr.ritz_values.size(); ++i)
          if (std::abs(pr.ritz_values(i) - ev(e)) < std::abs(pr.ritz_values(best) - ev(e))) best = i;
        return best;
      };
      const Index c1 = closest(p1), c2 = closest(p2);
      // Only genuine duplicates count: both copies must approximate ev(e).
      if (std::abs(p1.ritz_values(c1) - ev(e)) > 1e-3 || std::abs(p2.ritz_values(c2) - ev(e)) > 1e-3) continue;
      ++trials;
      const bool first_nearer = std::abs(ev(e) - s1) < std::abs(ev(e) - s2);
      const bool first_smaller = p1.residual_norms(c1) < p2.residual_norms(c2);
      nearer_wins += first_nearer == first_smaller;
    }
  }
  MESSAGE("nearer shift wins " << nearer_wins << " of " << trials);
  CHECK(trials >= 40);
  CHECK(nearer_wins >= 0.9 * trials);
}
