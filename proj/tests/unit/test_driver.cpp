#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracle.hpp"
#include "specslice/driver.hpp"
#include "specslice/pencil.hpp"

using namespace specslice;

namespace {

MatrixPencil diag_pencil(Index n) {
  return MatrixPencil(SymMatrix::diagonal(Vector::LinSpaced(n, 1.0, static_cast<double>(n))), SymMatrix::identity(n));
}

SyntheticSpectrumSpec banded_spec() {
  SyntheticSpectrumSpec s;
  s.clusters = {{-10.0, 1.0, 12}, {0.0, 2.0, 30}, {20.0, 0.5, 8}};
  s.b_mode = BMode::random_spd;
  s.condition_target = 20.0;
  s.basis_rotation_seed = 3;
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("round-robin schedule examples") {
  const auto s8 = schedule_probes({0, 1, 2, 3, 4, 5, 6, 7}, 4);
  CHECK(s8.probes_of(0) == std::vector<int>{0, 4});
  CHECK(s8.probes_of(1) == std::vector<int>{1, 5});
  CHECK(s8.probes_of(2) == std::vector<int>{2, 6});
  CHECK(s8.probes_of(3) == std::vector<int>{3, 7});
  CHECK(s8.balanced());

  const auto s5 = schedule_probes({0, 1, 2, 3, 4}, 4);
  CHECK(s5.loads() == std::vector<Index>{2, 1, 1, 1});
  CHECK_FALSE(s5.balanced());

  Schedule s;
  s.worker_count = 3;
  s.worker_of = {{0, 0}, {1, 0}, {2, 0}, {3, 1}, {4, 1}, {5, 2}, {6, 2}};
  const int w = s.insert(7);
  CHECK((w == 1 || w == 2));
  CHECK(s.loads()[static_cast<std::size_t>(w)] == 3);

  CHECK_THROWS_AS(schedule_probes({0}, 0), InputError);
}

TEST_CASE("config validation") {
  SolverConfig c;
  CHECK_THROWS_AS(c.validate(), InputError);  // neither window nor n_lowest
  c.window = std::pair{0.0, 1.0};
  CHECK_NOTHROW(c.validate());
  c.tol = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.tol = 1e-10;
  c.worker_count = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.worker_count = 1;
  c.n_shifts = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.n_shifts = 2;
  c.n_lowest = 5;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("gather: worker count does not change the summary table") {
  const auto sp = synth_pencil(banded_spec(), 120, 7);
  const std::vector<double> shifts{-10.0, -1.0, 1.5, 20.0};
  std::vector<ProbeTask> tasks;
  std::vector<int> ids;
  for (int j = 0; j < 4; ++j) {
    tasks.push_back({j, shifts[static_cast<std::size_t>(j)], nullptr});
    ids.push_back(j);
  }
  ProbeConfig pc;
  pc.basis_dim = 15;
  pc.subspace_iters = 3;
  const auto ref = run_probe_round_reference(sp.pencil, tasks, pc, 11, 0, 40.0);
  Traffic t1;
  const auto g1 = gather_summaries(ref, {}, &t1);
  for (int w : {2, 4}) {
    const auto par = run_probe_round(sp.pencil, tasks, schedule_probes(ids, w), pc, 11, 0, 40.0);
    const auto gw = gather_summaries(par);
    REQUIRE(gw.size() == g1.size());
    for (std::size_t j = 0; j < gw.size(); ++j) {
      CHECK(gw[j].probe_id == g1[j].probe_id);
      CHECK(gw[j].inertia_neg == g1[j].inertia_neg);
      CHECK(gw[j].values == g1[j].values);  // bit-identical
      CHECK(gw[j].residuals == g1[j].residuals);
    }
  }
  // One worker: concatenation, sorted by shift.
  for (std::size_t j = 0; j < g1.size(); ++j) CHECK(g1[j].sigma == ref[j].sigma);
  CHECK(t1.summary_reals == 4 * 15 * 2);
  CHECK(t1.summary_ints == 4 * 4);
}

TEST_CASE("payload accounting is independent of N") {
  // 16 probes with k = 100 values each: 3200 reals at any N.
  for (Index n : {150, 300}) {
    std::vector<SpectralProbe> probes(16);
    for (int j = 0; j < 16; ++j) {
      probes[static_cast<std::size_t>(j)].probe_id = j;
      probes[static_cast<std::size_t>(j)].sigma = j;
      probes[static_cast<std::size_t>(j)].ritz_values = Vector::Zero(100);
      probes[static_cast<std::size_t>(j)].residual_norms = Vector::Zero(100);
      probes[static_cast<std::size_t>(j)].ritz_vectors = Matrix::Zero(n, 100);
    }
    Traffic t;
    gather_summaries(probes, {}, &t);
    CHECK(t.summary_reals == 16 * 100 * 2);
  }
}

TEST_CASE("diagonal pencil converges at iteration 0") {
  const auto p = diag_pencil(40);
  SolverConfig c;
  c.window = std::pair{0.5, 40.5};
  c.n_shifts = 4;
  const auto r = scf_solve(PencilSequence::fixed(p), c);
  CHECK(r.status == SolveStatus::converged);
  CHECK(r.iterations == 1);
  REQUIRE(r.eigenvalues.size() == 40);
  for (std::size_t i = 0; i < 40; ++i) CHECK(r.eigenvalues[i] == doctest::Approx(double(i + 1)).epsilon(1e-12));
  for (double s : r.scaled_residuals) CHECK(s < 1e-13);
}

TEST_CASE("fixed-pencil run matches the oracle and is worker invariant") {
  const auto sp = synth_pencil(banded_spec(), 200, 5);
  const double na = sp.pencil.a().frobenius_norm();
  SolverConfig c;
  c.window = std::pair{-12.0, 3.0};
  c.n_shifts = 4;
  c.tol = 1e-12;
  c.global_seed = 9;
  const auto r1 = scf_solve(PencilSequence::fixed(sp.pencil), c);
  REQUIRE(r1.status == SolveStatus::converged);
  const Index expect = oracle::count_open(sp.true_eigenvalues, -12.0, 3.0);
  CHECK(r1.window_count == expect);
  CHECK(static_cast<Index>(r1.eigenvalues.size()) == expect);
  CHECK(oracle::unmatched(r1.eigenvalues, sp.true_eigenvalues, 1e-9 * na) == 0);
  for (const auto& h : r1.history) CHECK(h.live_probes_after == c.n_shifts);

  // Monotone tail over the last three iterations.
  const auto& h = r1.history;
  for (std::size_t i = h.size() >= 3 ? h.size() - 2 : 1; i < h.size(); ++i)
    CHECK(h[i].max_residual <= h[i - 1].max_residual);

  // Recomputed residuals agree with the reported ones.
  Vector lam = Eigen::Map<const Vector>(r1.eigenvalues.data(), static_cast<Index>(r1.eigenvalues.size()));
  const Vector rn = residual_norms(sp.pencil, r1.eigenvectors, lam);
  for (Index j = 0; j < rn.size(); ++j) CHECK(std::abs(rn(j) - r1.residual_norms[static_cast<std::size_t>(j)]) < 1e-12);

  for (int w : {2, 4}) {
    c.worker_count = w;
    const auto rw = scf_solve(PencilSequence::fixed(sp.pencil), c);
    CHECK(rw.iterations == r1.iterations);
    REQUIRE(rw.eigenvalues.size() == r1.eigenvalues.size());
    for (std::size_t j = 0; j < rw.eigenvalues.size(); ++j) {
      CHECK(rw.eigenvalues[j] == r1.eigenvalues[j]);
      CHECK(rw.residual_norms[j] == r1.residual_norms[j]);
    }
  }
  c.worker_count = 1;
  c.serial_reference = true;
  const auto rs = scf_solve(PencilSequence::fixed(sp.pencil), c);
  CHECK(rs.eigenvalues == r1.eigenvalues);
}

TEST_CASE("lowest-n mode brackets and returns the lowest eigenvalues") {
  const auto sp = synth_pencil(banded_spec(), 160, 2);
  SolverConfig c;
  c.n_lowest = 20;
  c.n_shifts = 3;
  c.tol = 1e-12;
  const auto r = scf_solve(PencilSequence::fixed(sp.pencil), c);
  REQUIRE(r.status == SolveStatus::converged);
  REQUIRE(r.eigenvalues.size() >= 20);
  CHECK(oracle::count_below(sp.true_eigenvalues, r.window_lower) == 0);
  for (std::size_t i = 0; i < 20; ++i)
    CHECK(std::abs(r.eigenvalues[i] - sp.true_eigenvalues(static_cast<Index>(i))) < 1e-9 * sp.pencil.a().frobenius_norm());
}

TEST_CASE("outer iteration cap yields not_converged") {
  const auto sp = synth_pencil(banded_spec(), 120, 4);
  SolverConfig c;
  c.window = std::pair{-12.0, 3.0};
  c.n_shifts = 2;
  c.probe_dim = 28;
  c.subspace_iters = 1;
  c.tol = 1e-300;
  c.max_outer_iters = 2;
  const auto r = scf_solve(PencilSequence::fixed(sp.pencil), c);
  CHECK(r.status == SolveStatus::not_converged);
  CHECK(r.iterations == 2);
  CHECK(r.history.size() == 2);
}

TEST_CASE("evenly spaced spectrum: shifts stay off eigenvalues") {
  // A k-means centroid of an odd, evenly spaced group is itself an
  // eigenvalue; the driver must move such shifts before factoring.
  SyntheticSpectrumSpec s;
  s.clusters = {{0.0, 0.0, 1}};
  s.b_mode = BMode::random_spd;
  s.condition_target = 5.0;
  s.basis_rotation_seed = 2;
  const auto sp = synth_pencil(s, 120, 3);
  const Vector& ev = sp.true_eigenvalues;
  const double gap = ev(2) - ev(1);
  SolverConfig cfg;
  cfg.window = std::pair{-0.5 * gap, ev(45) + 0.5 * gap};
  cfg.n_shifts = 5;
  cfg.global_seed = 4;
  const auto r = scf_solve(PencilSequence::fixed(sp.pencil), cfg);
  CHECK(r.status == SolveStatus::converged);
  CHECK(oracle::unmatched(r.eigenvalues, ev.head(46), 1e-9 * sp.pencil.a().frobenius_norm()) == 0);
  for (std::size_t i = 1; i < r.history.size(); ++i)
    for (double sigma : r.history[i].shifts) CHECK(oracle::min_distance(ev, sigma) >= 0.1 * gap * (1 - 1e-9));
}

TEST_CASE("sequence mode runs to the end of the sequence") {
  auto spec = banded_spec();
  spec.perturbation_amplitude = 0.05;
  const auto seq = synth_sequence(spec, 100, 4, 8);
  SolverConfig c;
  c.window = std::pair{-12.0, 3.0};
  c.n_shifts = 3;
  const auto r = scf_solve(seq.sequence, c);
  CHECK(r.status == SolveStatus::converged);
  CHECK(r.iterations == 4);
  CHECK(oracle::unmatched(r.eigenvalues, seq.true_spectra.back(), 1e-6) == 0);
  for (const auto& h : r.history) CHECK_FALSE(h.dissimilar);
}

TEST_CASE("emit round trip") {
  const auto sp = synth_pencil(banded_spec(), 90, 1);
  SolverConfig c;
  c.window = std::pair{-12.0, 3.0};
  c.n_shifts = 3;
  c.tol = 1e-12;
  const auto r = scf_solve(PencilSequence::fixed(sp.pencil), c);
  const auto dir = std::filesystem::temp_directory_path() / "specslice_emit_test";
  std::filesystem::create_directories(dir);

  const auto only_json = paths_for_prefix((dir / "a").string(), false);
  CHECK(only_json.vectors.empty());
  emit_results(r, only_json);
  CHECK(std::filesystem::exists(only_json.json));
  CHECK_FALSE(std::filesystem::exists(dir / "a.vectors.bin"));

  const auto paths = paths_for_prefix((dir / "b").string(), true);
  emit_results(r, paths);
  const Matrix x = read_vectors(paths.vectors);
  CHECK(x.rows() == r.eigenvectors.rows());
  CHECK(x.cols() == r.eigenvectors.cols());
  CHECK(std::filesystem::file_size(paths.vectors) == 16 + 8 * static_cast<std::uintmax_t>(x.size()));
  Vector lam = Eigen::Map<const Vector>(r.eigenvalues.data(), static_cast<Index>(r.eigenvalues.size()));
  const Vector rn = residual_norms(sp.pencil, x, lam);
  for (Index j = 0; j < rn.size(); ++j) CHECK(std::abs(rn(j) - r.residual_norms[static_cast<std::size_t>(j)]) < 1e-12);

  const auto csv = slurp(paths.history_csv);
  CHECK(csv.rfind("iter,max_residual,n_validated,n_missing\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == r.iterations + 1);

  CHECK_THROWS_AS(write_vectors((dir / "missing_dir" / "x.bin").string(), x), InputError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("property: probe-count conservation across random pencils") {
  oracle::Gen g(77);
  for (int trial = 0; trial < 4; ++trial) {
    SyntheticSpectrumSpec s;
    s.clusters = {{g.uniform(-8, -4), 0.5, g.integer(5, 15)}, {g.uniform(0, 2), 1.0, g.integer(10, 30)}};
    s.b_mode = BMode::random_spd;
    s.basis_rotation_seed = static_cast<std::uint64_t>(trial);
    const auto sp = synth_pencil(s, 90, static_cast<std::uint64_t>(trial));
    SolverConfig c;
    c.window = std::pair{-10.0, 4.0};
    c.n_shifts = g.integer(2, 5);
    c.tol = 1e-12;
    c.global_seed = static_cast<std::uint64_t>(trial);
    const auto r = scf_solve(PencilSequence::fixed(sp.pencil), c);
    CHECK(r.status == SolveStatus::converged);
    for (const auto& h : r.history) CHECK(h.live_probes_after == c.n_shifts);
    CHECK(static_cast<Index>(r.eigenvalues.size()) == oracle::count_open(sp.true_eigenvalues, -10.0, 4.0));
  }
}
