// Command-line front end: solve, scf, dos, synth.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "specslice/driver.hpp"
#include "specslice/pencil.hpp"

namespace fs = std::filesystem;
using namespace specslice;

namespace {

enum Exit { kOk = 0, kInternal = 1, kNotConverged = 2, kRecovery = 3, kInput = 4 };

struct SolverFlags {
  std::vector<double> range;
  Index nev = 0;
  Index shifts = 4;
  Index probe_dim = 0;
  int iters = 4;
  double tol = 1e-13;
  Index lanczos_steps = 100;
  std::string shift_scheme = "expectation";
  bool no_kmeans = false;
  int workers = 1;
  std::uint64_t seed = 0;
  int max_outer = 50;
  std::string out;
  bool vectors = false;
  bool explain = false;

  void attach(CLI::App* app) {
    auto* r = app->add_option("--range", range, "Window LO HI")->expected(2);
    auto* n = app->add_option("--nev", nev, "Number of lowest eigenvalues")->check(CLI::PositiveNumber);
    r->excludes(n);
    app->add_option("--shifts", shifts, "Number of shifts")->check(CLI::PositiveNumber);
    app->add_option("--probe-dim", probe_dim, "Probe basis dimension (0: automatic)")->check(CLI::NonNegativeNumber);
    app->add_option("--iters", iters, "Subspace iterations per probe")->check(CLI::PositiveNumber);
    app->add_option("--tol", tol, "Residual tolerance (fixed pencil)")->check(CLI::PositiveNumber);
    app->add_option("--lanczos-steps", lanczos_steps, "Lanczos steps for the DOS")->check(CLI::PositiveNumber);
    app->add_option("--shift-scheme", shift_scheme, "midpoint or expectation")
        ->check(CLI::IsMember({"midpoint", "expectation"}));
    app->add_flag("--no-kmeans", no_kmeans, "Keep shifts fixed between outer iterations");
    app->add_option("--workers", workers, "Worker count")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Global seed");
    app->add_option("--max-outer", max_outer, "Outer iteration cap")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "Output prefix");
    app->add_flag("--vectors", vectors, "Also write eigenvectors (needs --out)");
    app->add_flag("--explain", explain, "Print partition, validation and migration reports");
  }

  SolverConfig config() const {
    SolverConfig c;
    if (range.size() == 2) c.window = std::pair{range[0], range[1]};
    c.n_lowest = nev;
    c.n_shifts = shifts;
    c.probe_dim = probe_dim;
    c.subspace_iters = iters;
    c.tol = tol;
    c.lanczos_steps = lanczos_steps;
    c.shift_scheme = shift_scheme == "midpoint" ? ShiftScheme::midpoint : ShiftScheme::expectation;
    c.kmeans = !no_kmeans;
    c.worker_count = workers;
    c.global_seed = seed;
    c.max_outer_iters = max_outer;
    c.validate();
    return c;
  }
};

struct PencilFlags {
  std::string a, b;
  bool b_identity = false;

  void attach(CLI::App* app) {
    app->add_option("--matrix-a", a, "Matrix Market file for A")->required()->check(CLI::ExistingFile);
    auto* mb = app->add_option("--matrix-b", b, "Matrix Market file for B")->check(CLI::ExistingFile);
    auto* bi = app->add_flag("--b-identity", b_identity, "Use B = I");
    mb->excludes(bi);
  }

  MatrixPencil load() const {
    if (b.empty() && !b_identity) throw InputError("give --matrix-b or --b-identity");
    SymMatrix am = load_matrix_market(a);
    SymMatrix bm = b_identity ? SymMatrix::identity(am.order()) : load_matrix_market(b);
    if (am.order() != bm.order()) throw InputError("A and B differ in order");
    return MatrixPencil(std::move(am), std::move(bm));
  }
};

int report(const ResultSet& r, const SolverFlags& f) {
  if (!f.out.empty()) emit_results(r, paths_for_prefix(f.out, f.vectors));
  if (f.explain) {
    std::cout << "# partition\n" << r.partition_report << "\n# validation (last iteration)\n"
              << r.validation_report << "\n# migration\n" << r.migration_log;
  }
  std::printf("status=%s iterations=%d eigenvalues=%zu window=[%.17g, %.17g]\n",
              r.status == SolveStatus::converged ? "converged" : "not_converged", r.iterations,
              r.eigenvalues.size(), r.window_lower, r.window_upper);
  if (f.out.empty())
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i)
      std::printf("%.17g %.3e\n", r.eigenvalues[i], r.scaled_residuals[i]);
  return r.status == SolveStatus::converged ? kOk : kNotConverged;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  if (!f) throw InputError("cannot write " + p.string());
  f << s;
}

int run_synth(const std::string& spec_path, Index n, std::size_t iters, std::uint64_t seed, const fs::path& dir) {
  std::ifstream in(spec_path);
  if (!in) throw InputError("cannot read " + spec_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto spec = parse_spectrum_spec(ss.str());
  const auto s = synth_sequence(spec, n, iters, seed);
  fs::create_directories(dir);
  const fs::path root = fs::absolute(dir);
  SequenceManifest m;
  if (spec.b_mode != BMode::identity) {
    m.b_path = root / "b.mtx";
    save_matrix_market(*m.b_path, s.sequence.b(), MarketFormat::array);
  }
  char name[32];
  for (std::size_t i = 0; i < iters; ++i) {
    std::snprintf(name, sizeof name, "a_%04zu.mtx", i);
    m.a_paths.push_back(root / name);
    save_matrix_market(m.a_paths.back(), s.sequence.pencil(i).a(), MarketFormat::array);
  }
  save_manifest(root / "manifest.json", m);
  nlohmann::json truth = {{"n", n}, {"iters", iters}, {"seed", seed}, {"spectra", nlohmann::json::array()},
                          {"cluster_means", nlohmann::json::array()}};
  for (std::size_t i = 0; i < iters; ++i) {
    truth["spectra"].push_back(std::vector<double>(s.true_spectra[i].begin(), s.true_spectra[i].end()));
    truth["cluster_means"].push_back(std::vector<double>(s.cluster_means[i].begin(), s.cluster_means[i].end()));
  }
  write_text(dir / "spectra.json", truth.dump(2) + "\n");
  std::printf("wrote %zu pencils to %s\n", iters, dir.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shift-invert spectrum slicing for symmetric generalized eigenproblems"};
  app.require_subcommand(1);

  auto* solve = app.add_subcommand("solve", "Eigenpairs of one pencil inside a window");
  PencilFlags solve_pencil;
  SolverFlags solve_flags;
  solve_pencil.attach(solve);
  solve_flags.attach(solve);

  auto* scf = app.add_subcommand("scf", "Run a pencil sequence from a manifest");
  std::string manifest;
  SolverFlags scf_flags;
  scf->add_option("--manifest", manifest, "Sequence manifest (JSON)")->required()->check(CLI::ExistingFile);
  scf_flags.attach(scf);

  auto* dos = app.add_subcommand("dos", "Write the DOS and CDOS on a grid");
  PencilFlags dos_pencil;
  Index grid = 1000, dos_steps = 100;
  std::uint64_t dos_seed = 0;
  std::string dos_out;
  std::vector<double> dos_range;
  dos_pencil.attach(dos);
  dos->add_option("--grid", grid, "Grid points")->check(CLI::Range(Index{2}, Index{100000000}));
  dos->add_option("--out", dos_out, "CSV path (stdout if omitted)");
  dos->add_option("--lanczos-steps", dos_steps, "Lanczos steps")->check(CLI::PositiveNumber);
  dos->add_option("--seed", dos_seed, "Seed");
  dos->add_option("--range", dos_range, "Grid bounds LO HI (default: Ritz range plus margin)")->expected(2);

  auto* synth = app.add_subcommand("synth", "Write a synthetic pencil sequence and its spectra");
  std::string spec_path, out_dir;
  Index synth_n = 0;
  std::size_t synth_iters = 1;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", spec_path, "Spectrum description (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--n", synth_n, "Order")->required()->check(CLI::PositiveNumber);
  synth->add_option("--iters", synth_iters, "Sequence length")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--out-dir", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*solve) {
      if (solve_flags.range.empty() && solve_flags.nev == 0) throw InputError("give --range or --nev");
      const auto cfg = solve_flags.config();
      const auto p = solve_pencil.load();
      return report(scf_solve(PencilSequence::fixed(p), cfg), solve_flags);
    }
    if (*scf) {
      if (scf_flags.range.empty() && scf_flags.nev == 0) throw InputError("give --range or --nev");
      const auto cfg = scf_flags.config();
      return report(scf_solve(open_sequence(load_manifest(manifest)), cfg), scf_flags);
    }
    if (*dos) {
      const auto p = dos_pencil.load();
      const auto m = estimate_dos(p, std::min(dos_steps, p.order()), dos_seed);
      double lo, hi;
      if (dos_range.size() == 2) {
        lo = dos_range[0];
        hi = dos_range[1];
        if (!(lo < hi)) throw InputError("--range needs LO < HI");
      } else {
        const double a = m.thetas().minCoeff(), b = m.thetas().maxCoeff();
        const double pad = 0.05 * std::max(b - a, 1.0) + 3 * m.widths().maxCoeff();
        lo = a - pad;
        hi = b + pad;
      }
      const auto g = evaluate_grid(m, lo, hi, grid);
      if (dos_out.empty()) {
        write_dos_csv(std::cout, g);
      } else {
        std::ofstream f(dos_out);
        if (!f) throw InputError("cannot write " + dos_out);
        write_dos_csv(f, g);
      }
      return kOk;
    }
    return run_synth(spec_path, synth_n, synth_iters, synth_seed, out_dir);
  } catch (const RecoveryExhausted& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRecovery;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInput;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInput;
  } catch (const DimensionMismatch& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInput;
  } catch (const NotPositiveDefinite& e) {
    std::fprintf(stderr, "input error: B is not positive definite: %s\n", e.what());
    return kInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternal;
  }
}
