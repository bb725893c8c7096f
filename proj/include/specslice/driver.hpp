#pragma once

// Outer loop: partition, probe rounds, validation, recovery and migration
// over a sequence of pencils, with in-process workers.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "specslice/migrate.hpp"
#include "specslice/probe.hpp"
#include "specslice/validate.hpp"

namespace specslice {

/// Reals and integers that would cross worker boundaries.
struct Traffic {
  Index summary_reals = 0;  ///< Ritz values and residuals of the main round
  Index summary_ints = 0;   ///< probe id, inertia, count, perturbation count
  Index recovery_summary_reals = 0;
  Index trace_reals = 0;     ///< partial-trace all-reduce
  Index transfer_reals = 0;  ///< vectors moved to inserted probes
  Index final_gather_reals = 0;

  Traffic& operator+=(const Traffic& o);
};

struct Schedule {
  int worker_count = 1;
  std::map<int, int> worker_of;  ///< probe id -> worker

  std::vector<Index> loads() const;
  bool balanced() const;
  /// Places a new probe on the least loaded worker and returns it.
  int insert(int probe_id);
  void remove(int probe_id);
  std::vector<int> probes_of(int worker) const;
};

/// Probe j of the list goes to worker j mod worker_count.
Schedule schedule_probes(const std::vector<int>& probe_ids, int worker_count);

struct ProbeTask {
  int probe_id = 0;
  double sigma = 0.0;
  const Matrix* previous = nullptr;  ///< seed vectors, may be null
};

/// Runs every task; tasks of one worker run in sequence, workers in
/// parallel. Output order follows `tasks`.
std::vector<SpectralProbe> run_probe_round(const MatrixPencil& p, const std::vector<ProbeTask>& tasks,
                                           const Schedule& sched, const ProbeConfig& cfg, std::uint64_t seed,
                                           int iteration, double window_width);

/// Serial loop over the same tasks.
std::vector<SpectralProbe> run_probe_round_reference(const MatrixPencil& p, const std::vector<ProbeTask>& tasks,
                                                     const ProbeConfig& cfg, std::uint64_t seed, int iteration,
                                                     double window_width);

/// Residual norm scaled by (||A||_F + |lambda| ||B||_F) ||x||_2.
Vector scaled_residuals(const MatrixPencil& p, const SpectralProbe& probe);

/// All-gather of probe summaries, sorted by shift then id. `scaled` holds a
/// residual vector per probe (same order as `probes`); when empty the raw
/// norms are used.
std::vector<RitzSummary> gather_summaries(const std::vector<SpectralProbe>& probes,
                                          const std::vector<Vector>& scaled = {}, Traffic* traffic = nullptr);

struct SolverConfig {
  std::optional<std::pair<double, double>> window;
  Index n_lowest = 0;
  Index n_shifts = 4;
  Index probe_dim = 0;  ///< 0: max(ceil(10 n_e / n_s), 10)
  int subspace_iters = 4;
  double tol = 1e-13;
  Index lanczos_steps = 100;
  ShiftScheme shift_scheme = ShiftScheme::expectation;
  WidthRule width_rule = WidthRule::max_gap;
  PartitionScheme partition = PartitionScheme::clusters;
  bool kmeans = true;
  int worker_count = 1;
  std::uint64_t global_seed = 0;
  int max_outer_iters = 50;
  double trace_rel_tol = 0.05;
  int recovery_rounds = 3;
  std::vector<double> initial_shifts;  ///< replaces the DOS shifts of iteration 0
  bool serial_reference = false;

  void validate() const;
};

struct MissingRecord {
  int slice = 0;
  double lower = 0.0;
  double upper = 0.0;
  Index n_exact = 0;
  Index n_cand = 0;
};

struct IterationRecord {
  int iter = 0;
  double max_residual = 0.0;  ///< scaled, over validated pairs
  Index n_validated = 0;
  Index n_missing = 0;  ///< before recovery
  std::vector<MissingRecord> missing;
  int recovery_rounds = 0;
  std::vector<double> recovery_shifts;
  std::vector<double> shifts;  ///< shifts factored in the main round, ascending
  std::vector<int> probe_ids;  ///< same order as shifts
  std::string shift_source;    ///< dos, kmeans, fixed, user
  bool dissimilar = false;
  double eta_prev = 0.0;
  double eta_cur = 0.0;
  Index live_probes_after = 0;  ///< after migration for the next iteration
  Traffic traffic;
  std::vector<double> values;     ///< validated, ascending
  std::vector<double> residuals;  ///< scaled, same order
  std::string migration;
};

enum class SolveStatus { converged, not_converged };

struct ResultSet {
  SolveStatus status = SolveStatus::not_converged;
  int iterations = 0;
  double window_lower = 0.0;
  double window_upper = 0.0;
  Index window_count = 0;
  Index probe_dim = 0;
  Index order = 0;
  std::vector<double> eigenvalues;
  std::vector<double> residual_norms;    ///< ||A x - lambda B x||
  std::vector<double> scaled_residuals;  ///< see scaled_residuals()
  std::vector<int> source_probe;
  std::vector<double> source_shift;
  Matrix eigenvectors;  ///< N x count, B-orthonormal columns
  std::vector<IterationRecord> history;
  std::map<std::string, double> timing;
  Traffic traffic_total;
  std::string partition_report;
  std::string validation_report;
  std::string migration_log;
};

/// Lowest-n window: lower edge below every eigenvalue, upper edge with at
/// least n eigenvalues below it (both inertia checked).
std::pair<double, double> bracket_lowest(const MatrixPencil& p, const DosModel& m, Index n);

ResultSet scf_solve(const PencilSequence& seq, const SolverConfig& cfg);

struct EmitPaths {
  std::string json;
  std::string history_csv;
  std::string vectors;  ///< empty: skip
  std::string migration_log;
};

EmitPaths paths_for_prefix(const std::string& prefix, bool with_vectors);
void emit_results(const ResultSet& r, const EmitPaths& paths);
std::string results_json(const ResultSet& r);

/// Dense block: "SISV", u32 rows, u32 cols, 4 zero bytes, then row-major doubles.
void write_vectors(const std::string& path, const Matrix& x);
Matrix read_vectors(const std::string& path);

}  // namespace specslice
