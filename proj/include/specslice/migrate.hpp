#pragma once

// Shift migration between outer iterations, the partial-trace similarity
// test and recovery of missing eigenvalues.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "specslice/partition.hpp"

namespace specslice {

struct KmeansInit {
  std::vector<double> centroids;  ///< ascending
  bool short_of_k = false;        ///< fewer distinct values than k
};

/// First centroid drawn uniformly, the rest with probability proportional to
/// the squared distance to the nearest centroid chosen so far.
KmeansInit kmeans_pp_init(const std::vector<double>& values, int k, std::mt19937_64& rng);

struct Clustering {
  std::vector<double> centroids;  ///< ascending
  std::vector<int> assignment;    ///< per value
  double objective = 0.0;         ///< within-cluster sum of squares
  int rounds = 0;
  std::vector<double> objective_history;

  std::vector<std::vector<std::size_t>> members() const;
};

/// Lloyd iteration on the line. Stops when no centroid moves more than
/// 1e-12 * spread or after 100 rounds. Throws std::logic_error if the
/// objective ever increases.
Clustering kmeans_1d(const std::vector<double>& values, int k, std::vector<double> init);

struct ValueSource {
  double value = 0.0;
  int probe_id = 0;
  Index vector_index = 0;
};

struct ProbeInfo {
  int id = 0;
  double sigma = 0.0;
  int worker = 0;
};

/// Cluster -> probe id with the most member values sourced from it; ties go
/// to the nearer shift, then the lower id.
std::vector<int> map_clusters_to_probes(const Clustering& c, const std::vector<ValueSource>& values,
                                        const std::vector<ProbeInfo>& probes);

struct Insertion {
  int new_probe_id = 0;
  double sigma = 0.0;
  int donor_probe_id = 0;
  std::vector<Index> donor_vector_indices;
  int worker = 0;
};

struct MigrationPlan {
  std::map<int, double> shift_updates;
  std::vector<int> deletions;
  std::vector<Insertion> insertions;
  std::vector<std::string> rationale;

  std::string text() const;
};

/// Least loaded worker, lowest index on ties.
int least_loaded(const std::vector<Index>& loads);

/// Merge clusters sharing a probe, delete unmapped probes, then split the
/// largest cluster by 2-means until n_s probes remain. When no cluster can be
/// split the widest gap between shifts (or window edges) gets the new probe.
MigrationPlan build_migration_plan(const std::vector<ValueSource>& values, const Clustering& c,
                                   const std::vector<int>& mapping, const std::vector<ProbeInfo>& probes, int n_s,
                                   int worker_count, int next_probe_id, double window_lower, double window_upper);

struct TraceCheck {
  double eta_prev = 0.0;
  double eta_cur = 0.0;
  bool dissimilar = false;
};

/// Tr(X^T A X).
double partial_trace(const Matrix& x, const SymMatrix& a);

TraceCheck compare_traces(double eta_prev, double eta_cur, double rel_tol = 0.05, double floor = 1.0);

TraceCheck trace_similarity(const Matrix& x_prev, const SymMatrix& a_prev, const SymMatrix& a_cur,
                            double rel_tol = 0.05, double floor = 1.0);

struct MissingSlice {
  int slice = 0;
  double lower = 0.0;
  double upper = 0.0;
  Index n_exact = 0;
  Index missing = 0;
};

struct RecoveryShifts {
  std::vector<double> shifts;   ///< ascending
  std::vector<int> for_slice;   ///< slice each shift serves
};

/// New shifts strictly inside each missing slice: at least one, at most
/// ceil(n_exact / per_probe_target).
RecoveryShifts recover_missing(const DosModel& fresh, const std::vector<MissingSlice>& missing, double per_probe_target,
                               ShiftScheme scheme);

/// Same, with a fresh Lanczos DOS of the current pencil.
RecoveryShifts recover_missing(const MatrixPencil& p, const std::vector<MissingSlice>& missing, Index lanczos_steps,
                               std::uint64_t seed, double per_probe_target, ShiftScheme scheme);

}  // namespace specslice
