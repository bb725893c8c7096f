#pragma once

// Per-slice validation from gathered Ritz summaries and inertia counts.
// Nothing here touches eigenvectors.

#include <optional>
#include <string>
#include <vector>

#include "specslice/linalg.hpp"

namespace specslice {

/// What a probe shares with everyone after a round.
struct RitzSummary {
  int probe_id = 0;
  double sigma = 0.0;
  Index inertia_neg = 0;
  std::vector<double> values;     ///< ascending
  std::vector<double> residuals;  ///< same order as values
};

/// Slice j covers [lower, upper). Slice 0 starts at the window's lower
/// edge, the last slice ends at its upper edge.
struct Slice {
  int index = 0;
  double lower = 0.0;
  double upper = 0.0;
  std::optional<int> left_probe;   ///< probe at `lower`, if any
  std::optional<int> right_probe;  ///< probe at `upper`, if any
  double tau = 0.0;                ///< ownership split point
  Index neg_lower = 0;             ///< n_neg at lower
  Index neg_upper = 0;             ///< n_neg at upper
};

struct Candidate {
  double value = 0.0;
  double residual = 0.0;
  int source_probe = 0;
  Index vector_index = 0;  ///< column in the source probe's Ritz block
  double source_shift = 0.0;
};

enum class SliceStatus { validated, missing, pruned };
const char* to_string(SliceStatus s);

struct SliceVerdict {
  int slice = 0;
  Index n_exact = 0;
  Index n_cand = 0;
  SliceStatus status = SliceStatus::validated;
  Index missing = 0;  ///< n_exact - n_cand when Missing
  Index pruned = 0;   ///< n_cand - n_exact when Pruned
  std::vector<Candidate> validated;  ///< ascending by value
};

/// Ownership point between two shifts: tau = lo + fraction * (hi - lo).
struct TauRule {
  double fraction = 0.5;
  /// A candidate this close to a shift (relative to the window) may move to
  /// the neighboring slice when that balances a deficit against a surplus.
  double near_shift = 1e-12;
};

/// Slices for shifts sorted ascending. `neg_window_lower` and
/// `neg_window_upper` are the inertia counts at the window edges.
std::vector<Slice> make_slices(const std::vector<RitzSummary>& probes, double window_lower, double window_upper,
                               Index neg_window_lower, Index neg_window_upper, TauRule tau = {});

/// Left probe owns [lower, tau], right probe owns (tau, upper); an end
/// slice takes everything in [lower, upper) from its single probe.
std::vector<Candidate> select_candidates(const RitzSummary* left, const RitzSummary* right, const Slice& s);

/// n_neg(right) - n_neg(left). Throws Error on a negative difference.
Index exact_count(Index left_neg, Index right_neg);

/// Equal counts validate; fewer candidates are Missing; more are Pruned to
/// the n_exact smallest residuals (ties go to the candidate nearer its shift).
SliceVerdict validate_slice(std::vector<Candidate> candidates, Index n_exact, int slice_index = 0);

struct ValidationReport {
  std::vector<Slice> slices;
  std::vector<SliceVerdict> verdicts;
  Index window_count = 0;  ///< n_neg(upper edge) - n_neg(lower edge)

  std::vector<int> missing_slices() const;
  Index total_missing() const;
  std::string json() const;
};

ValidationReport validate_all(const std::vector<RitzSummary>& probes, double window_lower, double window_upper,
                              Index neg_window_lower, Index neg_window_upper, TauRule tau = {});

/// Concatenated, ascending. Throws OutstandingMissing when any slice is Missing.
std::vector<Candidate> assemble_validated(const std::vector<SliceVerdict>& verdicts);

}  // namespace specslice
