#pragma once

// From a DOS model and a window to exactly n_s ascending shifts.

#include <string>
#include <vector>

#include "specslice/dos.hpp"

namespace specslice {

struct SpectralInterval {
  double lower = 0.0;
  double upper = 0.0;
  CountEstimate est;
};

enum class Provenance { dos, kmeans, inserted };
const char* to_string(Provenance p);

struct ShiftSet {
  std::vector<double> shifts;  ///< strictly ascending
  double window_lower = 0.0;
  double window_upper = 0.0;
  std::vector<Provenance> provenance;

  std::size_t size() const noexcept { return shifts.size(); }
  double window_width() const noexcept { return window_upper - window_lower; }
};

/// Throws InputError unless shifts are strictly ascending and inside the window.
void check_shift_set(const ShiftSet& s);

/// Intervals bounded by roots of Phi(w) = Phi(a) + K j.
std::vector<SpectralInterval> cdos_uniform_partition(const DosModel& m, double a, double b, double k);

/// Grid search for density clusters: one interval per pair of consecutive
/// local maxima of phi, split at the minimum between them. Intervals
/// holding no Ritz value are dropped.
std::vector<SpectralInterval> dos_cluster(const DosModel& m, double a, double b, Index n_omega);

struct RefineConfig {
  double merge_below = 2.0;
  double refine_above = 50.0;
  int max_rounds = 20;
  Index n_omega = 0;  ///< 0 means 10 * lanczos steps
};

struct RefineResult {
  std::vector<SpectralInterval> intervals;
  int rounds = 0;
  bool capped = false;  ///< round limit reached before a fixed point
};

RefineResult refine_clusters(const DosModel& m, double a, double b, const RefineConfig& cfg = {});

struct EnforceResult {
  std::vector<SpectralInterval> intervals;
  bool forced_merge = false;  ///< some merge crossed the gap guard
};

/// Splits the heaviest interval at its CDOS median or merges the lightest
/// with its lighter neighbor until exactly n_s intervals remain.
EnforceResult enforce_shift_count(std::vector<SpectralInterval> intervals, Index n_s, const DosModel& m);

enum class ShiftScheme { midpoint, expectation };

ShiftSet place_shifts(const std::vector<SpectralInterval>& intervals, const DosModel& m, ShiftScheme scheme,
                      double window_lower, double window_upper);

enum class PartitionScheme { clusters, uniform_cdos };

struct PartitionOptions {
  PartitionScheme scheme = PartitionScheme::clusters;
  ShiftScheme shift_scheme = ShiftScheme::midpoint;
  RefineConfig refine;
};

struct PartitionReport {
  std::vector<SpectralInterval> intervals;
  ShiftSet shifts;
  bool refine_capped = false;
  bool forced_merge = false;
  /// Plain-text table: bounds, gamma, shift and provenance per interval.
  std::string text() const;
};

/// Full pipeline on [a, b]: intervals, exactly n_s of them, then shifts.
PartitionReport partition_window(const DosModel& m, double a, double b, Index n_s, const PartitionOptions& opt = {});

}  // namespace specslice
