#include "specslice/migrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>

namespace specslice {

KmeansInit kmeans_pp_init(const std::vector<double>& values, int k, std::mt19937_64& rng) {
  if (k < 1) throw InputError("k-means needs k >= 1");
  if (values.empty()) throw InputError("k-means needs at least one value");
  std::vector<double> distinct = values;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  KmeansInit out;
  if (static_cast<int>(distinct.size()) <= k) {
    out.centroids = distinct;
    out.short_of_k = static_cast<int>(distinct.size()) < k;
    return out;
  }
  std::uniform_int_distribution<std::size_t> first(0, values.size() - 1);
  out.centroids.push_back(values[first(rng)]);
  std::vector<double> d2(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) d2[i] = (values[i] - out.centroids[0]) * (values[i] - out.centroids[0]);
  while (static_cast<int>(out.centroids.size()) < k) {
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    const double c = values[pick(rng)];
    out.centroids.push_back(c);
    for (std::size_t i = 0; i < values.size(); ++i) d2[i] = std::min(d2[i], (values[i] - c) * (values[i] - c));
  }
  std::sort(out.centroids.begin(), out.centroids.end());
  return out;
}

std::vector<std::vector<std::size_t>> Clustering::members() const {
  std::vector<std::vector<std::size_t>> m(centroids.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) m[static_cast<std::size_t>(assignment[i])].push_back(i);
  return m;
}

namespace {

int nearest(const std::vector<double>& c, double x) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(c.size()); ++j)
    if (std::abs(x - c[static_cast<std::size_t>(j)]) < std::abs(x - c[static_cast<std::size_t>(best)])) best = j;
  return best;
}

double objective_of(const std::vector<double>& v, const std::vector<double>& c, const std::vector<int>& a) {
  double s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - c[static_cast<std::size_t>(a[i])];
    s += d * d;
  }
  return s;
}

}  // namespace

Clustering kmeans_1d(const std::vector<double>& values, int k, std::vector<double> init) {
  if (k < 1 || static_cast<std::size_t>(k) > values.size()) throw InputError("k-means needs 1 <= k <= |values|");
  if (static_cast<int>(init.size()) != k) throw InputError("k-means initial centroid count differs from k");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double spread = *hi - *lo;
  Clustering c;
  c.centroids = std::move(init);
  std::sort(c.centroids.begin(), c.centroids.end());
  c.assignment.assign(values.size(), 0);
  double prev = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 100; ++round) {
    for (std::size_t i = 0; i < values.size(); ++i) c.assignment[i] = nearest(c.centroids, values[i]);
    // Empty clusters take the point farthest from the largest cluster's centroid.
    for (int j = 0; j < k; ++j) {
      std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
      for (int a : c.assignment) ++sizes[static_cast<std::size_t>(a)];
      if (sizes[static_cast<std::size_t>(j)] > 0) continue;
      const int big = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      std::size_t far = values.size();
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (c.assignment[i] != big) continue;
        if (far == values.size() || std::abs(values[i] - c.centroids[static_cast<std::size_t>(big)]) >
                                        std::abs(values[far] - c.centroids[static_cast<std::size_t>(big)]))
          far = i;
      }
      c.assignment[far] = j;
      c.centroids[static_cast<std::size_t>(j)] = values[far];
    }
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum[static_cast<std::size_t>(c.assignment[i])] += values[i];
      ++cnt[static_cast<std::size_t>(c.assignment[i])];
    }
    double moved = 0;
    for (std::size_t j = 0; j < sum.size(); ++j) {
      const double nc = sum[j] / static_cast<double>(cnt[j]);
      moved = std::max(moved, std::abs(nc - c.centroids[j]));
      c.centroids[j] = nc;
    }
    const double obj = objective_of(values, c.centroids, c.assignment);
    if (obj > prev * (1.0 + 1e-12) + 1e-300) throw std::logic_error("k-means objective increased");
    prev = obj;
    c.objective_history.push_back(obj);
    c.rounds = round + 1;
    if (moved <= 1e-12 * spread) break;
  }
  // Means of contiguous groups stay ordered, but keep the labels ascending regardless.
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) order[static_cast<std::size_t>(j)] = j;
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return c.centroids[static_cast<std::size_t>(x)] < c.centroids[static_cast<std::size_t>(y)];
  });
  std::vector<int> relabel(static_cast<std::size_t>(k));
  std::vector<double> sorted(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    relabel[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = j;
    sorted[static_cast<std::size_t>(j)] = c.centroids[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
  }
  c.centroids = sorted;
  for (int& a : c.assignment) a = relabel[static_cast<std::size_t>(a)];
  c.objective = objective_of(values, c.centroids, c.assignment);
  return c;
}

std::vector<int> map_clusters_to_probes(const Clustering& c, const std::vector<ValueSource>& values,
                                        const std::vector<ProbeInfo>& probes) {
  if (values.size() != c.assignment.size()) throw DimensionMismatch("cluster assignment and value list differ in size");
  std::map<int, double> shift;
  for (const auto& p : probes) shift[p.id] = p.sigma;
  std::vector<int> out;
  const auto members = c.members();
  for (std::size_t j = 0; j < members.size(); ++j) {
    std::map<int, int> votes;
    for (std::size_t i : members[j]) ++votes[values[i].probe_id];
    int best = -1, best_votes = -1;
    for (const auto& [id, n] : votes) {
      if (!shift.count(id)) continue;
      const bool better =
          n > best_votes ||
          (n == best_votes && std::abs(shift[id] - c.centroids[j]) < std::abs(shift[best] - c.centroids[j]));
      if (better) {
        best = id;
        best_votes = n;
      }
    }
    if (best < 0) throw InputError("cluster " + std::to_string(j) + " has no value sourced from a live probe");
    out.push_back(best);
  }
  return out;
}

int least_loaded(const std::vector<Index>& loads) {
  if (loads.empty()) throw InputError("no workers");
  return static_cast<int>(std::min_element(loads.begin(), loads.end()) - loads.begin());
}

std::string MigrationPlan::text() const {
  std::string out;
  char buf[256];
  for (const auto& [id, s] : shift_updates) {
    std::snprintf(buf, sizeof buf, "shift probe=%d sigma=%.15g\n", id, s);
    out += buf;
  }
  for (int id : deletions) out += "delete probe=" + std::to_string(id) + "\n";
  for (const auto& ins : insertions) {
    std::snprintf(buf, sizeof buf, "insert probe=%d sigma=%.15g donor=%d vectors=%zu worker=%d\n", ins.new_probe_id,
                  ins.sigma, ins.donor_probe_id, ins.donor_vector_indices.size(), ins.worker);
    out += buf;
  }
  for (const auto& r : rationale) out += "note " + r + "\n";
  return out;
}

namespace {

struct Group {
  int probe = 0;
  std::vector<std::size_t> members;  // indices into the value list
  double centroid = 0.0;
};

double mean_of(const std::vector<ValueSource>& v, const std::vector<std::size_t>& idx) {
  double s = 0;
  for (std::size_t i : idx) s += v[i].value;
  return s / static_cast<double>(idx.size());
}

bool splittable(const std::vector<ValueSource>& v, const Group& g) {
  if (g.members.size() < 2) return false;
  for (std::size_t i : g.members)
    if (v[i].value != v[g.members.front()].value) return true;
  return false;
}

}  // namespace

MigrationPlan build_migration_plan(const std::vector<ValueSource>& values, const Clustering& c,
                                   const std::vector<int>& mapping, const std::vector<ProbeInfo>& probes, int n_s,
                                   int worker_count, int next_probe_id, double wl, double wu) {
  if (mapping.size() != c.centroids.size()) throw DimensionMismatch("mapping size differs from cluster count");
  if (n_s < 1) throw InputError("number of shifts must be at least 1");
  if (worker_count < 1) throw InputError("worker count must be at least 1");
  MigrationPlan plan;
  std::map<int, const ProbeInfo*> by_id;
  std::map<int, double> old_shift;
  for (const auto& p : probes) {
    by_id[p.id] = &p;
    old_shift[p.id] = p.sigma;
  }

  // Merge clusters that map to the same probe.
  const auto members = c.members();
  std::map<int, Group> groups;
  for (std::size_t j = 0; j < mapping.size(); ++j) {
    auto& g = groups[mapping[j]];
    g.probe = mapping[j];
    g.members.insert(g.members.end(), members[j].begin(), members[j].end());
  }
  for (auto& [id, g] : groups) {
    std::sort(g.members.begin(), g.members.end());
    g.centroid = mean_of(values, g.members);
    plan.shift_updates[id] = g.centroid;
  }
  std::vector<Index> loads(static_cast<std::size_t>(worker_count), 0);
  for (const auto& p : probes) {
    if (!groups.count(p.id)) {
      plan.deletions.push_back(p.id);
      plan.rationale.push_back("probe " + std::to_string(p.id) + " owns no cluster");
    } else {
      ++loads[static_cast<std::size_t>(p.worker % worker_count)];
    }
  }
  // Over the target: drop the probes with the fewest values (ties: higher shift).
  while (static_cast<int>(groups.size()) > n_s) {
    auto victim = groups.begin();
    for (auto it = groups.begin(); it != groups.end(); ++it)
      if (it->second.members.size() < victim->second.members.size() ||
          (it->second.members.size() == victim->second.members.size() && it->second.centroid > victim->second.centroid))
        victim = it;
    plan.deletions.push_back(victim->first);
    plan.shift_updates.erase(victim->first);
    --loads[static_cast<std::size_t>(by_id.at(victim->first)->worker % worker_count)];
    plan.rationale.push_back("probe " + std::to_string(victim->first) + " dropped to restore the shift count");
    groups.erase(victim);
  }

  std::vector<Group> live;
  for (auto& [id, g] : groups) live.push_back(g);
  int next_id = next_probe_id;
  while (static_cast<int>(live.size()) < n_s) {
    // Largest splittable group; ties go to the lower centroid.
    int pick = -1;
    for (int j = 0; j < static_cast<int>(live.size()); ++j) {
      const auto& g = live[static_cast<std::size_t>(j)];
      if (!splittable(values, g)) continue;
      if (pick < 0 || g.members.size() > live[static_cast<std::size_t>(pick)].members.size()) pick = j;
    }
    Insertion ins;
    ins.new_probe_id = next_id++;
    ins.worker = least_loaded(loads);
    ++loads[static_cast<std::size_t>(ins.worker)];
    if (pick >= 0) {
      Group& g = live[static_cast<std::size_t>(pick)];
      std::vector<double> vals;
      for (std::size_t i : g.members) vals.push_back(values[i].value);
      const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
      const auto two = kmeans_1d(vals, 2, {*mn, *mx});
      std::vector<std::size_t> part[2];
      for (std::size_t i = 0; i < vals.size(); ++i) part[two.assignment[i]].push_back(g.members[i]);
      const double old_sigma = old_shift.at(g.probe);
      const int keep = std::abs(two.centroids[0] - old_sigma) <= std::abs(two.centroids[1] - old_sigma) ? 0 : 1;
      Group fresh;
      fresh.probe = ins.new_probe_id;
      fresh.members = part[1 - keep];
      fresh.centroid = two.centroids[static_cast<std::size_t>(1 - keep)];
      g.members = part[keep];
      g.centroid = two.centroids[static_cast<std::size_t>(keep)];
      plan.shift_updates[g.probe] = g.centroid;
      ins.sigma = fresh.centroid;
      old_shift[fresh.probe] = fresh.centroid;
      ins.donor_probe_id = g.probe;
      for (std::size_t i : fresh.members)
        if (values[i].probe_id == g.probe) ins.donor_vector_indices.push_back(values[i].vector_index);
      plan.rationale.push_back("split cluster of probe " + std::to_string(g.probe) + " into " +
                               std::to_string(g.members.size()) + "+" + std::to_string(fresh.members.size()));
      live.push_back(fresh);
    } else {
      // Nothing to split: fill the widest gap between shifts and window edges.
      std::vector<std::pair<double, int>> pts;
      for (const auto& g : live) pts.push_back({g.centroid, g.probe});
      std::sort(pts.begin(), pts.end());
      double best_lo = wl, best_hi = pts.empty() ? wu : pts.front().first;
      int donor = pts.empty() ? (probes.empty() ? -1 : probes.front().id) : pts.front().second;
      for (std::size_t j = 0; j <= pts.size(); ++j) {
        const double lo = j == 0 ? wl : pts[j - 1].first;
        const double hi = j == pts.size() ? wu : pts[j].first;
        if (hi - lo > best_hi - best_lo) {
          best_lo = lo;
          best_hi = hi;
          donor = j == 0 ? pts[0].second : pts[j - 1].second;
        }
      }
      ins.sigma = 0.5 * (best_lo + best_hi);
      ins.donor_probe_id = donor;
      plan.rationale.push_back("no cluster can be split; probe " + std::to_string(ins.new_probe_id) +
                               " fills the widest gap");
      Group fresh;
      fresh.probe = ins.new_probe_id;
      fresh.centroid = ins.sigma;
      old_shift[fresh.probe] = ins.sigma;
      live.push_back(fresh);
    }
    plan.insertions.push_back(std::move(ins));
  }
  return plan;
}

double partial_trace(const Matrix& x, const SymMatrix& a) {
  if (x.rows() != a.order()) throw DimensionMismatch("partial trace: vector rows differ from matrix order");
  return (x.array() * (a.dense() * x).array()).sum();
}

TraceCheck compare_traces(double eta_prev, double eta_cur, double rel_tol, double floor) {
  TraceCheck t{eta_prev, eta_cur, false};
  t.dissimilar = std::abs(eta_cur - eta_prev) > rel_tol * std::max(std::abs(eta_prev), floor);
  return t;
}

TraceCheck trace_similarity(const Matrix& x_prev, const SymMatrix& a_prev, const SymMatrix& a_cur, double rel_tol,
                            double floor) {
  return compare_traces(partial_trace(x_prev, a_prev), partial_trace(x_prev, a_cur), rel_tol, floor);
}

RecoveryShifts recover_missing(const DosModel& m, const std::vector<MissingSlice>& missing, double target,
                               ShiftScheme scheme) {
  if (!(target > 0)) throw InputError("per-probe target must be positive");
  RecoveryShifts out;
  for (const auto& s : missing) {
    if (!(s.lower < s.upper)) throw InputError("missing slice has empty bounds");
    const double w = s.upper - s.lower;
    const Index cap = std::max<Index>(1, static_cast<Index>(std::ceil(static_cast<double>(s.n_exact) / target - 1e-9)));
    const Index n_omega = std::max<Index>(101, 10 * m.size());
    auto iv = dos_cluster(m, s.lower, s.upper, n_omega);
    if (static_cast<Index>(iv.size()) > cap) iv = enforce_shift_count(iv, cap, m).intervals;
    // Keep new shifts off the bounding shifts.
    const auto placed = place_shifts(iv, m, scheme, s.lower + 1e-6 * w, s.upper - 1e-6 * w);
    for (double x : placed.shifts) {
      out.shifts.push_back(x);
      out.for_slice.push_back(s.slice);
    }
  }
  std::vector<std::size_t> order(out.shifts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return out.shifts[a] < out.shifts[b]; });
  RecoveryShifts sorted;
  for (std::size_t i : order) {
    sorted.shifts.push_back(out.shifts[i]);
    sorted.for_slice.push_back(out.for_slice[i]);
  }
  return sorted;
}

RecoveryShifts recover_missing(const MatrixPencil& p, const std::vector<MissingSlice>& missing, Index steps,
                               std::uint64_t seed, double target, ShiftScheme scheme) {
  if (missing.empty()) return {};
  const auto m = estimate_dos(p, std::min(steps, p.order()), seed);
  return recover_missing(m, missing, target, scheme);
}

}  // namespace specslice
