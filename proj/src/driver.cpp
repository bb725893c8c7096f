#include "specslice/driver.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace specslice {

Traffic& Traffic::operator+=(const Traffic& o) {
  summary_reals += o.summary_reals;
  summary_ints += o.summary_ints;
  recovery_summary_reals += o.recovery_summary_reals;
  trace_reals += o.trace_reals;
  transfer_reals += o.transfer_reals;
  final_gather_reals += o.final_gather_reals;
  return *this;
}

// Scheduling ---------------------------------------------------------------

std::vector<Index> Schedule::loads() const {
  std::vector<Index> l(static_cast<std::size_t>(worker_count), 0);
  for (const auto& [id, w] : worker_of) ++l[static_cast<std::size_t>(w)];
  return l;
}

bool Schedule::balanced() const {
  const auto l = loads();
  const auto [mn, mx] = std::minmax_element(l.begin(), l.end());
  return *mx - *mn <= 0;
}

int Schedule::insert(int probe_id) {
  const int w = least_loaded(loads());
  worker_of[probe_id] = w;
  return w;
}

void Schedule::remove(int probe_id) { worker_of.erase(probe_id); }

std::vector<int> Schedule::probes_of(int worker) const {
  std::vector<int> out;
  for (const auto& [id, w] : worker_of)
    if (w == worker) out.push_back(id);
  return out;
}

Schedule schedule_probes(const std::vector<int>& ids, int worker_count) {
  if (worker_count < 1) throw InputError("worker count must be at least 1");
  Schedule s;
  s.worker_count = worker_count;
  for (std::size_t j = 0; j < ids.size(); ++j) s.worker_of[ids[j]] = static_cast<int>(j % static_cast<std::size_t>(worker_count));
  return s;
}

// Probe rounds ---------------------------------------------------------------

namespace {

SpectralProbe run_task(const MatrixPencil& p, const ProbeTask& t, const ProbeConfig& cfg, std::uint64_t seed,
                       int iteration, double width) {
  auto rng = probe_rng(seed, t.probe_id, iteration);
  Matrix v0 = seed_block(t.previous, cfg.basis_dim, p.order(), rng);
  return si_subspace_iteration(p, t.sigma, std::move(v0), cfg, t.probe_id, rng, width);
}

}  // namespace

std::vector<SpectralProbe> run_probe_round(const MatrixPencil& p, const std::vector<ProbeTask>& tasks,
                                           const Schedule& sched, const ProbeConfig& cfg, std::uint64_t seed,
                                           int iteration, double width) {
  std::vector<SpectralProbe> out(tasks.size());
  std::vector<std::vector<std::size_t>> per_worker(static_cast<std::size_t>(sched.worker_count));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto it = sched.worker_of.find(tasks[i].probe_id);
    if (it == sched.worker_of.end()) throw InputError("probe " + std::to_string(tasks[i].probe_id) + " has no worker");
    per_worker[static_cast<std::size_t>(it->second)].push_back(i);
  }
  const int nw = sched.worker_count;
  std::vector<std::string> errors(static_cast<std::size_t>(nw));
  std::vector<int> error_kind(static_cast<std::size_t>(nw), 0);
#pragma omp parallel for schedule(static, 1) num_threads(nw) if (nw > 1)
  for (int w = 0; w < nw; ++w) {
    try {
      for (std::size_t i : per_worker[static_cast<std::size_t>(w)]) out[i] = run_task(p, tasks[i], cfg, seed, iteration, width);
    } catch (const SingularPivot& e) {
      errors[static_cast<std::size_t>(w)] = e.what();
      error_kind[static_cast<std::size_t>(w)] = 1;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(w)] = e.what();
      error_kind[static_cast<std::size_t>(w)] = 2;
    }
  }
  for (int w = 0; w < nw; ++w) {
    if (error_kind[static_cast<std::size_t>(w)] == 1) throw SingularPivot(errors[static_cast<std::size_t>(w)]);
    if (error_kind[static_cast<std::size_t>(w)] == 2) throw Error(errors[static_cast<std::size_t>(w)]);
  }
  return out;
}

std::vector<SpectralProbe> run_probe_round_reference(const MatrixPencil& p, const std::vector<ProbeTask>& tasks,
                                                     const ProbeConfig& cfg, std::uint64_t seed, int iteration,
                                                     double width) {
  std::vector<SpectralProbe> out;
  for (const auto& t : tasks) out.push_back(run_task(p, t, cfg, seed, iteration, width));
  return out;
}

Vector scaled_residuals(const MatrixPencil& p, const SpectralProbe& probe) {
  const double na = p.a().frobenius_norm(), nb = p.b().frobenius_norm();
  Vector out(probe.ritz_values.size());
  for (Index j = 0; j < out.size(); ++j) {
    const double scale = (na + std::abs(probe.ritz_values(j)) * nb) * probe.ritz_vectors.col(j).norm();
    out(j) = scale > 0 ? probe.residual_norms(j) / scale : probe.residual_norms(j);
  }
  return out;
}

std::vector<RitzSummary> gather_summaries(const std::vector<SpectralProbe>& probes, const std::vector<Vector>& scaled,
                                          Traffic* traffic) {
  std::vector<RitzSummary> out;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    const Vector& res = scaled.empty() ? p.residual_norms : scaled[i];
    RitzSummary s;
    s.probe_id = p.probe_id;
    s.sigma = p.sigma;
    s.inertia_neg = p.inertia_neg;
    s.values.assign(p.ritz_values.data(), p.ritz_values.data() + p.ritz_values.size());
    s.residuals.assign(res.data(), res.data() + res.size());
    if (traffic) {
      // The shift is replicated state; a perturbation travels as its count.
      traffic->summary_reals += 2 * p.ritz_values.size();
      traffic->summary_ints += 4;
    }
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const RitzSummary& a, const RitzSummary& b) {
    return a.sigma != b.sigma ? a.sigma < b.sigma : a.probe_id < b.probe_id;
  });
  return out;
}

void SolverConfig::validate() const {
  if (!window && n_lowest < 1) throw InputError("give either a window or a number of lowest eigenvalues");
  if (window && n_lowest > 0) throw InputError("window and lowest-n mode are exclusive");
  if (window && !(window->first < window->second)) throw InputError("window must satisfy lower < upper");
  if (n_shifts < 1) throw InputError("number of shifts must be at least 1");
  if (probe_dim < 0) throw InputError("probe dimension must be non-negative");
  if (subspace_iters < 1) throw InputError("subspace iterations must be at least 1");
  if (!(tol > 0)) throw InputError("tolerance must be positive");
  if (lanczos_steps < 1) throw InputError("Lanczos steps must be at least 1");
  if (worker_count < 1) throw InputError("worker count must be at least 1");
  if (max_outer_iters < 1) throw InputError("outer iteration cap must be at least 1");
  if (!(trace_rel_tol > 0)) throw InputError("trace tolerance must be positive");
  if (recovery_rounds < 0) throw InputError("recovery rounds must be non-negative");
  if (!initial_shifts.empty() && static_cast<Index>(initial_shifts.size()) != n_shifts)
    throw InputError("initial shifts must number exactly n_shifts");
}

// Window bracketing ----------------------------------------------------------

namespace {

Index neg_count(const MatrixPencil& p, double x) { return factor_ldlt(p.shifted(x)).inertia().n_neg; }

}  // namespace

std::pair<double, double> bracket_lowest(const MatrixPencil& p, const DosModel& m, Index n) {
  if (n < 1 || n > p.order()) throw InputError("number of lowest eigenvalues must lie in [1, N]");
  const Vector& th = m.thetas();
  const double tmin = th.minCoeff(), tmax = th.maxCoeff();
  const double span = std::max(tmax - tmin, 1e-12 * std::max(1.0, std::abs(tmax)));
  Index imin = 0, imax = 0;
  th.minCoeff(&imin);
  th.maxCoeff(&imax);
  double lo = tmin - 3 * m.widths()(imin) - 0.01 * span;
  for (int t = 0; neg_count(p, lo) > 0; ++t) {
    if (t > 60) throw Error("could not place the window below the spectrum");
    lo -= span * std::ldexp(0.1, t);
  }
  double hi;
  const double target = static_cast<double>(n) + 0.5;
  double top = tmax + 3 * m.widths()(imax) + 0.01 * span;
  if (cdos_eval(m, top) <= target) {
    hi = top;
  } else {
    double a = lo, b = top;
    for (int it = 0; it < 200 && b - a > 1e-15 * span; ++it) {
      const double mid = 0.5 * (a + b);
      (cdos_eval(m, mid) < target ? a : b) = mid;
    }
    hi = 0.5 * (a + b);
  }
  Index c_hi = neg_count(p, hi);
  for (int t = 0; c_hi < n; ++t) {
    if (t > 60) throw Error("could not place the window above the lowest eigenvalues");
    hi += span * std::ldexp(0.01, t);
    c_hi = neg_count(p, hi);
  }
  // A one-vector DOS can overshoot badly; tighten by inertia bisection.
  double a = lo;
  for (int it = 0; it < 60 && c_hi > n; ++it) {
    const double mid = 0.5 * (a + hi);
    const Index c = neg_count(p, mid);
    if (c < n) {
      a = mid;
    } else {
      hi = mid;
      c_hi = c;
    }
  }
  return {lo, hi};
}

// Outer loop -------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

struct Slot {
  int id = 0;
  double sigma = 0.0;
  Provenance prov = Provenance::dos;
  Matrix vectors;  // previous Ritz vectors, worker-local
};

struct Timer {
  std::map<std::string, double>& sink;
  std::string key;
  Clock::time_point start = Clock::now();
  ~Timer() { sink[key] += std::chrono::duration<double>(Clock::now() - start).count(); }
};

void normalize(std::vector<Slot>& slots, double wl, double wu) {
  std::stable_sort(slots.begin(), slots.end(),
                   [](const Slot& a, const Slot& b) { return a.sigma != b.sigma ? a.sigma < b.sigma : a.id < b.id; });
  const double nudge = 1e-12 * (wu - wl);
  for (std::size_t j = 0; j < slots.size(); ++j) {
    slots[j].sigma = std::clamp(slots[j].sigma, wl + nudge, wu - nudge);
    if (j > 0 && !(slots[j].sigma > slots[j - 1].sigma)) slots[j].sigma = slots[j - 1].sigma + nudge;
  }
}

// A shift sitting on a converged eigenvalue makes every solve carry a huge,
// rounding-driven component along that eigenvector, and the block collapses.
// Shifts closer than kOffEigen of the local gap move to that distance.
constexpr double kOffEigen = 0.1;

void keep_off_eigenvalues(std::vector<Slot>& slots, const std::vector<Candidate>& validated, double wl, double wu,
                          int it, std::ostream& log) {
  if (validated.empty()) return;
  std::vector<double> lam;
  for (const auto& c : validated) lam.push_back(c.value);
  std::sort(lam.begin(), lam.end());
  const double same = 1e-6 * (wu - wl);
  for (auto& s : slots) {
    const auto hi = std::lower_bound(lam.begin(), lam.end(), s.sigma);
    std::size_t j = static_cast<std::size_t>(hi - lam.begin());
    if (j == lam.size() || (j > 0 && s.sigma - lam[j - 1] < lam[j] - s.sigma)) --j;
    const double l = lam[j];
    double gap = wu - wl;
    for (double x : lam)
      if (std::abs(x - l) > same) gap = std::min(gap, std::abs(x - l));
    const double d = kOffEigen * gap;
    if (std::abs(s.sigma - l) >= d) continue;
    const double moved = s.sigma >= l ? l + d : l - d;
    if (!(moved > wl && moved < wu)) continue;
    log << "iter " << it << " nudge probe=" << s.id << " sigma=" << s.sigma << " -> " << moved << " (eigenvalue "
        << l << ")\n";
    s.sigma = moved;
  }
}

const char* source_name(Provenance p) { return to_string(p); }

}  // namespace

ResultSet scf_solve(const PencilSequence& seq, const SolverConfig& cfg) {
  cfg.validate();
  if (!seq.has(0)) throw InputError("pencil sequence is empty");
  const bool fixed_mode = seq.declared_length() && *seq.declared_length() == 1;
  ResultSet res;
  auto& timing = res.timing;
  const Index ns = cfg.n_shifts;

  MatrixPencil pencil = seq.pencil(0);
  const Index n = pencil.order();
  res.order = n;
  const Index steps = std::min(cfg.lanczos_steps, n);
  double wl = 0, wu = 0;
  std::vector<Slot> slots;
  Schedule sched;
  int next_id = 0;
  Provenance last_source = Provenance::dos;
  std::string source_label;
  ProbeConfig pcfg;
  pcfg.subspace_iters = cfg.subspace_iters;

  // Iteration 0 partition.
  {
    std::optional<DosModel> m;
    auto model = [&]() -> const DosModel& {
      if (!m) {
        Timer t{timing, "dos"};
        m = estimate_dos(pencil, steps, cfg.global_seed, cfg.width_rule);
      }
      return *m;
    };
    if (cfg.window) {
      wl = cfg.window->first;
      wu = cfg.window->second;
    } else {
      Timer t{timing, "window"};
      std::tie(wl, wu) = bracket_lowest(pencil, model(), cfg.n_lowest);
    }
    std::vector<double> shifts;
    if (!cfg.initial_shifts.empty()) {
      shifts = cfg.initial_shifts;
      source_label = "user";
      ShiftSet check{shifts, wl, wu, std::vector<Provenance>(shifts.size(), Provenance::dos)};
      check_shift_set(check);
    } else {
      PartitionOptions opt;
      opt.scheme = cfg.partition;
      opt.shift_scheme = cfg.shift_scheme;
      const auto rep = [&] {
        Timer t{timing, "partition"};
        return partition_window(model(), wl, wu, ns, opt);
      }();
      res.partition_report = rep.text();
      shifts = rep.shifts.shifts;
      source_label = "dos";
    }
    std::vector<int> ids;
    for (double s : shifts) {
      slots.push_back({next_id, s, Provenance::dos, Matrix()});
      ids.push_back(next_id++);
    }
    sched = schedule_probes(ids, cfg.worker_count);
  }
  res.window_lower = wl;
  res.window_upper = wu;

  Index neg_lo = 0, neg_hi = 0;
  {
    Timer t{timing, "inertia"};
    neg_lo = neg_count(pencil, wl);
    neg_hi = neg_count(pencil, wu);
  }
  const Index n_e = neg_hi - neg_lo;
  res.window_count = n_e;
  const Index k = std::min<Index>(
      n, cfg.probe_dim > 0 ? cfg.probe_dim
                           : std::max<Index>(10, static_cast<Index>(std::ceil(10.0 * static_cast<double>(n_e) /
                                                                              static_cast<double>(ns)))));
  pcfg.basis_dim = k;
  res.probe_dim = k;
  const double per_probe_target = std::max(1.0, static_cast<double>(n_e) / static_cast<double>(ns));

  std::ostringstream mlog;
  std::vector<SpectralProbe> round;
  std::vector<Candidate> validated;
  ValidationReport report;
  bool pending_dissimilar = false;
  double pending_eta_prev = 0, pending_eta_cur = 0;

  for (int it = 0;; ++it) {
    IterationRecord rec;
    rec.iter = it;
    rec.shift_source = it == 0 ? source_label : source_name(last_source);
    rec.dissimilar = pending_dissimilar;
    rec.eta_prev = pending_eta_prev;
    rec.eta_cur = pending_eta_cur;
    const double width = wu - wl;

    if (it > 0 && !fixed_mode) {
      Timer t{timing, "inertia"};
      neg_lo = neg_count(pencil, wl);
      neg_hi = neg_count(pencil, wu);
    }
    if (it > 0) keep_off_eigenvalues(slots, validated, wl, wu, it, mlog);
    normalize(slots, wl, wu);
    for (const auto& s : slots) {
      rec.shifts.push_back(s.sigma);
      rec.probe_ids.push_back(s.id);
    }

    // Main probe round.
    std::vector<ProbeTask> tasks;
    for (const auto& s : slots) tasks.push_back({s.id, s.sigma, s.vectors.cols() > 0 ? &s.vectors : nullptr});
    {
      Timer t{timing, "probes"};
      round = cfg.serial_reference ? run_probe_round_reference(pencil, tasks, pcfg, cfg.global_seed, it, width)
                                   : run_probe_round(pencil, tasks, sched, pcfg, cfg.global_seed, it, width);
    }
    std::vector<Vector> scaled;
    for (const auto& pr : round) scaled.push_back(scaled_residuals(pencil, pr));
    auto summaries = gather_summaries(round, scaled, &rec.traffic);
    {
      Timer t{timing, "validate"};
      report = validate_all(summaries, wl, wu, neg_lo, neg_hi);
    }
    rec.n_missing = report.total_missing();
    for (int j : report.missing_slices()) {
      const auto& v = report.verdicts[static_cast<std::size_t>(j)];
      const auto& s = report.slices[static_cast<std::size_t>(j)];
      rec.missing.push_back({j, s.lower, s.upper, v.n_exact, v.n_cand});
    }

    // Recovery rounds on the same pencil.
    while (report.total_missing() > 0) {
      if (rec.recovery_rounds >= cfg.recovery_rounds) {
        std::vector<int> ids;
        std::vector<std::ptrdiff_t> deficits;
        for (const auto& v : report.verdicts)
          if (v.status == SliceStatus::missing) {
            ids.push_back(v.slice);
            deficits.push_back(v.missing);
          }
        res.history.push_back(rec);
        throw RecoveryExhausted("missing eigenvalues remain after " + std::to_string(cfg.recovery_rounds) +
                                    " recovery rounds",
                                ids, deficits);
      }
      Timer t{timing, "recovery"};
      std::vector<MissingSlice> missing;
      for (const auto& v : report.verdicts)
        if (v.status == SliceStatus::missing) {
          const auto& s = report.slices[static_cast<std::size_t>(v.slice)];
          missing.push_back({v.slice, s.lower, s.upper, v.n_exact, v.missing});
        }
      const std::uint64_t rseed = cfg.global_seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(it * 8 + rec.recovery_rounds + 1));
      const auto add = recover_missing(pencil, missing, steps, rseed, per_probe_target, cfg.shift_scheme);
      std::vector<ProbeTask> extra;
      for (double s : add.shifts) {
        slots.push_back({next_id, s, Provenance::inserted, Matrix()});
        sched.insert(next_id);
        extra.push_back({next_id, s, nullptr});
        rec.recovery_shifts.push_back(s);
        mlog << "iter " << it << " recovery probe=" << next_id << " sigma=" << s << "\n";
        ++next_id;
      }
      auto more = cfg.serial_reference ? run_probe_round_reference(pencil, extra, pcfg, cfg.global_seed, it, width)
                                       : run_probe_round(pencil, extra, sched, pcfg, cfg.global_seed, it, width);
      for (auto& pr : more) {
        scaled.push_back(scaled_residuals(pencil, pr));
        rec.traffic.recovery_summary_reals += 2 * pr.ritz_values.size();
        round.push_back(std::move(pr));
      }
      summaries = gather_summaries(round, scaled);
      report = validate_all(summaries, wl, wu, neg_lo, neg_hi);
      ++rec.recovery_rounds;
    }
    validated = assemble_validated(report.verdicts);

    // Keep each probe's vectors (worker-local) and factored shift.
    std::map<int, const SpectralProbe*> by_id;
    for (const auto& pr : round) by_id[pr.probe_id] = &pr;
    for (auto& s : slots) s.vectors = by_id.at(s.id)->ritz_vectors;

    rec.n_validated = static_cast<Index>(validated.size());
    for (const auto& c : validated) {
      rec.values.push_back(c.value);
      rec.residuals.push_back(c.residual);
      rec.max_residual = std::max(rec.max_residual, c.residual);
    }

    const bool converged = fixed_mode ? rec.max_residual < cfg.tol : !seq.has(static_cast<std::size_t>(it + 1));
    const bool last = converged || it + 1 >= cfg.max_outer_iters;
    if (last) {
      rec.live_probes_after = static_cast<Index>(slots.size());
      res.traffic_total += rec.traffic;
      res.history.push_back(std::move(rec));
      res.status = converged ? SolveStatus::converged : SolveStatus::not_converged;
      res.iterations = it + 1;
      break;
    }

    // Prepare the next iteration.
    MatrixPencil next = fixed_mode ? pencil : seq.pencil(static_cast<std::size_t>(it + 1));
    pending_dissimilar = false;
    pending_eta_prev = pending_eta_cur = 0;
    if (!fixed_mode) {
      Timer t{timing, "trace"};
      // Each probe adds x^T A x over its validated vectors; one all-reduce.
      double ep = 0, ec = 0;
      for (const auto& c : validated) {
        const Matrix x = by_id.at(c.source_probe)->ritz_vectors.col(c.vector_index);
        ep += partial_trace(x, pencil.a());
        ec += partial_trace(x, next.a());
      }
      rec.traffic.trace_reals += 2 * static_cast<Index>(sched.worker_count);
      const auto tc = compare_traces(ep, ec, cfg.trace_rel_tol);
      pending_dissimilar = tc.dissimilar;
      pending_eta_prev = ep;
      pending_eta_cur = ec;
    }

    if (pending_dissimilar) {
      Timer t{timing, "dos"};
      const auto m = estimate_dos(next, steps, cfg.global_seed + static_cast<std::uint64_t>(it + 1), cfg.width_rule);
      if (!cfg.window) std::tie(wl, wu) = bracket_lowest(next, m, cfg.n_lowest);
      PartitionOptions opt;
      opt.scheme = cfg.partition;
      opt.shift_scheme = cfg.shift_scheme;
      const auto rep = partition_window(m, wl, wu, ns, opt);
      std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) { return a.sigma < b.sigma; });
      while (static_cast<Index>(slots.size()) > ns) {
        sched.remove(slots.back().id);
        mlog << "iter " << it << " delete probe=" << slots.back().id << " (fresh partition)\n";
        slots.pop_back();
      }
      for (std::size_t j = 0; j < slots.size(); ++j) {
        slots[j].sigma = rep.shifts.shifts[j];
        slots[j].prov = Provenance::dos;
      }
      last_source = Provenance::dos;
      mlog << "iter " << it << " dissimilar eta_prev=" << pending_eta_prev << " eta_cur=" << pending_eta_cur
           << " -> fresh partition\n";
    } else if ((cfg.kmeans || static_cast<Index>(slots.size()) > ns) && static_cast<Index>(validated.size()) >= ns) {
      Timer t{timing, "migrate"};
      std::vector<ValueSource> vals;
      std::vector<double> xs;
      for (const auto& c : validated) {
        vals.push_back({c.value, c.source_probe, c.vector_index});
        xs.push_back(c.value);
      }
      std::vector<double> init;
      if (last_source != Provenance::dos && static_cast<Index>(slots.size()) == ns) {
        for (const auto& s : slots) init.push_back(s.sigma);
      } else {
        auto rng = probe_rng(cfg.global_seed, -1, it);
        init = kmeans_pp_init(xs, static_cast<int>(ns), rng).centroids;
      }
      const auto clus = kmeans_1d(xs, static_cast<int>(init.size()), init);
      std::vector<ProbeInfo> info;
      for (const auto& s : slots) info.push_back({s.id, s.sigma, sched.worker_of.at(s.id)});
      const auto mapping = map_clusters_to_probes(clus, vals, info);
      const auto plan = build_migration_plan(vals, clus, mapping, info, static_cast<int>(ns), sched.worker_count, next_id,
                                             wl, wu);
      rec.migration = plan.text();
      std::istringstream lines(rec.migration);
      for (std::string line; std::getline(lines, line);) mlog << "iter " << it << " " << line << "\n";
      for (auto& s : slots) {
        const auto u = plan.shift_updates.find(s.id);
        if (u != plan.shift_updates.end()) {
          s.sigma = u->second;
          s.prov = Provenance::kmeans;
        }
      }
      for (int id : plan.deletions) {
        sched.remove(id);
        slots.erase(std::remove_if(slots.begin(), slots.end(), [&](const Slot& s) { return s.id == id; }), slots.end());
      }
      for (const auto& ins : plan.insertions) {
        Slot s{ins.new_probe_id, ins.sigma, Provenance::inserted, Matrix()};
        const auto donor = by_id.find(ins.donor_probe_id);
        if (donor != by_id.end() && !ins.donor_vector_indices.empty()) {
          s.vectors.resize(n, static_cast<Index>(ins.donor_vector_indices.size()));
          for (std::size_t c = 0; c < ins.donor_vector_indices.size(); ++c)
            s.vectors.col(static_cast<Index>(c)) = donor->second->ritz_vectors.col(ins.donor_vector_indices[c]);
          rec.traffic.transfer_reals += s.vectors.size();
        }
        sched.worker_of[s.id] = ins.worker;
        slots.push_back(std::move(s));
      }
      next_id = std::max(next_id, next_id + static_cast<int>(plan.insertions.size()));
      last_source = Provenance::kmeans;
    }
    rec.live_probes_after = static_cast<Index>(slots.size());
    res.traffic_total += rec.traffic;
    res.history.push_back(std::move(rec));
    pencil = std::move(next);
  }

  // Final gather of eigenvectors.
  std::map<int, const SpectralProbe*> by_id;
  for (const auto& pr : round) by_id[pr.probe_id] = &pr;
  res.eigenvectors.resize(n, static_cast<Index>(validated.size()));
  for (std::size_t j = 0; j < validated.size(); ++j) {
    const auto& c = validated[j];
    const auto* pr = by_id.at(c.source_probe);
    res.eigenvalues.push_back(c.value);
    res.scaled_residuals.push_back(c.residual);
    res.residual_norms.push_back(pr->residual_norms(c.vector_index));
    res.source_probe.push_back(c.source_probe);
    res.source_shift.push_back(c.source_shift);
    res.eigenvectors.col(static_cast<Index>(j)) = pr->ritz_vectors.col(c.vector_index);
  }
  res.traffic_total.final_gather_reals += res.eigenvectors.size();
  res.validation_report = report.json();
  res.migration_log = mlog.str();
  return res;
}

// Output -----------------------------------------------------------------------

EmitPaths paths_for_prefix(const std::string& prefix, bool with_vectors) {
  EmitPaths p;
  p.json = prefix + ".json";
  p.history_csv = prefix + ".history.csv";
  p.migration_log = prefix + ".migration.log";
  if (with_vectors) p.vectors = prefix + ".vectors.bin";
  return p;
}

std::string results_json(const ResultSet& r) {
  using nlohmann::json;
  json hist = json::array();
  for (const auto& h : r.history) {
    json missing = json::array();
    for (const auto& m : h.missing)
      missing.push_back({{"slice", m.slice}, {"lower", m.lower}, {"upper", m.upper}, {"n_exact", m.n_exact},
                         {"n_cand", m.n_cand}});
    hist.push_back({{"iter", h.iter},
                    {"max_residual", h.max_residual},
                    {"n_validated", h.n_validated},
                    {"n_missing", h.n_missing},
                    {"missing", missing},
                    {"recovery_rounds", h.recovery_rounds},
                    {"shifts", h.shifts},
                    {"shift_source", h.shift_source},
                    {"dissimilar", h.dissimilar},
                    {"eta_prev", h.eta_prev},
                    {"eta_cur", h.eta_cur},
                    {"live_probes_after", h.live_probes_after},
                    {"traffic",
                     {{"summary_reals", h.traffic.summary_reals},
                      {"summary_ints", h.traffic.summary_ints},
                      {"recovery_summary_reals", h.traffic.recovery_summary_reals},
                      {"trace_reals", h.traffic.trace_reals},
                      {"transfer_reals", h.traffic.transfer_reals}}}});
  }
  json j = {{"status", r.status == SolveStatus::converged ? "converged" : "not_converged"},
            {"iterations", r.iterations},
            {"order", r.order},
            {"window", {r.window_lower, r.window_upper}},
            {"window_count", r.window_count},
            {"probe_dim", r.probe_dim},
            {"eigenvalues", r.eigenvalues},
            {"residual_norms", r.residual_norms},
            {"scaled_residuals", r.scaled_residuals},
            {"source_probe", r.source_probe},
            {"source_shift", r.source_shift},
            {"timing", r.timing},
            {"final_gather_reals", r.traffic_total.final_gather_reals},
            {"history", hist}};
  return j.dump(2);
}

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw InputError("cannot open " + path + " for writing");
  return f;
}

}  // namespace

void emit_results(const ResultSet& r, const EmitPaths& paths) {
  {
    auto f = open_out(paths.json);
    f << results_json(r) << "\n";
    if (!f) throw InputError("write failed: " + paths.json);
  }
  {
    auto f = open_out(paths.history_csv);
    f << "iter,max_residual,n_validated,n_missing\n";
    char buf[128];
    for (const auto& h : r.history) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%td,%td\n", h.iter, h.max_residual, h.n_validated, h.n_missing);
      f << buf;
    }
    if (!f) throw InputError("write failed: " + paths.history_csv);
  }
  if (!paths.migration_log.empty()) {
    auto f = open_out(paths.migration_log);
    f << r.migration_log;
  }
  if (!paths.vectors.empty()) write_vectors(paths.vectors, r.eigenvectors);
}

void write_vectors(const std::string& path, const Matrix& x) {
  auto f = open_out(path, std::ios::out | std::ios::binary);
  const auto put_u32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  f.write("SISV", 4);
  put_u32(static_cast<std::uint32_t>(x.rows()));
  put_u32(static_cast<std::uint32_t>(x.cols()));
  put_u32(0);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      std::uint64_t bits;
      const double v = x(i, j);
      std::memcpy(&bits, &v, 8);
      unsigned char b[8];
      for (int s = 0; s < 8; ++s) b[s] = static_cast<unsigned char>(bits >> (8 * s));
      f.write(reinterpret_cast<const char*>(b), 8);
    }
  if (!f) throw InputError("write failed: " + path);
}

Matrix read_vectors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  unsigned char h[16];
  if (!f.read(reinterpret_cast<char*>(h), 16) || std::memcmp(h, "SISV", 4) != 0)
    throw InputError(path + ": not a vector block");
  const auto u32 = [&](int o) {
    return static_cast<std::uint32_t>(h[o]) | static_cast<std::uint32_t>(h[o + 1]) << 8 |
           static_cast<std::uint32_t>(h[o + 2]) << 16 | static_cast<std::uint32_t>(h[o + 3]) << 24;
  };
  Matrix x(u32(4), u32(8));
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      unsigned char b[8];
      if (!f.read(reinterpret_cast<char*>(b), 8)) throw InputError(path + ": truncated vector block");
      std::uint64_t bits = 0;
      for (int s = 0; s < 8; ++s) bits |= static_cast<std::uint64_t>(b[s]) << (8 * s);
      double v;
      std::memcpy(&v, &bits, 8);
      x(i, j) = v;
    }
  return x;
}

}  // namespace specslice
