#include "specslice/partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <utility>

namespace specslice {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::dos: return "dos";
    case Provenance::kmeans: return "kmeans";
    case Provenance::inserted: return "inserted";
  }
  return "?";
}

void check_shift_set(const ShiftSet& s) {
  if (s.provenance.size() != s.shifts.size()) throw InputError("shift set provenance length mismatch");
  for (std::size_t i = 0; i < s.shifts.size(); ++i) {
    if (!(s.shifts[i] > s.window_lower && s.shifts[i] < s.window_upper))
      throw InputError("shift " + std::to_string(s.shifts[i]) + " lies outside the window");
    if (i > 0 && !(s.shifts[i] > s.shifts[i - 1])) throw InputError("shifts are not strictly ascending");
  }
}

namespace {

SpectralInterval make_interval(const DosModel& m, double l, double u) { return {l, u, count(m, l, u)}; }

// Smallest w in [lo, hi] with Phi(w) >= target. Each round tries a Newton
// step (when phi >= 1e-12) and then bisects the remaining bracket.
double lower_crossing(const DosModel& m, double target, double lo, double hi) {
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max({std::abs(lo), std::abs(hi), 1.0}); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = cdos_eval(m, mid) - target;
    if (f >= 0.0) hi = mid; else lo = mid;
    const double d = dos_eval(m, mid);
    if (d >= 1e-12) {
      const double nw = mid - f / d;
      if (nw > lo && nw < hi) {
        if (cdos_eval(m, nw) >= target) hi = nw; else lo = nw;
      }
    }
  }
  return hi;
}

// Largest w in [lo, hi] with Phi(w) <= target.
double upper_crossing(const DosModel& m, double target, double lo, double hi) {
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max({std::abs(lo), std::abs(hi), 1.0}); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdos_eval(m, mid) <= target) lo = mid; else hi = mid;
  }
  return lo;
}

// Root of Phi(w) = target inside (lo, hi). A plateau wider than half of
// `span` yields its midpoint.
double cdos_root(const DosModel& m, double target, double lo, double hi, double span) {
  const double tol = 1e-6;
  const double left = lower_crossing(m, target - tol, lo, hi);
  const double right = upper_crossing(m, target + tol, lo, hi);
  if (right - left > 0.5 * span) return 0.5 * (left + right);
  return std::clamp(lower_crossing(m, target, lo, hi), lo, hi);
}

}  // namespace

std::vector<SpectralInterval> cdos_uniform_partition(const DosModel& m, double a, double b, double k) {
  if (!(k >= 1.0)) throw InputError("per-slice target K must be at least 1");
  if (!(a < b)) throw InputError("partition window must satisfy a < b");
  const double gamma = count(m, a, b).gamma;
  if (gamma < k) throw InputError("window holds fewer estimated eigenvalues than K");
  const Index ns = std::max<Index>(1, static_cast<Index>(std::ceil(gamma / k - 1e-9)));
  const double base = cdos_eval(m, a);
  std::vector<double> cuts{a};
  for (Index j = 1; j < ns; ++j) {
    const double r = cdos_root(m, base + k * static_cast<double>(j), cuts.back(), b, b - a);
    cuts.push_back(std::max(r, cuts.back()));
  }
  cuts.push_back(b);
  std::vector<SpectralInterval> out;
  for (std::size_t j = 0; j + 1 < cuts.size(); ++j) out.push_back(make_interval(m, cuts[j], cuts[j + 1]));
  return out;
}

std::vector<SpectralInterval> dos_cluster(const DosModel& m, double a, double b, Index n_omega) {
  if (n_omega < 3) throw InputError("dos_cluster needs at least 3 grid points");
  if (!(a < b)) throw InputError("dos_cluster needs a < b");
  const DosGrid g = evaluate_grid(m, a, b, n_omega);
  const Vector& phi = g.dos;
  const Index n = n_omega;

  // Maximizers: strict against both neighbors (one-sided at the ends);
  // a plateau counts once, at its middle index.
  std::vector<Index> maxima;
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j + 1 < n && phi(j + 1) == phi(i)) ++j;
    const bool left_ok = i == 0 || phi(i - 1) < phi(i);
    const bool right_ok = j == n - 1 || phi(j + 1) < phi(i);
    if (left_ok && right_ok && !(i == 0 && j == n - 1)) maxima.push_back((i + j) / 2);
    i = j + 1;
  }
  if (maxima.size() <= 1) return {make_interval(m, a, b)};

  std::vector<double> mu{a};
  for (std::size_t c = 0; c + 1 < maxima.size(); ++c) {
    Index best = maxima[c] + 1;
    for (Index i = maxima[c] + 1; i < maxima[c + 1]; ++i)
      if (phi(i) < phi(best)) best = i;
    mu.push_back(g.omega(best));
  }
  mu.push_back(b);

  std::vector<SpectralInterval> out;
  for (std::size_t j = 0; j + 1 < mu.size(); ++j) {
    const double l = mu[j], u = mu[j + 1];
    if (!(u > l)) continue;
    bool has_ritz = false;
    for (Index t = 0; t < m.size() && !has_ritz; ++t) {
      const double th = m.thetas()(t);
      has_ritz = (j == 0 ? th >= l : th > l) && th <= u;
    }
    if (has_ritz) out.push_back(make_interval(m, l, u));
  }
  if (out.empty()) return {make_interval(m, a, b)};
  return out;
}

namespace {

bool touching(const SpectralInterval& x, const SpectralInterval& y) { return x.upper == y.lower; }

// One merge of an interval below the threshold into its lighter touching
// neighbor. Returns false when nothing qualifies.
bool merge_one(std::vector<SpectralInterval>& iv, const DosModel& m, double threshold) {
  std::vector<std::size_t> order(iv.size());
  for (std::size_t i = 0; i < iv.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return iv[x].est.gamma < iv[y].est.gamma; });
  for (std::size_t i : order) {
    if (!(iv[i].est.gamma < threshold)) break;
    const bool has_left = i > 0 && touching(iv[i - 1], iv[i]);
    const bool has_right = i + 1 < iv.size() && touching(iv[i], iv[i + 1]);
    if (!has_left && !has_right) continue;  // isolated: leave it alone
    std::size_t nb;
    if (has_left && has_right) {
      nb = iv[i - 1].est.gamma <= iv[i + 1].est.gamma ? i - 1 : i + 1;
    } else {
      nb = has_left ? i - 1 : i + 1;
    }
    const std::size_t lo = std::min(i, nb);
    iv[lo] = make_interval(m, iv[lo].lower, iv[lo + 1].upper);
    iv.erase(iv.begin() + static_cast<std::ptrdiff_t>(lo + 1));
    return true;
  }
  return false;
}

}  // namespace

RefineResult refine_clusters(const DosModel& m, double a, double b, const RefineConfig& cfg) {
  const Index n_omega = cfg.n_omega > 0 ? cfg.n_omega : std::max<Index>(10 * m.lanczos_steps(), 3);
  RefineResult res;
  res.intervals = dos_cluster(m, a, b, n_omega);
  const double total = std::max(count(m, a, b).ceil_count, Index{1});
  std::set<std::pair<double, double>> refined;

  for (res.rounds = 0; res.rounds < cfg.max_rounds; ++res.rounds) {
    bool changed = false;
    while (res.intervals.size() > 1 && merge_one(res.intervals, m, cfg.merge_below)) changed = true;

    std::vector<SpectralInterval> next;
    for (const auto& iv : res.intervals) {
      if (iv.est.gamma > cfg.refine_above && refined.insert({iv.lower, iv.upper}).second) {
        const double ratio = 2.0 * static_cast<double>(iv.est.ceil_count) / total;
        const Index n2 = std::max<Index>(3, static_cast<Index>(std::ceil(ratio * static_cast<double>(n_omega))));
        auto parts = dos_cluster(m, iv.lower, iv.upper, n2);
        if (parts.size() > 1) {
          changed = true;
          next.insert(next.end(), parts.begin(), parts.end());
          continue;
        }
      }
      next.push_back(iv);
    }
    res.intervals = std::move(next);
    if (!changed) return res;
  }
  res.capped = true;
  return res;
}

namespace {

double median_width(const std::vector<SpectralInterval>& iv) {
  std::vector<double> w;
  for (const auto& x : iv) w.push_back(x.upper - x.lower);
  std::sort(w.begin(), w.end());
  const std::size_t n = w.size();
  return n % 2 ? w[n / 2] : 0.5 * (w[n / 2 - 1] + w[n / 2]);
}

}  // namespace

EnforceResult enforce_shift_count(std::vector<SpectralInterval> iv, Index n_s, const DosModel& m) {
  if (iv.empty()) throw InputError("enforce_shift_count needs at least one interval");
  if (n_s < 1) throw InputError("number of shifts must be at least 1");
  EnforceResult res;
  while (static_cast<Index>(iv.size()) < n_s) {
    std::size_t h = 0;
    for (std::size_t i = 1; i < iv.size(); ++i)
      if (iv[i].est.gamma > iv[h].est.gamma) h = i;
    const double l = iv[h].lower, u = iv[h].upper;
    double cut = 0.5 * (l + u);
    if (iv[h].est.gamma > kCountFloor) {
      const double target = 0.5 * (cdos_eval(m, l) + cdos_eval(m, u));
      cut = cdos_root(m, target, l, u, u - l);
    }
    if (!(cut > l && cut < u)) cut = 0.5 * (l + u);
    iv[h] = make_interval(m, l, cut);
    iv.insert(iv.begin() + static_cast<std::ptrdiff_t>(h + 1), make_interval(m, cut, u));
  }
  while (static_cast<Index>(iv.size()) > n_s) {
    const double guard = 3.0 * median_width(iv);
    auto gap = [&](std::size_t i) { return iv[i + 1].lower - iv[i].upper; };  // between i and i+1
    std::vector<std::size_t> order(iv.size());
    for (std::size_t i = 0; i < iv.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return iv[x].est.gamma < iv[y].est.gamma; });
    std::ptrdiff_t pair = -1;  // merge iv[pair] with iv[pair+1]
    for (std::size_t i : order) {
      const bool left = i > 0 && gap(i - 1) <= guard;
      const bool right = i + 1 < iv.size() && gap(i) <= guard;
      if (!left && !right) continue;
      if (left && right) {
        pair = iv[i - 1].est.gamma <= iv[i + 1].est.gamma ? static_cast<std::ptrdiff_t>(i - 1)
                                                            : static_cast<std::ptrdiff_t>(i);
      } else {
        pair = left ? static_cast<std::ptrdiff_t>(i - 1) : static_cast<std::ptrdiff_t>(i);
      }
      break;
    }
    if (pair < 0) {
      res.forced_merge = true;
      pair = 0;
      for (std::size_t i = 1; i + 1 < iv.size(); ++i)
        if (gap(i) < gap(static_cast<std::size_t>(pair))) pair = static_cast<std::ptrdiff_t>(i);
    }
    const auto p = static_cast<std::size_t>(pair);
    iv[p] = make_interval(m, iv[p].lower, iv[p + 1].upper);
    iv.erase(iv.begin() + static_cast<std::ptrdiff_t>(p + 1));
  }
  res.intervals = std::move(iv);
  return res;
}

ShiftSet place_shifts(const std::vector<SpectralInterval>& iv, const DosModel& m, ShiftScheme scheme,
                      double window_lower, double window_upper) {
  if (!(window_lower < window_upper)) throw InputError("window must satisfy lower < upper");
  ShiftSet s;
  s.window_lower = window_lower;
  s.window_upper = window_upper;
  const double nudge = 1e-12 * (window_upper - window_lower);
  for (const auto& x : iv) {
    double sigma = scheme == ShiftScheme::midpoint ? 0.5 * (x.lower + x.upper) : expected_shift(m, x.lower, x.upper).sigma;
    sigma = std::clamp(sigma, window_lower + nudge, window_upper - nudge);
    if (!s.shifts.empty() && !(sigma > s.shifts.back())) sigma = s.shifts.back() + nudge;
    s.shifts.push_back(sigma);
    s.provenance.push_back(Provenance::dos);
  }
  return s;
}

std::string PartitionReport::text() const {
  std::string out = "interval  lower  upper  gamma  shift  provenance\n";
  char buf[256];
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const double sh = i < shifts.shifts.size() ? shifts.shifts[i] : std::nan("");
    const char* pv = i < shifts.provenance.size() ? to_string(shifts.provenance[i]) : "-";
    std::snprintf(buf, sizeof buf, "%zu  %.10g  %.10g  %.4f  %.10g  %s\n", i, intervals[i].lower, intervals[i].upper,
                  intervals[i].est.gamma, sh, pv);
    out += buf;
  }
  if (refine_capped) out += "warning: cluster refinement hit its round limit\n";
  if (forced_merge) out += "warning: a merge crossed the gap guard\n";
  return out;
}

PartitionReport partition_window(const DosModel& m, double a, double b, Index n_s, const PartitionOptions& opt) {
  if (!(a < b)) throw InputError("window must satisfy lower < upper");
  if (n_s < 1) throw InputError("number of shifts must be at least 1");
  PartitionReport rep;
  std::vector<SpectralInterval> iv;
  if (opt.scheme == PartitionScheme::uniform_cdos) {
    const double gamma = count(m, a, b).gamma;
    iv = gamma >= static_cast<double>(n_s) ? cdos_uniform_partition(m, a, b, std::max(1.0, gamma / static_cast<double>(n_s)))
                                           : std::vector<SpectralInterval>{make_interval(m, a, b)};
  } else {
    auto r = refine_clusters(m, a, b, opt.refine);
    rep.refine_capped = r.capped;
    iv = std::move(r.intervals);
  }
  auto e = enforce_shift_count(std::move(iv), n_s, m);
  rep.forced_merge = e.forced_merge;
  rep.intervals = std::move(e.intervals);
  rep.shifts = place_shifts(rep.intervals, m, opt.shift_scheme, a, b);
  return rep;
}

}  // namespace specslice
