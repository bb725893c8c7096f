#include "specslice/validate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace specslice {

const char* to_string(SliceStatus s) {
  switch (s) {
    case SliceStatus::validated: return "validated";
    case SliceStatus::missing: return "missing";
    case SliceStatus::pruned: return "pruned";
  }
  return "?";
}

std::vector<Slice> make_slices(const std::vector<RitzSummary>& probes, double wl, double wu, Index neg_lo,
                               Index neg_hi, TauRule tau) {
  if (!(wl < wu)) throw InputError("window must satisfy lower < upper");
  if (probes.empty()) throw InputError("validation needs at least one probe");
  for (std::size_t j = 0; j < probes.size(); ++j) {
    if (!(probes[j].sigma > wl && probes[j].sigma < wu))
      throw InputError("probe shift " + std::to_string(probes[j].sigma) + " lies outside the window");
    if (j > 0 && !(probes[j].sigma > probes[j - 1].sigma)) throw InputError("probe shifts are not strictly ascending");
  }
  std::vector<Slice> out;
  const int ns = static_cast<int>(probes.size());
  for (int j = 0; j <= ns; ++j) {
    Slice s;
    s.index = j;
    s.lower = j == 0 ? wl : probes[static_cast<std::size_t>(j - 1)].sigma;
    s.upper = j == ns ? wu : probes[static_cast<std::size_t>(j)].sigma;
    s.neg_lower = j == 0 ? neg_lo : probes[static_cast<std::size_t>(j - 1)].inertia_neg;
    s.neg_upper = j == ns ? neg_hi : probes[static_cast<std::size_t>(j)].inertia_neg;
    if (j > 0) s.left_probe = probes[static_cast<std::size_t>(j - 1)].probe_id;
    if (j < ns) s.right_probe = probes[static_cast<std::size_t>(j)].probe_id;
    if (j == 0) {
      s.tau = s.lower;
    } else if (j == ns) {
      s.tau = s.upper;
    } else {
      s.tau = s.lower + tau.fraction * (s.upper - s.lower);
    }
    out.push_back(s);
  }
  return out;
}

namespace {

void take(const RitzSummary& p, double lo, bool lo_closed, double hi, bool hi_closed, std::vector<Candidate>& out) {
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double v = p.values[i];
    const bool above = lo_closed ? v >= lo : v > lo;
    const bool below = hi_closed ? v <= hi : v < hi;
    if (above && below) out.push_back({v, p.residuals[i], p.probe_id, static_cast<Index>(i), p.sigma});
  }
}

}  // namespace

std::vector<Candidate> select_candidates(const RitzSummary* left, const RitzSummary* right, const Slice& s) {
  std::vector<Candidate> out;
  if (left && right) {
    take(*left, s.lower, true, s.tau, true, out);
    take(*right, s.tau, false, s.upper, false, out);
  } else if (left) {
    take(*left, s.lower, true, s.upper, false, out);
  } else if (right) {
    take(*right, s.lower, true, s.upper, false, out);
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.value < b.value; });
  return out;
}

Index exact_count(Index left_neg, Index right_neg) {
  if (right_neg < left_neg)
    throw Error("inertia decreases across a slice (" + std::to_string(left_neg) + " > " + std::to_string(right_neg) +
                "): shift ordering is corrupt");
  return right_neg - left_neg;
}

SliceVerdict validate_slice(std::vector<Candidate> c, Index n_exact, int slice_index) {
  SliceVerdict v;
  v.slice = slice_index;
  v.n_exact = n_exact;
  v.n_cand = static_cast<Index>(c.size());
  auto by_value = [](const Candidate& a, const Candidate& b) { return a.value < b.value; };
  if (v.n_cand == n_exact) {
    v.status = SliceStatus::validated;
  } else if (v.n_cand < n_exact) {
    v.status = SliceStatus::missing;
    v.missing = n_exact - v.n_cand;
  } else {
    v.status = SliceStatus::pruned;
    v.pruned = v.n_cand - n_exact;
    std::stable_sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
      if (a.residual != b.residual) return a.residual < b.residual;
      return std::abs(a.value - a.source_shift) < std::abs(b.value - b.source_shift);
    });
    c.resize(static_cast<std::size_t>(n_exact));
  }
  std::stable_sort(c.begin(), c.end(), by_value);
  v.validated = std::move(c);
  return v;
}

std::vector<int> ValidationReport::missing_slices() const {
  std::vector<int> out;
  for (const auto& v : verdicts)
    if (v.status == SliceStatus::missing) out.push_back(v.slice);
  return out;
}

Index ValidationReport::total_missing() const {
  Index m = 0;
  for (const auto& v : verdicts) m += v.missing;
  return m;
}

std::string ValidationReport::json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t j = 0; j < verdicts.size(); ++j) {
    const auto& v = verdicts[j];
    const auto& s = slices[j];
    arr.push_back({{"slice", v.slice},
                   {"lower", s.lower},
                   {"upper", s.upper},
                   {"n_exact", v.n_exact},
                   {"n_cand", v.n_cand},
                   {"status", to_string(v.status)},
                   {"kept", v.validated.size()},
                   {"dropped", v.pruned},
                   {"missing", v.missing}});
  }
  return nlohmann::json{{"window_count", window_count}, {"slices", arr}}.dump(2);
}

ValidationReport validate_all(const std::vector<RitzSummary>& probes, double wl, double wu, Index neg_lo, Index neg_hi,
                              TauRule tau) {
  ValidationReport rep;
  rep.slices = make_slices(probes, wl, wu, neg_lo, neg_hi, tau);
  rep.window_count = exact_count(neg_lo, neg_hi);
  const std::size_t ns = probes.size();
  std::vector<std::vector<Candidate>> cand;
  std::vector<Index> exact;
  for (const auto& s : rep.slices) {
    const auto j = static_cast<std::size_t>(s.index);
    const RitzSummary* left = j > 0 ? &probes[j - 1] : nullptr;
    const RitzSummary* right = j < ns ? &probes[j] : nullptr;
    cand.push_back(select_candidates(left, right, s));
    exact.push_back(exact_count(s.neg_lower, s.neg_upper));
  }
  // An eigenvalue sitting on a shift can land on either side of it.
  const double near = tau.near_shift * (wu - wl);
  for (std::size_t j = 1; j <= ns; ++j) {
    auto& l = cand[j - 1];
    auto& r = cand[j];
    const double sigma = rep.slices[j].lower;
    const auto nl = static_cast<std::size_t>(exact[j - 1]), nr = static_cast<std::size_t>(exact[j]);
    while (l.size() < nl && r.size() > nr && r.front().value - sigma <= near) {
      l.push_back(r.front());
      r.erase(r.begin());
    }
    while (r.size() < nr && l.size() > nl && sigma - l.back().value <= near) {
      r.insert(r.begin(), l.back());
      l.pop_back();
    }
  }
  for (std::size_t j = 0; j < cand.size(); ++j)
    rep.verdicts.push_back(validate_slice(std::move(cand[j]), exact[j], static_cast<int>(j)));
  return rep;
}

std::vector<Candidate> assemble_validated(const std::vector<SliceVerdict>& verdicts) {
  std::vector<int> missing;
  std::vector<Candidate> out;
  for (const auto& v : verdicts) {
    if (v.status == SliceStatus::missing) missing.push_back(v.slice);
    out.insert(out.end(), v.validated.begin(), v.validated.end());
  }
  if (!missing.empty()) {
    std::string ids;
    for (int m : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(m);
    throw OutstandingMissing("slices with missing eigenvalues: " + ids, missing);
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.value < b.value; });
  return out;
}

}  // namespace specslice
