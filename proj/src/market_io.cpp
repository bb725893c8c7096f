// Matrix Market reader/writer and the sequence manifest.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "specslice/pencil.hpp"

namespace specslice {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}
  // Next non-comment, non-blank line. False at end of input.
  bool next(std::string& out) {
    while (std::getline(in_, out)) {
      ++line_;
      const auto p = out.find_first_not_of(" \t\r");
      if (p == std::string::npos || out[p] == '%') continue;
      return true;
    }
    return false;
  }
  bool raw(std::string& out) {
    if (!std::getline(in_, out)) return false;
    ++line_;
    return true;
  }
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string t; is >> t;) out.push_back(t);
  return out;
}

double parse_real(const std::string& t, std::size_t line) {
  double v = 0.0;
  const char* b = t.data();
  const char* e = b + t.size();
  if (!t.empty() && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ParseError("bad real value '" + t + "'", line);
  return v;
}

long long parse_int(const std::string& t, std::size_t line) {
  long long v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) throw ParseError("bad integer '" + t + "'", line);
  return v;
}

}  // namespace

SymMatrix read_matrix_market(std::istream& in) {
  LineReader rd(in);
  std::string line;
  if (!rd.raw(line)) throw ParseError("empty Matrix Market input", 1);
  const auto head = tokens(line);
  if (head.size() != 5 || lower(head[0]) != "%%matrixmarket" || lower(head[1]) != "matrix")
    throw ParseError("missing %%MatrixMarket matrix header", rd.line());
  const std::string format = lower(head[2]);
  const std::string field = lower(head[3]);
  const std::string symmetry = lower(head[4]);
  if (format != "coordinate" && format != "array") throw ParseError("unknown format '" + head[2] + "'", rd.line());
  if (field != "real" && field != "double" && field != "integer")
    throw ParseError("unsupported field '" + head[3] + "'", rd.line());
  if (symmetry != "general" && symmetry != "symmetric")
    throw ParseError("unsupported symmetry '" + head[4] + "'", rd.line());
  const bool sym = symmetry == "symmetric";

  if (!rd.next(line)) throw ParseError("missing size line", rd.line() + 1);
  const auto size = tokens(line);
  const bool coord = format == "coordinate";
  if (size.size() != (coord ? 3u : 2u)) throw ParseError("malformed size line", rd.line());
  const long long rows = parse_int(size[0], rd.line());
  const long long cols = parse_int(size[1], rd.line());
  if (rows < 1 || cols < 1) throw ParseError("matrix dimensions must be positive", rd.line());
  if (rows != cols)
    throw ParseError("matrix is not square (" + size[0] + " x " + size[1] + ")", rd.line());
  const Index n = static_cast<Index>(rows);
  Matrix acc = Matrix::Zero(n, n);

  if (coord) {
    const long long nnz = parse_int(size[2], rd.line());
    if (nnz < 0) throw ParseError("negative entry count", rd.line());
    for (long long k = 0; k < nnz; ++k) {
      if (!rd.next(line))
        throw ParseError("expected " + std::to_string(nnz) + " entries, found " + std::to_string(k), rd.line());
      const auto t = tokens(line);
      if (t.size() != 3) throw ParseError("entry line needs 'row col value'", rd.line());
      const long long i = parse_int(t[0], rd.line());
      const long long j = parse_int(t[1], rd.line());
      const double v = parse_real(t[2], rd.line());
      if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("entry index out of range", rd.line());
      if (sym) {
        acc(std::max(i, j) - 1, std::min(i, j) - 1) += v;
      } else {
        acc(i - 1, j - 1) += v;
      }
    }
  } else {
    for (Index j = 0; j < n; ++j) {
      for (Index i = sym ? j : 0; i < n; ++i) {
        if (!rd.next(line)) throw ParseError("array data ends early", rd.line());
        const auto t = tokens(line);
        if (t.size() != 1) throw ParseError("array entry line needs one value", rd.line());
        acc(i, j) = parse_real(t[0], rd.line());
      }
    }
  }
  if (rd.next(line)) throw ParseError("unexpected data after last entry", rd.line());

  if (sym) return SymMatrix::from_lower(std::move(acc));
  const double scale = std::max(acc.cwiseAbs().maxCoeff(), 1.0);
  if ((acc - acc.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ParseError("general header on asymmetric data; only symmetric matrices are supported", 0);
  return SymMatrix::from_lower(std::move(acc));
}

SymMatrix load_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_matrix_market(in);
}

namespace {

void put_real(std::ostream& out, double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  out.write(buf, p - buf);
}

}  // namespace

void write_matrix_market(std::ostream& out, const SymMatrix& m, MarketFormat format) {
  const Index n = m.order();
  if (format == MarketFormat::array) {
    out << "%%MatrixMarket matrix array real symmetric\n" << n << ' ' << n << '\n';
    for (Index j = 0; j < n; ++j)
      for (Index i = j; i < n; ++i) {
        put_real(out, m(i, j));
        out << '\n';
      }
    return;
  }
  Index nnz = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i) nnz += m(i, j) != 0.0;
  out << "%%MatrixMarket matrix coordinate real symmetric\n" << n << ' ' << n << ' ' << nnz << '\n';
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i)
      if (m(i, j) != 0.0) {
        out << i + 1 << ' ' << j + 1 << ' ';
        put_real(out, m(i, j));
        out << '\n';
      }
}

void save_matrix_market(const std::filesystem::path& path, const SymMatrix& m, MarketFormat format) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  write_matrix_market(out, m, format);
  if (!out) throw InputError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

SyntheticSpectrumSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("spectrum spec must be a JSON object", 0);
  SyntheticSpectrumSpec s;
  if (j.contains("clusters")) {
    for (const auto& c : j.at("clusters")) {
      ClusterSpec cs;
      cs.center = c.at("center").get<double>();
      cs.half_width = get_or<double>(c, "half_width", 0.0);
      cs.count = c.at("count").get<Index>();
      s.clusters.push_back(cs);
    }
  }
  s.perturbation_amplitude = get_or<double>(j, "perturbation_amplitude", 0.0);
  s.decay = get_or<double>(j, "decay", 0.5);
  if (j.contains("jump_at") && !j.at("jump_at").is_null()) s.jump_at = j.at("jump_at").get<std::size_t>();
  s.jump_amplitude = get_or<double>(j, "jump_amplitude", 0.0);
  s.jump_cluster = get_or<std::size_t>(j, "jump_cluster", 0);
  s.basis_rotation_seed = get_or<std::uint64_t>(j, "basis_rotation_seed", 0);
  const std::string mode = get_or<std::string>(j, "b_mode", "identity");
  if (mode == "identity") {
    s.b_mode = BMode::identity;
  } else if (mode == "random_spd") {
    s.b_mode = BMode::random_spd;
  } else {
    throw ParseError("unknown b_mode '" + mode + "'", 0);
  }
  s.condition_target = get_or<double>(j, "condition_target", 10.0);
  if (!(s.decay >= 0.0 && s.decay < 1.0)) throw InputError("decay must lie in [0, 1)");
  return s;
}

json spec_to_json(const SyntheticSpectrumSpec& s) {
  json clusters = json::array();
  for (const auto& c : s.clusters)
    clusters.push_back({{"center", c.center}, {"half_width", c.half_width}, {"count", c.count}});
  json j = {{"clusters", clusters},
            {"perturbation_amplitude", s.perturbation_amplitude},
            {"decay", s.decay},
            {"jump_at", nullptr},
            {"jump_amplitude", s.jump_amplitude},
            {"jump_cluster", s.jump_cluster},
            {"basis_rotation_seed", s.basis_rotation_seed},
            {"b_mode", s.b_mode == BMode::identity ? "identity" : "random_spd"},
            {"condition_target", s.condition_target}};
  if (s.jump_at) j["jump_at"] = *s.jump_at;
  return j;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0);
  }
}

}  // namespace

SyntheticSpectrumSpec parse_spectrum_spec(const std::string& json_text) {
  try {
    return spec_from_json(parse_json(json_text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("spectrum spec: ") + e.what(), 0);
  }
}

std::string spectrum_spec_to_json(const SyntheticSpectrumSpec& spec) { return spec_to_json(spec).dump(2); }

SequenceManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const json j = parse_json(ss.str());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  SequenceManifest m;
  try {
    if (j.contains("synthetic")) {
      m.synthetic = spec_from_json(j.at("synthetic"));
      m.n = j.at("n").get<Index>();
      m.iters = get_or<std::size_t>(j, "iters", 1);
      m.seed = get_or<std::uint64_t>(j, "seed", 0);
      return m;
    }
    if (!j.contains("a_paths") || !j.at("a_paths").is_array() || j.at("a_paths").empty())
      throw ParseError("manifest needs a nonempty a_paths list or a synthetic block", 0);
    if (j.contains("b_path") && !j.at("b_path").is_null()) m.b_path = resolve(j.at("b_path").get<std::string>());
    for (const auto& p : j.at("a_paths")) m.a_paths.push_back(resolve(p.get<std::string>()));
    m.iters = m.a_paths.size();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const SequenceManifest& m) {
  json j;
  if (m.synthetic) {
    j = {{"synthetic", spec_to_json(*m.synthetic)}, {"n", m.n}, {"iters", m.iters}, {"seed", m.seed}};
  } else {
    const auto base = path.parent_path();
    auto rel = [&](const std::filesystem::path& p) {
      return (p.is_absolute() && !base.empty() ? std::filesystem::relative(p, base) : p).generic_string();
    };
    j["b_path"] = m.b_path ? json(rel(*m.b_path)) : json(nullptr);
    j["a_paths"] = json::array();
    for (const auto& p : m.a_paths) j["a_paths"].push_back(rel(p));
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

PencilSequence open_sequence(const SequenceManifest& m) {
  if (m.synthetic) return synth_sequence(*m.synthetic, m.n, m.iters, m.seed).sequence;
  if (m.a_paths.empty()) throw InputError("manifest lists no A matrices");
  SymMatrix b = m.b_path ? load_matrix_market(*m.b_path) : SymMatrix::identity(load_matrix_market(m.a_paths[0]).order());
  auto paths = std::make_shared<std::vector<std::filesystem::path>>(m.a_paths);
  return PencilSequence(std::move(b), [paths](std::size_t i) { return load_matrix_market((*paths)[i]); },
                        paths->size());
}

}  // namespace specslice
