#include "snbd/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "snbd/errors.hpp"
#include "snbd/fingerprint.hpp"

namespace snbd {

using nlohmann::json;

namespace {

// Maps JSON pointers to the source line where the value starts. The text has
// already been accepted by nlohmann, so this scanner only needs to track
// structure, not reject anything.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) : s_(text) {
    skip_ws();
    if (pos_ < s_.size()) value("");
  }

  int line_of(std::string pointer) const {
    // Fall back to the nearest ancestor that was recorded.
    while (true) {
      if (auto it = lines_.find(pointer); it != lines_.end()) return it->second;
      const auto slash = pointer.rfind('/');
      if (slash == std::string::npos) return 0;
      pointer.erase(slash);
    }
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;

  void advance() {
    if (s_[pos_] == '\n') ++line_;
    ++pos_;
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) advance();
  }
  std::string string_token() {
    std::string out;
    advance();  // opening quote
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') {
        advance();
        out += s_[pos_];
      } else {
        out += s_[pos_];
      }
      advance();
    }
    if (pos_ < s_.size()) advance();
    return out;
  }
  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }
  void value(const std::string& ptr) {
    skip_ws();
    if (pos_ >= s_.size()) return;
    lines_.emplace(ptr, line_);
    const char c = s_[pos_];
    if (c == '{') {
      advance();
      skip_ws();
      while (pos_ < s_.size() && s_[pos_] != '}') {
        const std::string key = string_token();
        skip_ws();
        if (pos_ < s_.size()) advance();  // ':'
        value(ptr + "/" + escape(key));
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ',') advance();
        skip_ws();
      }
      if (pos_ < s_.size()) advance();
    } else if (c == '[') {
      advance();
      skip_ws();
      std::size_t i = 0;
      while (pos_ < s_.size() && s_[pos_] != ']') {
        value(ptr + "/" + std::to_string(i++));
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ',') advance();
        skip_ws();
      }
      if (pos_ < s_.size()) advance();
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) &&
             s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '}')
        advance();
    }
  }
};

class Reader {
 public:
  explicit Reader(const LineIndex* lines) : lines_(lines) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& reason) const {
    throw ConfigError(ptr.empty() ? "/" : ptr, reason, lines_ ? lines_->line_of(ptr) : 0);
  }

  std::string where(const std::string& ptr) const {
    const int line = lines_ ? lines_->line_of(ptr) : 0;
    return line > 0 ? ptr + " (line " + std::to_string(line) + ")" : ptr;
  }

  const json& require(const json& obj, const std::string& ptr, const char* key) const {
    if (!obj.is_object()) fail(ptr, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(ptr + "/" + key, "required field is missing");
    return *it;
  }

  void reject_unknown(const json& obj, const std::string& ptr,
                      std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) fail(ptr, "expected an object");
    for (const auto& [key, _] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) fail(ptr + "/" + key, "unknown field");
    }
  }

  double number(const json& v, const std::string& ptr) const {
    if (!v.is_number()) fail(ptr, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(ptr, "must be finite");
    return x;
  }

  std::uint64_t unsigned_int(const json& v, const std::string& ptr) const {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 0) fail(ptr, "must be non-negative");
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (x >= 0.0 && x == std::floor(x) && x < 1.8e19) return static_cast<std::uint64_t>(x);
    }
    fail(ptr, "expected a non-negative integer");
  }

  bool boolean(const json& v, const std::string& ptr) const {
    if (!v.is_boolean()) fail(ptr, "expected true or false");
    return v.get<bool>();
  }

  std::string text(const json& v, const std::string& ptr) const {
    if (!v.is_string()) fail(ptr, "expected a string");
    return v.get<std::string>();
  }

  cplx complex(const json& v, const std::string& ptr) const {
    if (v.is_number()) return {number(v, ptr), 0.0};
    if (v.is_array() && v.size() == 2)
      return {number(v[0], ptr + "/0"), number(v[1], ptr + "/1")};
    fail(ptr, "expected a number or an [re, im] pair");
  }

  ComplexVector vector(const json& v, const std::string& ptr) const {
    if (!v.is_array() || v.empty()) fail(ptr, "expected a non-empty array of complex numbers");
    ComplexVector out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(complex(v[i], ptr + "/" + std::to_string(i)));
    return out;
  }

  // Nested row-major array, or one of "identity", "sx", "sy", "sz". dim is
  // needed for "identity" and checked otherwise (0 = any).
  ComplexMatrix matrix(const json& v, const std::string& ptr, std::size_t dim) const {
    if (v.is_string()) {
      const std::string name = v.get<std::string>();
      if (name == "identity") {
        if (dim == 0) fail(ptr, "'identity' needs a known dimension here");
        return ComplexMatrix::identity(dim);
      }
      ComplexMatrix m;
      if (name == "sx") m = pauli::x();
      else if (name == "sy") m = pauli::y();
      else if (name == "sz") m = pauli::z();
      else fail(ptr, "unknown matrix name '" + name + "'");
      if (dim != 0 && dim != 2) fail(ptr, "'" + name + "' is 2x2 but dimension " + std::to_string(dim) + " is required");
      return m;
    }
    if (!v.is_array() || v.empty()) fail(ptr, "expected a square matrix (array of rows)");
    const std::size_t n = v.size();
    if (dim != 0 && n != dim)
      fail(ptr, "expected a " + std::to_string(dim) + "x" + std::to_string(dim) + " matrix, got " +
                    std::to_string(n) + " rows");
    ComplexMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string row_ptr = ptr + "/" + std::to_string(i);
      if (!v[i].is_array() || v[i].size() != n)
        fail(row_ptr, "row must have " + std::to_string(n) + " entries");
      for (std::size_t j = 0; j < n; ++j) m(i, j) = complex(v[i][j], row_ptr + "/" + std::to_string(j));
    }
    return m;
  }

  ComplexMatrix hermitian(const json& v, const std::string& ptr, std::size_t dim) const {
    ComplexMatrix m = matrix(v, ptr, dim);
    if (!m.is_hermitian())
      fail(ptr, "operator is not Hermitian (||M - M^dag|| = " + fmt(m.hermiticity_defect()) + ")");
    return m;
  }

  static std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
  }

 private:
  const LineIndex* lines_;
};

std::string idx(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

Statistics parse_statistics(const Reader& r, const json& v, const std::string& ptr) {
  const std::string s = r.text(v, ptr);
  if (s == "distinguishable") return Statistics::distinguishable;
  if (s == "boson") return Statistics::boson;
  if (s == "fermion") return Statistics::fermion;
  r.fail(ptr, "expected distinguishable, boson or fermion");
}

const char* statistics_name(Statistics s) {
  switch (s) {
    case Statistics::boson: return "boson";
    case Statistics::fermion: return "fermion";
    default: return "distinguishable";
  }
}

SystemSpec parse_system(const Reader& r, const json& sys) {
  const std::string base = "/system";
  r.reject_unknown(sys, base, {"particles", "interaction", "initial"});

  SystemSpec spec;
  const json& parts = r.require(sys, base, "particles");
  if (!parts.is_array() || parts.empty()) r.fail(base + "/particles", "expected a non-empty array");
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::string p = idx(base + "/particles", k);
    const json& pj = parts[k];
    r.reject_unknown(pj, p, {"dim", "hamiltonian", "statistics", "group"});
    ParticleSpec ps;
    ps.dim = r.unsigned_int(r.require(pj, p, "dim"), p + "/dim");
    if (ps.dim < 1) r.fail(p + "/dim", "dimension must be at least 1");
    ps.h = r.hermitian(r.require(pj, p, "hamiltonian"), p + "/hamiltonian", ps.dim);
    if (pj.contains("statistics")) ps.statistics = parse_statistics(r, pj["statistics"], p + "/statistics");
    if (pj.contains("group")) ps.group = r.text(pj["group"], p + "/group");
    if (ps.statistics != Statistics::distinguishable && ps.group.empty())
      r.fail(p + "/group", "identical particles need a group id");
    spec.particles.push_back(std::move(ps));
  }
  try {
    spec.full_dim();
  } catch (const DimensionLimitError& e) {
    r.fail(base + "/particles", e.what());
  }

  const std::string ip = base + "/interaction";
  if (sys.contains("interaction")) {
    const json& ij = sys["interaction"];
    r.reject_unknown(ij, ip, {"pair_matrix", "terms"});
    if (ij.contains("pair_matrix") == ij.contains("terms"))
      r.fail(ip, "give exactly one of pair_matrix or terms");
    if (ij.contains("pair_matrix")) {
      const std::size_t m = spec.particles.front().dim;
      for (std::size_t k = 1; k < spec.size(); ++k)
        if (spec.particles[k].dim != m)
          r.fail(ip + "/pair_matrix", "a shared pair matrix needs equal particle dimensions");
      const ComplexMatrix v = r.hermitian(ij["pair_matrix"], ip + "/pair_matrix", m * m);
      std::vector<PairTerm> pt;
      try {
        pt = decompose_pair_interaction(v, m);
      } catch (const UnsupportedInteractionError& e) {
        throw UnsupportedInteractionError(r.where(ip + "/pair_matrix") + ": " + e.what());
      }
      for (const auto& t : pt) {
        InteractionTerm term;
        term.omega = t.omega;
        term.ops.assign(spec.size(), t.op);
        spec.terms.push_back(std::move(term));
      }
    } else {
      const json& tj = ij["terms"];
      const std::string tp = ip + "/terms";
      if (!tj.is_array()) r.fail(tp, "expected an array");
      for (std::size_t s = 0; s < tj.size(); ++s) {
        const std::string sp = idx(tp, s);
        r.reject_unknown(tj[s], sp, {"omega", "op", "ops"});
        InteractionTerm term;
        term.omega = r.number(r.require(tj[s], sp, "omega"), sp + "/omega");
        if (term.omega == 0.0) r.fail(sp + "/omega", "omega must be nonzero");
        if (tj[s].contains("op") == tj[s].contains("ops")) r.fail(sp, "give exactly one of op or ops");
        if (tj[s].contains("op")) {
          for (std::size_t k = 0; k < spec.size(); ++k)
            term.ops.push_back(r.hermitian(tj[s]["op"], sp + "/op", spec.particles[k].dim));
        } else {
          const json& ops = tj[s]["ops"];
          if (!ops.is_array() || ops.size() != spec.size())
            r.fail(sp + "/ops", "expected one operator per particle");
          for (std::size_t k = 0; k < spec.size(); ++k)
            term.ops.push_back(r.hermitian(ops[k], idx(sp + "/ops", k), spec.particles[k].dim));
        }
        spec.terms.push_back(std::move(term));
      }
    }
  }

  const std::string init = base + "/initial";
  const json& ij = r.require(sys, base, "initial");
  if (!ij.is_array())
    r.fail(init, "initial state must be a product: one 1-body density or state vector per particle");
  if (ij.size() != spec.size())
    r.fail(init, "expected " + std::to_string(spec.size()) + " entries (one per particle), got " +
                     std::to_string(ij.size()));
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const std::string p = idx(init, k);
    const std::size_t d = spec.particles[k].dim;
    const json& e = ij[k];
    r.reject_unknown(e, p, {"density", "state"});
    if (e.contains("density") == e.contains("state")) r.fail(p, "give exactly one of density or state");
    ComplexMatrix rho;
    if (e.contains("density")) {
      if (e["density"].is_array() && e["density"].size() != d)
        r.fail(p + "/density", "particle " + std::to_string(k) + ": expected a " + std::to_string(d) +
                                   "x" + std::to_string(d) +
                                   " 1-body density; correlated (non-product) initial states are not supported");
      rho = r.hermitian(e["density"], p + "/density", d);
    } else {
      const ComplexVector v = r.vector(e["state"], p + "/state");
      if (v.size() != d) r.fail(p + "/state", "expected " + std::to_string(d) + " amplitudes");
      rho = ComplexMatrix::projector(v);
    }
    const double tr_err = std::abs(rho.trace() - 1.0);
    if (tr_err > 1e-12)
      r.fail(p, "particle " + std::to_string(k) + ": trace " + Reader::fmt(rho.trace().real()) +
                    " differs from 1");
    const double lo = herm_eigvals(rho).front();
    if (lo < -1e-12)
      r.fail(p, "particle " + std::to_string(k) + ": density is not positive (min eigenvalue " +
                    Reader::fmt(lo) + ")");
    spec.initial.push_back(std::move(rho));
  }

  try {
    validate(spec);
  } catch (const Error& e) {
    r.fail(base, e.what());
  }
  return spec;
}

void set_dotted(json& root, const ConfigOverride& o) {
  if (o.path.empty()) throw ConfigError("--", "empty override path");
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = o.path.find('.', start);
    const std::string key = o.path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(o.path, "malformed override path");
    if (node->is_array()) {
      char* end = nullptr;
      const unsigned long i = std::strtoul(key.c_str(), &end, 10);
      if (*end != '\0' || i >= node->size()) throw ConfigError(o.path, "bad array index '" + key + "'");
      node = &(*node)[i];
    } else {
      if (!node->is_object() && !node->is_null()) throw ConfigError(o.path, "cannot descend into a scalar");
      node = &(*node)[key];
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // Values are JSON when they parse as JSON, plain strings otherwise.
  json value = json::parse(o.value, nullptr, false);
  if (value.is_discarded()) value = o.value;
  *node = std::move(value);
}

json complex_json(cplx z) {
  if (z.imag() == 0.0) return z.real();
  return json::array({z.real(), z.imag()});
}

json matrix_json(const ComplexMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.dim(); ++j) row.push_back(complex_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(std::span<const cplx> v) {
  json out = json::array();
  for (cplx z : v) out.push_back(complex_json(z));
  return out;
}

json to_json(const RunConfig& c, bool for_hash) {
  json sys;
  for (const auto& p : c.system.particles) {
    json pj{{"dim", p.dim}, {"hamiltonian", matrix_json(p.h)},
            {"statistics", statistics_name(p.statistics)}};
    if (!p.group.empty()) pj["group"] = p.group;
    sys["particles"].push_back(std::move(pj));
  }
  if (!c.system.terms.empty()) {
    json terms = json::array();
    for (const auto& t : c.system.terms) {
      json ops = json::array();
      for (const auto& o : t.ops) ops.push_back(matrix_json(o));
      terms.push_back({{"omega", t.omega}, {"ops", std::move(ops)}});
    }
    sys["interaction"] = {{"terms", std::move(terms)}};
  }
  for (const auto& rho : c.system.initial) sys["initial"].push_back({{"density", matrix_json(rho)}});

  json out;
  out["system"] = std::move(sys);
  out["time"] = {{"t_final", c.time.t_final}, {"dt", c.time.dt}, {"record_stride", c.time.record_stride}};
  json ens{{"M", c.ensemble.trajectories},
           {"master_seed", c.ensemble.master_seed},
           {"full_density", c.ensemble.full_density},
           {"blowup_policy", c.ensemble.blowup_policy == BlowupPolicy::skip ? "skip" : "abort"},
           {"positivity_policy", c.ensemble.positivity_policy == PositivityPolicy::abort ? "abort" : "report"},
           {"positivity_tol", c.ensemble.positivity_tol},
           {"jackknife_blocks", c.ensemble.jackknife_blocks}};
  if (!for_hash) ens["worker_count"] = c.ensemble.worker_count;
  out["ensemble"] = std::move(ens);

  json obs = json::array();
  for (const auto& o : c.observables) {
    json factors = json::array();
    for (const auto& f : o.factors) factors.push_back(matrix_json(f));
    obs.push_back({{"name", o.name}, {"factors", std::move(factors)}});
  }
  out["observables"] = std::move(obs);

  json refs = json::array();
  for (const auto& v : c.recovery.reference_vectors) refs.push_back(vector_json(v));
  out["recovery"] = {{"enabled", c.recovery.enabled},
                     {"reference_vectors", std::move(refs)},
                     {"window", c.recovery.window},
                     {"derivative", c.recovery.derivative == DerivativeMode::spectral ? "spectral" : "central"},
                     {"eps_overlap", c.recovery.eps_overlap},
                     {"eps_ref", c.recovery.eps_ref}};
  out["spectrum"] = {{"source", c.spectrum.source == SpectrumSource::oracle ? "oracle" : "ensemble"},
                     {"oversample", c.spectrum.oversample},
                     {"e_min", c.spectrum.e_min},
                     {"e_max", c.spectrum.e_max},
                     {"peak_threshold", c.spectrum.peak_threshold}};
  if (!for_hash) {
    json formats = json::array();
    if (c.output.csv) formats.push_back("csv");
    if (c.output.binary) formats.push_back("binary");
    out["output"] = {{"directory", c.output.directory}, {"formats", std::move(formats)}};
  }
  return out;
}

RunConfig from_json(const json& root, const Reader& r) {
  r.reject_unknown(root, "", {"system", "time", "ensemble", "observables", "recovery", "spectrum", "output"});
  RunConfig c;
  c.system = parse_system(r, r.require(root, "", "system"));

  const json& tj = r.require(root, "", "time");
  r.reject_unknown(tj, "/time", {"t_final", "dt", "record_stride"});
  c.time.t_final = r.number(r.require(tj, "/time", "t_final"), "/time/t_final");
  c.time.dt = r.number(r.require(tj, "/time", "dt"), "/time/dt");
  if (tj.contains("record_stride"))
    c.time.record_stride = r.unsigned_int(tj["record_stride"], "/time/record_stride");
  if (!(c.time.dt > 0.0)) r.fail("/time/dt", "dt must be positive");
  if (!(c.time.t_final >= c.time.dt)) r.fail("/time/t_final", "t_final must be at least dt");
  if (c.time.record_stride < 1) r.fail("/time/record_stride", "record_stride must be at least 1");
  try {
    make_time_grid(c.time.t_final, c.time.dt, c.time.record_stride);
  } catch (const ConfigError& e) {
    r.fail("/time", e.what());
  }

  if (root.contains("ensemble")) {
    const json& ej = root["ensemble"];
    const std::string p = "/ensemble";
    r.reject_unknown(ej, p, {"M", "master_seed", "worker_count", "full_density", "blowup_policy",
                             "positivity_policy", "positivity_tol", "jackknife_blocks"});
    if (ej.contains("M")) c.ensemble.trajectories = r.unsigned_int(ej["M"], p + "/M");
    if (c.ensemble.trajectories < 1) r.fail(p + "/M", "M must be at least 1");
    if (ej.contains("master_seed")) c.ensemble.master_seed = r.unsigned_int(ej["master_seed"], p + "/master_seed");
    if (ej.contains("worker_count")) c.ensemble.worker_count = r.unsigned_int(ej["worker_count"], p + "/worker_count");
    if (c.ensemble.worker_count < 1) r.fail(p + "/worker_count", "worker_count must be at least 1");
    if (ej.contains("full_density")) c.ensemble.full_density = r.boolean(ej["full_density"], p + "/full_density");
    if (ej.contains("blowup_policy")) {
      const std::string s = r.text(ej["blowup_policy"], p + "/blowup_policy");
      if (s == "abort") c.ensemble.blowup_policy = BlowupPolicy::abort;
      else if (s == "skip") c.ensemble.blowup_policy = BlowupPolicy::skip;
      else r.fail(p + "/blowup_policy", "expected abort or skip");
    }
    if (ej.contains("positivity_policy")) {
      const std::string s = r.text(ej["positivity_policy"], p + "/positivity_policy");
      if (s == "abort") c.ensemble.positivity_policy = PositivityPolicy::abort;
      else if (s == "report") c.ensemble.positivity_policy = PositivityPolicy::report;
      else r.fail(p + "/positivity_policy", "expected abort or report");
    }
    if (ej.contains("positivity_tol")) c.ensemble.positivity_tol = r.number(ej["positivity_tol"], p + "/positivity_tol");
    if (ej.contains("jackknife_blocks"))
      c.ensemble.jackknife_blocks = r.unsigned_int(ej["jackknife_blocks"], p + "/jackknife_blocks");
    if (c.ensemble.jackknife_blocks < 2) r.fail(p + "/jackknife_blocks", "need at least 2 blocks");
  }
  if (c.ensemble.full_density) {
    try {
      const std::size_t d = c.system.full_dim();
      if (d > dimension_limit()) throw DimensionLimitError("full density exceeds the dimension limit");
    } catch (const DimensionLimitError& e) {
      r.fail("/ensemble/full_density", e.what());
    }
  }

  if (root.contains("observables")) {
    const json& oj = root["observables"];
    if (!oj.is_array()) r.fail("/observables", "expected an array");
    for (std::size_t i = 0; i < oj.size(); ++i) {
      const std::string p = idx("/observables", i);
      r.reject_unknown(oj[i], p, {"name", "factors"});
      ObservableSpec o;
      o.name = r.text(r.require(oj[i], p, "name"), p + "/name");
      if (o.name.empty()) r.fail(p + "/name", "name must not be empty");
      for (const auto& prev : c.observables)
        if (prev.name == o.name) r.fail(p + "/name", "duplicate observable name '" + o.name + "'");
      const json& fj = r.require(oj[i], p, "factors");
      if (!fj.is_array() || fj.size() != c.system.size())
        r.fail(p + "/factors", "expected one factor per particle");
      for (std::size_t k = 0; k < fj.size(); ++k)
        o.factors.push_back(r.hermitian(fj[k], idx(p + "/factors", k), c.system.particles[k].dim));
      c.observables.push_back(std::move(o));
    }
  }

  if (root.contains("recovery")) {
    const json& rj = root["recovery"];
    const std::string p = "/recovery";
    r.reject_unknown(rj, p, {"enabled", "reference_vectors", "window", "derivative", "eps_overlap", "eps_ref"});
    if (rj.contains("enabled")) c.recovery.enabled = r.boolean(rj["enabled"], p + "/enabled");
    if (rj.contains("reference_vectors")) {
      const json& vj = rj["reference_vectors"];
      if (!vj.is_array()) r.fail(p + "/reference_vectors", "expected an array");
      if (!vj.empty() && vj.size() != c.system.size())
        r.fail(p + "/reference_vectors", "expected one vector per particle (or none for the default)");
      for (std::size_t k = 0; k < vj.size(); ++k) {
        const std::string vp = idx(p + "/reference_vectors", k);
        ComplexVector v = r.vector(vj[k], vp);
        if (v.size() != c.system.particles[k].dim) r.fail(vp, "dimension does not match particle " + std::to_string(k));
        if (!(norm(v) > 0.0)) r.fail(vp, "reference vector must be nonzero");
        c.recovery.reference_vectors.push_back(std::move(v));
      }
    }
    if (rj.contains("window")) c.recovery.window = r.boolean(rj["window"], p + "/window");
    if (rj.contains("derivative")) {
      const std::string s = r.text(rj["derivative"], p + "/derivative");
      if (s == "central") c.recovery.derivative = DerivativeMode::central;
      else if (s == "spectral") c.recovery.derivative = DerivativeMode::spectral;
      else r.fail(p + "/derivative", "expected central or spectral");
    }
    if (rj.contains("eps_overlap")) c.recovery.eps_overlap = r.number(rj["eps_overlap"], p + "/eps_overlap");
    if (rj.contains("eps_ref")) c.recovery.eps_ref = r.number(rj["eps_ref"], p + "/eps_ref");
    if (!(c.recovery.eps_overlap > 0.0)) r.fail(p + "/eps_overlap", "must be positive");
    if (!(c.recovery.eps_ref > 0.0)) r.fail(p + "/eps_ref", "must be positive");
  }

  if (root.contains("spectrum")) {
    const json& sj = root["spectrum"];
    const std::string p = "/spectrum";
    r.reject_unknown(sj, p, {"source", "oversample", "e_min", "e_max", "peak_threshold"});
    if (sj.contains("source")) {
      const std::string s = r.text(sj["source"], p + "/source");
      if (s == "ensemble") c.spectrum.source = SpectrumSource::ensemble;
      else if (s == "oracle") c.spectrum.source = SpectrumSource::oracle;
      else r.fail(p + "/source", "expected ensemble or oracle");
    }
    if (sj.contains("oversample")) c.spectrum.oversample = r.number(sj["oversample"], p + "/oversample");
    if (!(c.spectrum.oversample >= 1.0)) r.fail(p + "/oversample", "must be at least 1");
    if (sj.contains("e_min")) c.spectrum.e_min = r.number(sj["e_min"], p + "/e_min");
    if (sj.contains("e_max")) c.spectrum.e_max = r.number(sj["e_max"], p + "/e_max");
    if (c.spectrum.e_min > c.spectrum.e_max) r.fail(p + "/e_max", "e_max must not be below e_min");
    if (sj.contains("peak_threshold")) c.spectrum.peak_threshold = r.number(sj["peak_threshold"], p + "/peak_threshold");
    if (!(c.spectrum.peak_threshold > 0.0 && c.spectrum.peak_threshold < 1.0))
      r.fail(p + "/peak_threshold", "must lie in (0, 1)");
  }

  if (root.contains("output")) {
    const json& oj = root["output"];
    const std::string p = "/output";
    r.reject_unknown(oj, p, {"directory", "formats"});
    if (oj.contains("directory")) c.output.directory = r.text(oj["directory"], p + "/directory");
    if (c.output.directory.empty()) r.fail(p + "/directory", "must not be empty");
    if (oj.contains("formats")) {
      const json& fj = oj["formats"];
      if (!fj.is_array()) r.fail(p + "/formats", "expected an array of csv/binary");
      c.output.csv = c.output.binary = false;
      for (std::size_t i = 0; i < fj.size(); ++i) {
        const std::string s = r.text(fj[i], idx(p + "/formats", i));
        if (s == "csv") c.output.csv = true;
        else if (s == "binary") c.output.binary = true;
        else r.fail(idx(p + "/formats", i), "expected csv or binary");
      }
    }
  }
  return c;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::vector<ConfigOverride>& overrides) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; turn it into a line number.
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    throw ConfigError("/", std::string("malformed JSON: ") + e.what(), line);
  }
  // Line numbers refer to the file as written, before overrides.
  const LineIndex lines(text);
  for (const auto& o : overrides) set_dotted(root, o);
  return from_json(root, Reader(&lines));
}

RunConfig parse_config(const std::string& path, const std::vector<ConfigOverride>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

std::string serialize_config(const RunConfig& config) { return to_json(config, false).dump(2) + "\n"; }

std::uint64_t config_hash(const RunConfig& config) {
  Fnv1a h;
  h.text(to_json(config, true).dump());
  return h.value();
}

EnsembleOptions ensemble_options(const RunConfig& config) {
  EnsembleOptions o;
  o.trajectories = config.ensemble.trajectories;
  o.propagation.t_final = config.time.t_final;
  o.propagation.dt = config.time.dt;
  o.propagation.record_stride = config.time.record_stride;
  o.propagation.positivity = config.ensemble.positivity_policy;
  o.propagation.positivity_tol = config.ensemble.positivity_tol;
  o.master_seed = config.ensemble.master_seed;
  o.workers = config.ensemble.worker_count;
  o.full_density = config.ensemble.full_density;
  o.blowup = config.ensemble.blowup_policy;
  o.jackknife_blocks = config.ensemble.jackknife_blocks;
  return o;
}

}  // namespace snbd
