#include "hybens/scenario.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hybens/field_io.hpp"

namespace hybens {

namespace {

// ---- Low-level value grammar ----------------------------------------------
//
// Scenario files are flat INI: [section] headers and key = value lines.
// Values are numbers, quoted strings, bare words, one-line lists
// [v, v, ...] or one-line records { key = value, ... }.

struct Value {
  enum class Kind { number, string, boolean, list, record };
  Kind kind = Kind::number;
  double num = 0.0;
  bool boolean = false;
  std::string str;
  std::vector<Value> list;
  std::vector<std::pair<std::string, Value>> record;
  int line = 0;
};

[[noreturn]] void fail(int line, const std::string& message, const char* code) {
  throw ConfigError("line " + std::to_string(line) + ": " + message + " (" + code + ")");
}

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line;

  void skip_space() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  bool done() {
    skip_space();
    return pos >= text.size();
  }
  char peek() {
    skip_space();
    return pos < text.size() ? text[pos] : '\0';
  }
};

Value parse_value(Cursor& c);

Value parse_scalar(Cursor& c) {
  c.skip_space();
  Value v;
  v.line = c.line;
  if (c.peek() == '"') {
    ++c.pos;
    const std::size_t start = c.pos;
    while (c.pos < c.text.size() && c.text[c.pos] != '"') ++c.pos;
    if (c.pos >= c.text.size()) fail(c.line, "unterminated string", "E_SYNTAX");
    v.kind = Value::Kind::string;
    v.str = c.text.substr(start, c.pos - start);
    ++c.pos;
    return v;
  }
  const std::size_t start = c.pos;
  while (c.pos < c.text.size() && std::string(",]}= \t").find(c.text[c.pos]) == std::string::npos) {
    ++c.pos;
  }
  const std::string token = c.text.substr(start, c.pos - start);
  if (token.empty()) fail(c.line, "expected a value", "E_SYNTAX");
  if (token == "true" || token == "false") {
    v.kind = Value::Kind::boolean;
    v.boolean = token == "true";
    return v;
  }
  double num = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), num);
  if (res.ec == std::errc() && res.ptr == token.data() + token.size()) {
    v.kind = Value::Kind::number;
    v.num = num;
    return v;
  }
  // Bare word (e.g. auto); treated as a string.
  v.kind = Value::Kind::string;
  v.str = token;
  return v;
}

std::string parse_key(Cursor& c) {
  c.skip_space();
  const std::size_t start = c.pos;
  while (c.pos < c.text.size() &&
         (std::isalnum(static_cast<unsigned char>(c.text[c.pos])) || c.text[c.pos] == '_')) {
    ++c.pos;
  }
  if (c.pos == start) fail(c.line, "expected a key", "E_SYNTAX");
  return c.text.substr(start, c.pos - start);
}

Value parse_value(Cursor& c) {
  const char head = c.peek();
  if (head == '[') {
    ++c.pos;
    Value v;
    v.kind = Value::Kind::list;
    v.line = c.line;
    if (c.peek() == ']') {
      ++c.pos;
      return v;
    }
    for (;;) {
      v.list.push_back(parse_value(c));
      const char sep = c.peek();
      if (sep == ',') {
        ++c.pos;
        continue;
      }
      if (sep == ']') {
        ++c.pos;
        return v;
      }
      fail(c.line, "expected ',' or ']' in list", "E_SYNTAX");
    }
  }
  if (head == '{') {
    ++c.pos;
    Value v;
    v.kind = Value::Kind::record;
    v.line = c.line;
    if (c.peek() == '}') {
      ++c.pos;
      return v;
    }
    for (;;) {
      std::string key = parse_key(c);
      if (c.peek() != '=') fail(c.line, "expected '=' after key '" + key + "'", "E_SYNTAX");
      ++c.pos;
      v.record.emplace_back(std::move(key), parse_value(c));
      const char sep = c.peek();
      if (sep == ',') {
        ++c.pos;
        continue;
      }
      if (sep == '}') {
        ++c.pos;
        return v;
      }
      fail(c.line, "expected ',' or '}' in record", "E_SYNTAX");
    }
  }
  return parse_scalar(c);
}

struct Entry {
  std::string key;
  Value value;
  int line = 0;
  mutable bool used = false;
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Entry> entries;

  const Entry* find(const std::string& key) const {
    for (const Entry& e : entries) {
      if (e.key == key) {
        e.used = true;
        return &e;
      }
    }
    return nullptr;
  }
};

struct Document {
  std::vector<Section> sections;

  const Section* find(const std::string& name) const {
    for (const Section& s : sections) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

Document tokenize(const std::string& text) {
  Document doc;
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  Section* current = nullptr;
  while (std::getline(is, raw)) {
    ++line_no;
    std::string line = raw;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "malformed section header", "E_SYNTAX");
      Section s;
      s.name = line.substr(1, line.size() - 2);
      s.line = line_no;
      doc.sections.push_back(std::move(s));
      current = &doc.sections.back();
      continue;
    }
    if (!current) fail(line_no, "key outside any [section]", "E_SYNTAX");

    Cursor c{line, 0, line_no};
    Entry e;
    e.line = line_no;
    e.key = parse_key(c);
    if (c.peek() != '=') fail(line_no, "expected '=' after key '" + e.key + "'", "E_SYNTAX");
    ++c.pos;
    e.value = parse_value(c);
    e.value.line = line_no;
    if (!c.done()) fail(line_no, "trailing characters after value", "E_SYNTAX");
    current->entries.push_back(std::move(e));
  }
  return doc;
}

// ---- Typed accessors -------------------------------------------------------

double want_number(const Value& v, const std::string& what) {
  if (v.kind != Value::Kind::number) fail(v.line, what + " must be a number", "E_TYPE");
  return v.num;
}

long want_integer(const Value& v, const std::string& what) {
  const double d = want_number(v, what);
  const long n = static_cast<long>(d);
  if (static_cast<double>(n) != d) fail(v.line, what + " must be an integer", "E_TYPE");
  return n;
}

std::string want_string(const Value& v, const std::string& what) {
  if (v.kind != Value::Kind::string) fail(v.line, what + " must be a string", "E_TYPE");
  return v.str;
}

std::vector<double> want_number_list(const Value& v, const std::string& what) {
  if (v.kind != Value::Kind::list) fail(v.line, what + " must be a list", "E_TYPE");
  std::vector<double> out;
  for (const Value& e : v.list) out.push_back(want_number(e, what + " entry"));
  return out;
}

const Value* record_find(const Value& rec, const std::string& key) {
  for (const auto& [k, v] : rec.record) {
    if (k == key) return &v;
  }
  return nullptr;
}

const Value& record_need(const Value& rec, const std::string& key, const std::string& what) {
  const Value* v = record_find(rec, key);
  if (!v) fail(rec.line, what + " record is missing key '" + key + "'", "E_MISSING_KEY");
  return *v;
}

void record_check_keys(const Value& rec, std::initializer_list<const char*> allowed,
                       const std::string& what) {
  for (const auto& [k, v] : rec.record) {
    bool ok = false;
    for (const char* a : allowed) {
      if (k == a) ok = true;
    }
    if (!ok) fail(v.line, "unknown key '" + k + "' in " + what + " record", "E_UNKNOWN_KEY");
  }
}

void section_check_keys(const Section& s, std::initializer_list<const char*> allowed) {
  for (const Entry& e : s.entries) {
    bool ok = false;
    for (const char* a : allowed) {
      if (e.key == a) ok = true;
    }
    if (!ok) {
      fail(e.line, "unknown key '" + e.key + "' in [" + s.name + "]", "E_UNKNOWN_KEY");
    }
  }
}

// ---- Section builders ------------------------------------------------------

void build_grid(const Section& s, ScenarioConfig& cfg) {
  section_check_keys(s, {"axis0", "axis1", "axis2", "axis3"});
  for (int a = 0; a < 4; ++a) {
    const Entry* e = s.find("axis" + std::to_string(a));
    if (!e) break;
    const Value& rec = e->value;
    if (rec.kind != Value::Kind::record) fail(e->line, "axis must be a record", "E_TYPE");
    record_check_keys(rec, {"name", "min", "max", "count", "boundary", "sector"}, "axis");
    Axis ax;
    ax.name = want_string(record_need(rec, "name", "axis"), "axis name");
    ax.min = want_number(record_need(rec, "min", "axis"), "axis min");
    ax.max = want_number(record_need(rec, "max", "axis"), "axis max");
    ax.count = static_cast<int>(want_integer(record_need(rec, "count", "axis"), "axis count"));
    const std::string b = want_string(record_need(rec, "boundary", "axis"), "axis boundary");
    if (b == "periodic") {
      ax.boundary = Boundary::periodic;
    } else if (b == "clamped") {
      ax.boundary = Boundary::clamped;
    } else {
      fail(rec.line, "axis boundary must be 'periodic' or 'clamped'", "E_VALUE");
    }
    const std::string sec = want_string(record_need(rec, "sector", "axis"), "axis sector");
    if (sec == "quantum") {
      cfg.sectors.push_back(Sector::quantum);
    } else if (sec == "classical") {
      cfg.sectors.push_back(Sector::classical);
    } else {
      fail(rec.line, "axis sector must be 'quantum' or 'classical'", "E_VALUE");
    }
    try {
      ax.validate();
    } catch (const ConfigError& err) {
      fail(rec.line, err.what(), "E_VALUE");
    }
    cfg.axes.push_back(std::move(ax));
  }
  if (cfg.axes.empty()) fail(s.line, "section [grid] declares no axes", "E_MISSING_KEY");
  // Contiguity: axis indices must not skip.
  for (const Entry& e : s.entries) {
    const int idx = e.key.back() - '0';
    if (idx >= static_cast<int>(cfg.axes.size())) {
      fail(e.line, "axis keys must be contiguous starting at axis0", "E_VALUE");
    }
  }
}

int resolve_axis(const ScenarioConfig& cfg, const std::string& name, int line) {
  for (std::size_t a = 0; a < cfg.axes.size(); ++a) {
    if (cfg.axes[a].name == name) return static_cast<int>(a);
  }
  fail(line, "potential references unknown axis '" + name + "'", "E_VALUE");
}

void require_sector(const ScenarioConfig& cfg, int axis, Sector sector,
                    const std::string& role, int line) {
  if (cfg.sectors[static_cast<std::size_t>(axis)] != sector) {
    fail(line,
         "axis '" + cfg.axes[static_cast<std::size_t>(axis)].name + "' is declared " +
             (cfg.sectors[static_cast<std::size_t>(axis)] == Sector::quantum ? "quantum"
                                                                             : "classical") +
             " in [grid] but used as " + role + " in [hamiltonian]",
         "E_SECTOR");
  }
}

PotentialSpec build_potential(const Value& rec, ScenarioConfig& cfg) {
  if (rec.kind != Value::Kind::record) fail(rec.line, "potential must be a record", "E_TYPE");
  const std::string type = want_string(record_need(rec, "type", "potential"), "potential type");
  if (type == "none") {
    record_check_keys(rec, {"type"}, "potential");
    return PotentialSpec::none();
  }
  if (type == "harmonic") {
    record_check_keys(rec, {"type", "axis", "k", "center"}, "potential");
    const int axis = resolve_axis(cfg, want_string(record_need(rec, "axis", "potential"),
                                                   "potential axis"), rec.line);
    const double k = want_number(record_need(rec, "k", "potential"), "spring constant");
    const Value* c = record_find(rec, "center");
    return PotentialSpec::harmonic(axis, k, c ? want_number(*c, "center") : 0.0);
  }
  if (type == "linear_coupling") {
    record_check_keys(rec, {"type", "lambda", "quantum_axis", "classical_axis",
                            "k_quantum", "k_classical"},
                      "potential");
    const int qa = resolve_axis(cfg, want_string(record_need(rec, "quantum_axis", "potential"),
                                                 "quantum axis"), rec.line);
    const int ca = resolve_axis(cfg, want_string(record_need(rec, "classical_axis", "potential"),
                                                 "classical axis"), rec.line);
    require_sector(cfg, qa, Sector::quantum, "the coupling's quantum axis", rec.line);
    require_sector(cfg, ca, Sector::classical, "the coupling's classical axis", rec.line);
    const double lambda = want_number(record_need(rec, "lambda", "potential"), "lambda");
    PotentialSpec V = PotentialSpec::linear_coupling(lambda, qa, ca);
    if (const Value* kq = record_find(rec, "k_quantum")) {
      V = V + PotentialSpec::harmonic(qa, want_number(*kq, "k_quantum"));
    }
    if (const Value* kc = record_find(rec, "k_classical")) {
      V = V + PotentialSpec::harmonic(ca, want_number(*kc, "k_classical"));
    }
    return V;
  }
  if (type == "softened_gravity") {
    record_check_keys(rec, {"type", "G", "softening"}, "potential");
    // Axes and masses come from the sector layout at build time.
    cfg.gravity_G = want_number(record_need(rec, "G", "potential"), "G");
    cfg.gravity_softening =
        want_number(record_need(rec, "softening", "potential"), "softening");
    return PotentialSpec::none();  // installed by make_hamiltonian
  }
  if (type == "polynomial") {
    record_check_keys(rec, {"type", "axis", "coefficients"}, "potential");
    const int axis = resolve_axis(cfg, want_string(record_need(rec, "axis", "potential"),
                                                   "potential axis"), rec.line);
    return PotentialSpec::polynomial(
        axis, want_number_list(record_need(rec, "coefficients", "potential"), "coefficients"));
  }
  fail(rec.line, "unknown potential type '" + type + "'", "E_VALUE");
}

void build_hamiltonian(const Section& s, ScenarioConfig& cfg) {
  section_check_keys(s, {"type", "mass", "mass_quantum", "mass_classical", "hbar", "G",
                         "softening", "kick", "window_start", "window_length", "potential"});
  const Entry* te = s.find("type");
  if (!te) fail(s.line, "[hamiltonian] is missing 'type'", "E_MISSING_KEY");
  const std::string type = want_string(te->value, "hamiltonian type");

  auto num_or = [&](const char* key, double fallback) {
    const Entry* e = s.find(key);
    return e ? want_number(e->value, key) : fallback;
  };

  cfg.mass = num_or("mass", 1.0);
  cfg.mass_quantum = num_or("mass_quantum", cfg.mass);
  cfg.mass_classical = num_or("mass_classical", cfg.mass);
  cfg.hbar = num_or("hbar", 1.0);
  cfg.coupling_kick = num_or("kick", 0.0);
  cfg.window_start = num_or("window_start", 0.0);
  cfg.window_length = num_or("window_length", 0.0);

  int quantum_axes = 0;
  for (Sector sec : cfg.sectors) {
    if (sec == Sector::quantum) ++quantum_axes;
  }
  const int classical_axes = static_cast<int>(cfg.sectors.size()) - quantum_axes;

  if (type == "classical") {
    cfg.hamiltonian_type = HamiltonianSpec::Kind::classical;
    if (quantum_axes != 0) {
      fail(te->line, "classical Hamiltonian but [grid] declares a quantum axis", "E_SECTOR");
    }
  } else if (type == "quantum") {
    cfg.hamiltonian_type = HamiltonianSpec::Kind::quantum;
    if (classical_axes != 0) {
      fail(te->line, "quantum Hamiltonian but [grid] declares a classical axis", "E_SECTOR");
    }
  } else if (type == "hybrid" || type == "hybrid_measurement" || type == "gravity_hybrid") {
    if (quantum_axes == 0 || classical_axes == 0) {
      fail(te->line, "hybrid Hamiltonians need one quantum and one classical sector in [grid]",
           "E_SECTOR");
    }
    if (type == "hybrid") {
      cfg.hamiltonian_type = HamiltonianSpec::Kind::hybrid;
    } else if (type == "hybrid_measurement") {
      cfg.hamiltonian_type = HamiltonianSpec::Kind::hybrid_measurement;
    } else {
      cfg.hamiltonian_type = HamiltonianSpec::Kind::gravity_hybrid;
      cfg.gravity_G = num_or("G", 1.0);
      cfg.gravity_softening = num_or("softening", 0.0);
      if (cfg.sectors.size() != 2) {
        fail(te->line, "gravity_hybrid needs exactly two axes", "E_SECTOR");
      }
    }
  } else {
    fail(te->line, "unknown hamiltonian type '" + type + "'", "E_VALUE");
  }

  if (const Entry* pe = s.find("potential")) {
    cfg.potential = build_potential(pe->value, cfg);
  }
}

void build_peaks(const Section& s, std::size_t arity, GaussianSpec& spec,
                 const char* what) {
  section_check_keys(s, {"peak0", "peak1", "peak2", "peak3"});
  for (int k = 0; k < 4; ++k) {
    const Entry* e = s.find("peak" + std::to_string(k));
    if (!e) break;
    const Value& rec = e->value;
    if (rec.kind != Value::Kind::record) fail(e->line, "peak must be a record", "E_TYPE");
    record_check_keys(rec, {"weight", "mean", "sigma", "momentum"}, "peak");
    GaussianPeak pk;
    pk.mean = want_number_list(record_need(rec, "mean", "peak"), "mean");
    pk.sigma = want_number_list(record_need(rec, "sigma", "peak"), "sigma");
    if (const Value* m = record_find(rec, "momentum")) {
      pk.momentum = want_number_list(*m, "momentum");
    }
    if (const Value* w = record_find(rec, "weight")) {
      pk.weight = want_number(*w, "weight");
    }
    if (pk.mean.size() != arity || pk.sigma.size() != arity ||
        (!pk.momentum.empty() && pk.momentum.size() != arity)) {
      fail(rec.line,
           std::string(what) + " peaks need " + std::to_string(arity) +
               " entries per list (one per axis)",
           "E_VALUE");
    }
    spec.peaks.push_back(std::move(pk));
  }
  if (spec.peaks.empty()) {
    fail(s.line, "section [" + s.name + "] declares no peaks", "E_MISSING_KEY");
  }
}

void build_integrator(const Section& s, ScenarioConfig& cfg) {
  section_check_keys(s, {"scheme", "dt", "steps", "renormalize_every", "monitors"});
  if (const Entry* e = s.find("scheme")) {
    const std::string scheme = want_string(e->value, "scheme");
    if (scheme == "rk4") {
      cfg.integrator.scheme = Scheme::rk4;
    } else if (scheme == "heun") {
      cfg.integrator.scheme = Scheme::heun;
    } else {
      fail(e->line, "scheme must be 'rk4' or 'heun'", "E_VALUE");
    }
  }
  if (const Entry* e = s.find("dt")) {
    if (e->value.kind == Value::Kind::string && e->value.str == "auto") {
      cfg.integrator.dt = 0.0;
    } else {
      cfg.integrator.dt = want_number(e->value, "dt");
    }
  }
  const Entry* se = s.find("steps");
  if (!se) fail(s.line, "[integrator] is missing 'steps'", "E_MISSING_KEY");
  cfg.integrator.steps = want_integer(se->value, "steps");
  if (cfg.integrator.steps < 0) fail(se->line, "steps must be >= 0", "E_VALUE");
  if (const Entry* e = s.find("renormalize_every")) {
    cfg.integrator.renormalize_every = want_integer(e->value, "renormalize_every");
  }
  if (const Entry* e = s.find("monitors")) {
    if (e->value.kind != Value::Kind::list) fail(e->line, "monitors must be a list", "E_TYPE");
    cfg.integrator.monitor_norm = false;
    cfg.integrator.monitor_energy = false;
    for (const Value& m : e->value.list) {
      const std::string name = want_string(m, "monitor");
      if (name == "norm") {
        cfg.integrator.monitor_norm = true;
      } else if (name == "energy") {
        cfg.integrator.monitor_energy = true;
      } else if (name == "means") {
        cfg.integrator.monitor_means = true;
      } else {
        fail(m.line, "unknown monitor '" + name + "'", "E_VALUE");
      }
    }
  }
}

void build_protocol(const Section& s, ScenarioConfig& cfg) {
  section_check_keys(s, {"type", "velocity", "phase_linear", "phase_quadratic"});
  const Entry* te = s.find("type");
  if (!te) fail(s.line, "[protocol] is missing 'type'", "E_MISSING_KEY");
  const std::string type = want_string(te->value, "protocol type");
  if (type == "evolve") {
    cfg.protocol = ProtocolKind::evolve;
  } else if (type == "position_measurement") {
    cfg.protocol = ProtocolKind::position_measurement;
  } else if (type == "scattering") {
    cfg.protocol = ProtocolKind::scattering;
  } else if (type == "galilean_boost") {
    cfg.protocol = ProtocolKind::galilean_boost;
  } else if (type == "separability") {
    cfg.protocol = ProtocolKind::separability;
  } else if (type == "backreaction") {
    cfg.protocol = ProtocolKind::backreaction;
  } else if (type == "peres_terno") {
    cfg.protocol = ProtocolKind::peres_terno;
  } else {
    fail(te->line, "unknown protocol type '" + type + "'", "E_VALUE");
  }
  if (const Entry* e = s.find("velocity")) {
    cfg.boost_velocity = want_number(e->value, "velocity");
  }
  if (const Entry* e = s.find("phase_linear")) {
    cfg.phase_linear = want_number(e->value, "phase_linear");
  }
  if (const Entry* e = s.find("phase_quadratic")) {
    cfg.phase_quadratic = want_number(e->value, "phase_quadratic");
  }
}

void build_measurement(const Section& s, ScenarioConfig& cfg) {
  section_check_keys(s, {"kick", "pointer_sigma", "pointer_center", "pre_steps", "post_steps"});
  const Entry* ke = s.find("kick");
  if (!ke) fail(s.line, "[measurement] is missing 'kick'", "E_MISSING_KEY");
  cfg.meas_kick = want_number(ke->value, "kick");
  if (const Entry* e = s.find("pointer_sigma")) {
    cfg.pointer_sigma = want_number(e->value, "pointer_sigma");
  }
  if (const Entry* e = s.find("pointer_center")) {
    cfg.pointer_center = want_number(e->value, "pointer_center");
  }
  if (const Entry* e = s.find("pre_steps")) cfg.pre_steps = want_integer(e->value, "pre_steps");
  if (const Entry* e = s.find("post_steps")) cfg.post_steps = want_integer(e->value, "post_steps");
}

void build_outputs(const Section& s, ScenarioConfig& cfg) {
  section_check_keys(s, {"directory", "snapshot_stride", "observables", "record_every"});
  if (const Entry* e = s.find("directory")) {
    cfg.output_directory = want_string(e->value, "directory");
  }
  if (const Entry* e = s.find("snapshot_stride")) {
    cfg.snapshot_stride = want_integer(e->value, "snapshot_stride");
  }
  if (const Entry* e = s.find("record_every")) {
    cfg.record_every = want_integer(e->value, "record_every");
  }
  if (const Entry* e = s.find("observables")) {
    if (e->value.kind != Value::Kind::list) {
      fail(e->line, "observables must be a list", "E_TYPE");
    }
    for (const Value& m : e->value.list) {
      cfg.observables.push_back(want_string(m, "observable"));
    }
  }
}

void build_checks(const Section& s, ScenarioConfig& cfg) {
  for (const Entry& e : s.entries) {
    e.used = true;
    if (e.value.kind != Value::Kind::record) {
      fail(e.line, "check bounds must be records like { max = 1e-6 }", "E_TYPE");
    }
    record_check_keys(e.value, {"max", "min"}, "check");
    const Value* mx = record_find(e.value, "max");
    const Value* mn = record_find(e.value, "min");
    if (!!mx == !!mn) {
      fail(e.line, "check needs exactly one of 'max' or 'min'", "E_VALUE");
    }
    ScenarioCheck check;
    check.metric = e.key;
    check.is_max = mx != nullptr;
    check.bound = want_number(mx ? *mx : *mn, "check bound");
    check.line = e.line;
    cfg.checks.push_back(std::move(check));
  }
}

// Observable names: norm, energy, mean_<axis>, var_<axis>, mom_<axis>,
// cov_<axisA>_<axisB>.
void validate_observable_names(const ScenarioConfig& cfg) {
  auto has_axis = [&](const std::string& name) {
    for (const Axis& ax : cfg.axes) {
      if (ax.name == name) return true;
    }
    return false;
  };
  for (const std::string& name : cfg.observables) {
    if (name == "norm" || name == "energy") continue;
    bool ok = false;
    for (const char* prefix : {"mean_", "var_", "mom_"}) {
      const std::size_t n = std::string(prefix).size();
      if (name.rfind(prefix, 0) == 0 && has_axis(name.substr(n))) ok = true;
    }
    if (name.rfind("cov_", 0) == 0) {
      const std::string rest = name.substr(4);
      const auto sep = rest.find('_');
      if (sep != std::string::npos && has_axis(rest.substr(0, sep)) &&
          has_axis(rest.substr(sep + 1))) {
        ok = true;
      }
    }
    if (!ok) {
      throw ConfigError("unknown observable '" + name + "' in [outputs] (E_VALUE)");
    }
  }
}

}  // namespace

HamiltonianSpec ScenarioConfig::make_hamiltonian() const {
  switch (hamiltonian_type) {
    case HamiltonianSpec::Kind::classical:
      return HamiltonianSpec::classical(mass, potential);
    case HamiltonianSpec::Kind::quantum:
      return HamiltonianSpec::quantum(mass, hbar, potential);
    case HamiltonianSpec::Kind::hybrid:
      return HamiltonianSpec::hybrid(mass_quantum, mass_classical, hbar, potential, sectors);
    case HamiltonianSpec::Kind::hybrid_measurement: {
      int qa = -1, ca = -1;
      for (std::size_t a = 0; a < sectors.size(); ++a) {
        (sectors[a] == Sector::quantum ? qa : ca) = static_cast<int>(a);
      }
      return HamiltonianSpec::with_measurement(
          HamiltonianSpec::hybrid(mass_quantum, mass_classical, hbar, potential, sectors),
          coupling_kick, qa, ca, window_start, window_length);
    }
    case HamiltonianSpec::Kind::gravity_hybrid: {
      double soft = gravity_softening;
      if (soft <= 0.0) {
        // Default: four cells of the classical axis.
        for (std::size_t a = 0; a < sectors.size(); ++a) {
          if (sectors[a] == Sector::classical) soft = 4.0 * axes[a].spacing();
        }
      }
      return HamiltonianSpec::gravity_hybrid(mass_quantum, mass_classical, hbar, gravity_G,
                                             soft, sectors);
    }
  }
  throw ConfigError("unreachable hamiltonian kind");
}

int ScenarioConfig::axis_index(const std::string& axis_name) const {
  for (std::size_t a = 0; a < axes.size(); ++a) {
    if (axes[a].name == axis_name) return static_cast<int>(a);
  }
  throw UsageError("unknown axis '" + axis_name + "'");
}

ScenarioConfig parse_scenario(const std::string& text) {
  const Document doc = tokenize(text);
  for (const Section& s : doc.sections) {
    static const char* known[] = {"scenario", "grid",        "hamiltonian", "initial_state",
                                  "target",   "projectile",  "integrator",  "protocol",
                                  "measurement", "outputs",  "check"};
    bool ok = false;
    for (const char* k : known) {
      if (s.name == k) ok = true;
    }
    if (!ok) fail(s.line, "unknown section [" + s.name + "]", "E_UNKNOWN_KEY");
  }

  ScenarioConfig cfg;
  if (const Section* s = doc.find("scenario")) {
    section_check_keys(*s, {"name", "description"});
    if (const Entry* e = s->find("name")) cfg.name = want_string(e->value, "name");
    if (const Entry* e = s->find("description")) {
      cfg.description = want_string(e->value, "description");
    }
  }

  const Section* grid = doc.find("grid");
  if (!grid) throw ConfigError("missing section [grid] (E_MISSING_SECTION)");
  build_grid(*grid, cfg);

  const Section* ham = doc.find("hamiltonian");
  if (!ham) throw ConfigError("missing section [hamiltonian] (E_MISSING_SECTION)");
  build_hamiltonian(*ham, cfg);

  if (const Section* s = doc.find("protocol")) build_protocol(*s, cfg);

  const bool needs_initial = cfg.protocol != ProtocolKind::scattering;
  if (const Section* s = doc.find("initial_state")) {
    const std::size_t arity = cfg.protocol == ProtocolKind::position_measurement
                                  ? 1
                                  : cfg.axes.size();
    build_peaks(*s, arity, cfg.initial_state, "initial_state");
  } else if (needs_initial) {
    throw ConfigError("missing section [initial_state] (E_MISSING_SECTION)");
  }

  if (cfg.protocol == ProtocolKind::scattering) {
    const Section* t = doc.find("target");
    if (!t) throw ConfigError("missing section [target] (E_MISSING_SECTION)");
    build_peaks(*t, 1, cfg.target, "target");
    const Section* p = doc.find("projectile");
    if (!p) throw ConfigError("missing section [projectile] (E_MISSING_SECTION)");
    build_peaks(*p, 1, cfg.projectile, "projectile");
  } else {
    for (const char* name : {"target", "projectile"}) {
      if (const Section* s = doc.find(name)) {
        fail(s->line, "section [" + std::string(name) + "] requires protocol type 'scattering'",
             "E_SECTOR");
      }
    }
  }

  const Section* integ = doc.find("integrator");
  if (!integ) throw ConfigError("missing section [integrator] (E_MISSING_SECTION)");
  build_integrator(*integ, cfg);

  if (const Section* s = doc.find("measurement")) {
    build_measurement(*s, cfg);
    if (cfg.protocol != ProtocolKind::position_measurement) {
      fail(s->line, "[measurement] requires protocol type 'position_measurement'", "E_SECTOR");
    }
  } else if (cfg.protocol == ProtocolKind::position_measurement) {
    throw ConfigError("missing section [measurement] (E_MISSING_SECTION)");
  }

  if (const Section* s = doc.find("outputs")) build_outputs(*s, cfg);
  if (const Section* s = doc.find("check")) build_checks(*s, cfg);

  // Cross-section validation that needs the whole document.
  validate_observable_names(cfg);
  cfg.make_grid();
  cfg.make_hamiltonian();  // throws on inconsistent sector/mass data
  if (cfg.protocol == ProtocolKind::peres_terno) {
    if (cfg.axes.size() != 2 || cfg.sectors[0] != Sector::quantum ||
        cfg.sectors[1] != Sector::classical) {
      throw ConfigError(
          "peres_terno protocol needs axis0 quantum and axis1 classical (E_SECTOR)");
    }
  }
  return cfg;
}

// ---- Serialization ---------------------------------------------------------

namespace {

std::string peak_to_text(const GaussianPeak& pk) {
  auto list = [](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += format_double(v[i]);
    }
    return s + "]";
  };
  std::string s = "{ weight = " + format_double(pk.weight) + ", mean = " + list(pk.mean) +
                  ", sigma = " + list(pk.sigma);
  if (!pk.momentum.empty()) s += ", momentum = " + list(pk.momentum);
  return s + " }";
}

void peaks_to_text(std::ostream& os, const std::string& section, const GaussianSpec& spec) {
  os << "[" << section << "]\n";
  for (std::size_t k = 0; k < spec.peaks.size(); ++k) {
    os << "peak" << k << " = " << peak_to_text(spec.peaks[k]) << "\n";
  }
  os << "\n";
}

std::string potential_to_text(const ScenarioConfig& cfg) {
  // Re-emit the resolved terms; the bundled linear_coupling record form is
  // normalized into separate harmonic terms plus the coupling.
  const auto& terms = cfg.potential.terms();
  if (terms.empty()) return "";
  std::string out;
  int index = 0;
  for (const PotentialTerm& t : terms) {
    std::string rec;
    switch (t.kind) {
      case PotentialTerm::Kind::harmonic:
        rec = "{ type = \"harmonic\", axis = \"" + cfg.axes[static_cast<std::size_t>(t.axis_a)].name +
              "\", k = " + format_double(t.strength) +
              ", center = " + format_double(t.center_a) + " }";
        break;
      case PotentialTerm::Kind::linear_coupling:
        rec = "{ type = \"linear_coupling\", lambda = " + format_double(t.strength) +
              ", quantum_axis = \"" + cfg.axes[static_cast<std::size_t>(t.axis_a)].name +
              "\", classical_axis = \"" + cfg.axes[static_cast<std::size_t>(t.axis_b)].name + "\" }";
        break;
      case PotentialTerm::Kind::softened_gravity:
        continue;  // carried by the gravity_hybrid keys
      case PotentialTerm::Kind::polynomial: {
        rec = "{ type = \"polynomial\", axis = \"" +
              cfg.axes[static_cast<std::size_t>(t.axis_a)].name + "\", coefficients = [";
        for (std::size_t i = 0; i < t.coefficients.size(); ++i) {
          if (i) rec += ", ";
          rec += format_double(t.coefficients[i]);
        }
        rec += "] }";
        break;
      }
    }
    out += std::string("potential") + (index ? std::to_string(index) : "") + " = " + rec + "\n";
    ++index;
  }
  return out;
}

}  // namespace

std::string serialize_scenario(const ScenarioConfig& cfg) {
  std::ostringstream os;
  if (!cfg.name.empty() || !cfg.description.empty()) {
    os << "[scenario]\n";
    if (!cfg.name.empty()) os << "name = \"" << cfg.name << "\"\n";
    if (!cfg.description.empty()) os << "description = \"" << cfg.description << "\"\n";
    os << "\n";
  }
  os << "[grid]\n";
  for (std::size_t a = 0; a < cfg.axes.size(); ++a) {
    const Axis& ax = cfg.axes[a];
    os << "axis" << a << " = { name = \"" << ax.name << "\", min = " << format_double(ax.min)
       << ", max = " << format_double(ax.max) << ", count = " << ax.count << ", boundary = \""
       << (ax.boundary == Boundary::periodic ? "periodic" : "clamped") << "\", sector = \""
       << (cfg.sectors[a] == Sector::quantum ? "quantum" : "classical") << "\" }\n";
  }
  os << "\n[hamiltonian]\n";
  switch (cfg.hamiltonian_type) {
    case HamiltonianSpec::Kind::classical:
      os << "type = \"classical\"\nmass = " << format_double(cfg.mass) << "\n";
      break;
    case HamiltonianSpec::Kind::quantum:
      os << "type = \"quantum\"\nmass = " << format_double(cfg.mass)
         << "\nhbar = " << format_double(cfg.hbar) << "\n";
      break;
    case HamiltonianSpec::Kind::hybrid:
      os << "type = \"hybrid\"\nmass_quantum = " << format_double(cfg.mass_quantum)
         << "\nmass_classical = " << format_double(cfg.mass_classical)
         << "\nhbar = " << format_double(cfg.hbar) << "\n";
      break;
    case HamiltonianSpec::Kind::hybrid_measurement:
      os << "type = \"hybrid_measurement\"\nmass_quantum = " << format_double(cfg.mass_quantum)
         << "\nmass_classical = " << format_double(cfg.mass_classical)
         << "\nhbar = " << format_double(cfg.hbar)
         << "\nkick = " << format_double(cfg.coupling_kick)
         << "\nwindow_start = " << format_double(cfg.window_start)
         << "\nwindow_length = " << format_double(cfg.window_length) << "\n";
      break;
    case HamiltonianSpec::Kind::gravity_hybrid:
      os << "type = \"gravity_hybrid\"\nmass_quantum = " << format_double(cfg.mass_quantum)
         << "\nmass_classical = " << format_double(cfg.mass_classical)
         << "\nhbar = " << format_double(cfg.hbar) << "\nG = " << format_double(cfg.gravity_G)
         << "\nsoftening = " << format_double(cfg.gravity_softening) << "\n";
      break;
  }
  os << potential_to_text(cfg);

  os << "\n";
  if (!cfg.initial_state.peaks.empty()) peaks_to_text(os, "initial_state", cfg.initial_state);
  if (!cfg.target.peaks.empty()) peaks_to_text(os, "target", cfg.target);
  if (!cfg.projectile.peaks.empty()) peaks_to_text(os, "projectile", cfg.projectile);

  os << "[integrator]\n";
  os << "scheme = \"" << (cfg.integrator.scheme == Scheme::rk4 ? "rk4" : "heun") << "\"\n";
  if (cfg.integrator.dt > 0.0) {
    os << "dt = " << format_double(cfg.integrator.dt) << "\n";
  } else {
    os << "dt = auto\n";
  }
  os << "steps = " << cfg.integrator.steps << "\n";
  if (cfg.integrator.renormalize_every > 0) {
    os << "renormalize_every = " << cfg.integrator.renormalize_every << "\n";
  }
  os << "monitors = [";
  {
    bool first = true;
    auto add = [&](const char* m) {
      if (!first) os << ", ";
      os << '"' << m << '"';
      first = false;
    };
    if (cfg.integrator.monitor_norm) add("norm");
    if (cfg.integrator.monitor_energy) add("energy");
    if (cfg.integrator.monitor_means) add("means");
  }
  os << "]\n\n";

  if (cfg.protocol != ProtocolKind::evolve || cfg.boost_velocity != 0.0 ||
      cfg.phase_linear != 0.0 || cfg.phase_quadratic != 0.0) {
    os << "[protocol]\n";
    const char* type = "evolve";
    switch (cfg.protocol) {
      case ProtocolKind::evolve: type = "evolve"; break;
      case ProtocolKind::position_measurement: type = "position_measurement"; break;
      case ProtocolKind::scattering: type = "scattering"; break;
      case ProtocolKind::galilean_boost: type = "galilean_boost"; break;
      case ProtocolKind::separability: type = "separability"; break;
      case ProtocolKind::backreaction: type = "backreaction"; break;
      case ProtocolKind::peres_terno: type = "peres_terno"; break;
    }
    os << "type = \"" << type << "\"\n";
    if (cfg.boost_velocity != 0.0) os << "velocity = " << format_double(cfg.boost_velocity) << "\n";
    if (cfg.phase_linear != 0.0) os << "phase_linear = " << format_double(cfg.phase_linear) << "\n";
    if (cfg.phase_quadratic != 0.0) {
      os << "phase_quadratic = " << format_double(cfg.phase_quadratic) << "\n";
    }
    os << "\n";
  }

  if (cfg.protocol == ProtocolKind::position_measurement) {
    os << "[measurement]\n";
    os << "kick = " << format_double(cfg.meas_kick) << "\n";
    os << "pointer_sigma = " << format_double(cfg.pointer_sigma) << "\n";
    os << "pointer_center = " << format_double(cfg.pointer_center) << "\n";
    if (cfg.pre_steps) os << "pre_steps = " << cfg.pre_steps << "\n";
    if (cfg.post_steps) os << "post_steps = " << cfg.post_steps << "\n";
    os << "\n";
  }

  os << "[outputs]\n";
  os << "directory = \"" << cfg.output_directory << "\"\n";
  if (cfg.snapshot_stride) os << "snapshot_stride = " << cfg.snapshot_stride << "\n";
  if (cfg.record_every) os << "record_every = " << cfg.record_every << "\n";
  if (!cfg.observables.empty()) {
    os << "observables = [";
    for (std::size_t i = 0; i < cfg.observables.size(); ++i) {
      if (i) os << ", ";
      os << '"' << cfg.observables[i] << '"';
    }
    os << "]\n";
  }

  if (!cfg.checks.empty()) {
    os << "\n[check]\n";
    for (const ScenarioCheck& c : cfg.checks) {
      os << c.metric << " = { " << (c.is_max ? "max" : "min") << " = "
         << format_double(c.bound) << " }\n";
    }
  }
  return os.str();
}

}  // namespace hybens
