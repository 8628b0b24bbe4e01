// Scenario configuration: JSON schema, validation with full error lists, and
// the canonical serialization used by the manifest and by sweeps.
#pragma once

#include "mfg/dynamics.hpp"
#include "mfg/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mfg::cli {

using json = nlohmann::json;

enum class RunKind { equilibria, simulate, turnpike, nplayer, sweep };
enum class OutputFormat { csv, json };

inline const char* to_string(RunKind r) {
  switch (r) {
    case RunKind::equilibria: return "equilibria";
    case RunKind::simulate: return "simulate";
    case RunKind::turnpike: return "turnpike";
    case RunKind::nplayer: return "nplayer";
    case RunKind::sweep: return "sweep";
  }
  return "?";
}

/// Initial distribution: "uniform", "fixed_point" (of the run's control), or
/// an explicit vector in state order.
struct StateSpec {
  enum class Kind { uniform, fixed_point, explicit_values } kind = Kind::uniform;
  Vector values;
  bool operator==(const StateSpec& o) const { return kind == o.kind && values == o.values; }
};

/// Terminal values: "zero", "stationary" (exact stationary g of the run's
/// control), or an explicit vector.
struct ValueSpec {
  enum class Kind { zero, stationary, explicit_values } kind = Kind::zero;
  Vector values;
  bool operator==(const ValueSpec& o) const { return kind == o.kind && values == o.values; }
};

struct GridSpec {
  double t_start = 0.0;
  double t_end = 1.0;
  std::optional<std::size_t> n_steps;  ///< default: step min(0.01, 0.1/lambda)

  TimeGrid resolve(const ModelParams& p) const {
    return n_steps ? TimeGrid(t_start, t_end, *n_steps) : default_grid(p, t_start, t_end);
  }
  bool operator==(const GridSpec&) const = default;
};

struct SimulateSpec {
  StationaryControl control;
  StateSpec x0;
  ValueSpec gT;
  GridSpec grid;
  HjbMode mode = HjbMode::fixed_control;
  bool operator==(const SimulateSpec&) const = default;
};

struct TurnpikeSpec {
  Index strategy = 0;  ///< 0-based internally
  StateSpec x0;
  ValueSpec gT{ValueSpec::Kind::stationary, {}};
  GridSpec grid;
  double epsilon = 1e-3;
  bool operator==(const TurnpikeSpec&) const = default;
};

struct NPlayerSpec {
  StationaryControl control;
  StateSpec x0;
  GridSpec grid;
  std::vector<long> N_list;
  std::size_t replications = 1;
  bool operator==(const NPlayerSpec&) const = default;
};

struct SweepAxis {
  std::string path;  ///< JSON pointer into the scenario document
  std::vector<json> values;
  bool operator==(const SweepAxis&) const = default;
};

struct SweepSpec {
  std::vector<SweepAxis> axes;
  bool operator==(const SweepSpec&) const = default;
};

struct OutputSpec {
  std::string directory;
  OutputFormat format = OutputFormat::csv;
  bool operator==(const OutputSpec&) const = default;
};

struct ScenarioConfig {
  ModelParams model;
  RunKind run = RunKind::equilibria;
  std::optional<SimulateSpec> simulate;
  std::optional<TurnpikeSpec> turnpike;
  std::optional<NPlayerSpec> nplayer;
  std::optional<SweepSpec> sweep;
  OutputSpec output;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  bool operator==(const ScenarioConfig&) const = default;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string out = "invalid configuration:";
    for (const auto& e : errors) out += "\n  " + e;
    return out;
  }
  std::vector<std::string> errors_;
};

namespace detail {

// Walks a JSON document collecting every schema error with its pointer path.
class Reader {
 public:
  std::vector<std::string> errors;

  void error(const std::string& path, const std::string& message) { errors.push_back(path + ": " + message); }

  bool object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      error(path.empty() ? "/" : path, "expected an object");
      return false;
    }
    for (const auto& [key, value] : j.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) error(path + "/" + key, "unknown key");
    }
    return true;
  }

  const json* member(const json& j, const std::string& path, const char* key, bool required) {
    if (!j.is_object()) return nullptr;
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) error(path + "/" + key, "missing required key");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const json* j, const std::string& path) {
    if (!j) return std::nullopt;
    if (!j->is_number()) {
      error(path, "expected a number");
      return std::nullopt;
    }
    return j->get<double>();
  }

  std::optional<long long> integer(const json* j, const std::string& path) {
    if (!j) return std::nullopt;
    if (!j->is_number_integer()) {
      error(path, "expected an integer");
      return std::nullopt;
    }
    return j->get<long long>();
  }

  std::optional<std::string> string(const json* j, const std::string& path) {
    if (!j) return std::nullopt;
    if (!j->is_string()) {
      error(path, "expected a string");
      return std::nullopt;
    }
    return j->get<std::string>();
  }

  std::optional<Vector> vector(const json* j, const std::string& path, std::optional<Index> size = {}) {
    if (!j) return std::nullopt;
    if (!j->is_array()) {
      error(path, "expected an array of numbers");
      return std::nullopt;
    }
    Vector v(Index(j->size()));
    bool ok = true;
    for (std::size_t n = 0; n < j->size(); ++n) {
      if (!(*j)[n].is_number()) {
        error(path + "/" + std::to_string(n), "expected a number");
        ok = false;
      } else {
        v(Index(n)) = (*j)[n].get<double>();
      }
    }
    if (ok && size && v.size() != *size) {
      error(path, "expected " + std::to_string(*size) + " entries, got " + std::to_string(v.size()));
      ok = false;
    }
    return ok ? std::optional<Vector>(v) : std::nullopt;
  }

  /// 1-based strategy index in the document, 0-based result.
  std::optional<Index> strategy(const json* j, const std::string& path, Index d) {
    const auto v = integer(j, path);
    if (!v) return std::nullopt;
    if (*v < 1 || *v > d) {
      error(path, "strategy must be in 1.." + std::to_string(d));
      return std::nullopt;
    }
    return Index(*v - 1);
  }
};

inline ModelParams read_model(Reader& r, const json& j, const std::string& path) {
  ModelParams p;
  if (!r.object(j, path, {"d", "lambda", "delta", "q_plus", "q_minus", "beta", "w_I", "w_S"})) return p;
  const auto d = r.integer(r.member(j, path, "d", true), path + "/d");
  if (d && *d < 1) r.error(path + "/d", "d must be >= 1");
  p.d = d && *d >= 1 ? Index(*d) : 0;
  const std::optional<Index> size = p.d > 0 ? std::optional<Index>(p.d) : std::nullopt;
  if (auto v = r.number(r.member(j, path, "lambda", true), path + "/lambda")) p.lambda = *v;
  if (auto v = r.number(r.member(j, path, "delta", true), path + "/delta")) p.delta = *v;
  if (auto v = r.vector(r.member(j, path, "q_plus", true), path + "/q_plus", size)) p.q_plus = *v;
  if (auto v = r.vector(r.member(j, path, "q_minus", true), path + "/q_minus", size)) p.q_minus = *v;
  if (auto v = r.vector(r.member(j, path, "w_I", true), path + "/w_I", size)) p.w_I = *v;
  if (auto v = r.vector(r.member(j, path, "w_S", true), path + "/w_S", size)) p.w_S = *v;
  if (const json* b = r.member(j, path, "beta", true)) {
    if (!b->is_array() || (size && Index(b->size()) != *size)) {
      r.error(path + "/beta", "expected a d x d array (beta[k][j]: kI infects jS)");
    } else {
      p.beta = Matrix::Zero(Index(b->size()), Index(b->size()));
      for (std::size_t k = 0; k < b->size(); ++k) {
        const auto row = r.vector(&(*b)[k], path + "/beta/" + std::to_string(k), Index(b->size()));
        if (row) p.beta.row(Index(k)) = row->transpose();
      }
    }
  }
  const bool complete = p.d > 0 && p.q_plus.size() == p.d && p.q_minus.size() == p.d && p.w_I.size() == p.d &&
                        p.w_S.size() == p.d && p.beta.rows() == p.d;
  if (complete)
    for (const auto& e : validate(p)) r.error(path, e);
  return p;
}

inline GridSpec read_grid(Reader& r, const json* j, const std::string& path) {
  GridSpec g;
  if (!j) return g;
  if (!r.object(*j, path, {"t_start", "t_end", "n_steps"})) return g;
  if (auto v = r.number(r.member(*j, path, "t_start", false), path + "/t_start")) g.t_start = *v;
  if (auto v = r.number(r.member(*j, path, "t_end", true), path + "/t_end")) g.t_end = *v;
  if (auto v = r.integer(r.member(*j, path, "n_steps", false), path + "/n_steps")) {
    if (*v < 1)
      r.error(path + "/n_steps", "must be >= 1");
    else
      g.n_steps = std::size_t(*v);
  }
  if (!(g.t_end > g.t_start)) r.error(path, "t_end must exceed t_start");
  return g;
}

inline StateSpec read_state(Reader& r, const json* j, const std::string& path, Index states) {
  StateSpec s;
  if (!j) return s;
  if (j->is_string()) {
    const auto name = j->get<std::string>();
    if (name == "uniform")
      s.kind = StateSpec::Kind::uniform;
    else if (name == "fixed_point")
      s.kind = StateSpec::Kind::fixed_point;
    else
      r.error(path, "expected \"uniform\", \"fixed_point\" or an array");
    return s;
  }
  if (auto v = r.vector(j, path, states)) {
    s.kind = StateSpec::Kind::explicit_values;
    s.values = *v;
    if (v->minCoeff() < 0.0 || std::abs(v->sum() - 1.0) > kSimplexTolerance)
      r.error(path, "initial state must be nonnegative and sum to 1");
  }
  return s;
}

inline ValueSpec read_values(Reader& r, const json* j, const std::string& path, Index states, ValueSpec fallback) {
  if (!j) return fallback;
  ValueSpec v;
  if (j->is_string()) {
    const auto name = j->get<std::string>();
    if (name == "zero")
      v.kind = ValueSpec::Kind::zero;
    else if (name == "stationary")
      v.kind = ValueSpec::Kind::stationary;
    else
      r.error(path, "expected \"zero\", \"stationary\" or an array");
    return v;
  }
  if (auto values = r.vector(j, path, states)) {
    v.kind = ValueSpec::Kind::explicit_values;
    v.values = *values;
  }
  return v;
}

inline StationaryControl read_control(Reader& r, const json* j, const std::string& path, Index d) {
  StationaryControl u = StationaryControl::single(std::max<Index>(d, 1), 0);
  if (!j) return u;
  if (!r.object(*j, path, {"type", "i", "k", "target_I", "target_S"})) return u;
  const auto type = r.string(r.member(*j, path, "type", true), path + "/type");
  if (!type) return u;
  if (*type == "single") {
    if (auto i = r.strategy(r.member(*j, path, "i", true), path + "/i", d)) u = StationaryControl::single(d, *i);
  } else if (*type == "mixed") {
    const auto i = r.strategy(r.member(*j, path, "i", true), path + "/i", d);
    const auto k = r.strategy(r.member(*j, path, "k", true), path + "/k", d);
    if (i && k) {
      if (*i == *k)
        r.error(path, "mixed control needs k != i");
      else
        u = StationaryControl::mixed(d, *i, *k);
    }
  } else if (*type == "custom") {
    StationaryControl c;
    bool ok = true;
    for (const char* key : {"target_I", "target_S"}) {
      const json* t = r.member(*j, path, key, true);
      if (!t) {
        ok = false;
        continue;
      }
      if (!t->is_array() || Index(t->size()) != d) {
        r.error(path + "/" + key, "expected " + std::to_string(d) + " strategies");
        ok = false;
        continue;
      }
      auto& dst = std::string(key) == "target_I" ? c.target_I : c.target_S;
      for (std::size_t n = 0; n < t->size(); ++n) {
        const auto m = r.strategy(&(*t)[n], path + "/" + key + "/" + std::to_string(n), d);
        ok = ok && m.has_value();
        dst.push_back(m.value_or(0));
      }
    }
    if (ok) u = c;
  } else {
    r.error(path + "/type", "expected \"single\", \"mixed\" or \"custom\"");
  }
  return u;
}

}  // namespace detail

/// Validates a scenario document; throws ConfigError listing every problem.
inline ScenarioConfig parse_config(const json& doc) {
  detail::Reader r;
  ScenarioConfig cfg;
  if (!r.object(doc, "", {"model", "run", "simulate", "turnpike", "nplayer", "sweep", "output", "seed", "threads"}))
    throw ConfigError(r.errors);

  if (const json* m = r.member(doc, "", "model", true)) cfg.model = detail::read_model(r, *m, "/model");
  const Index d = cfg.model.d;
  const Index states = 2 * d;

  if (auto run = r.string(r.member(doc, "", "run", true), "/run")) {
    bool known = false;
    for (auto kind : {RunKind::equilibria, RunKind::simulate, RunKind::turnpike, RunKind::nplayer, RunKind::sweep})
      if (*run == to_string(kind)) {
        cfg.run = kind;
        known = true;
      }
    if (!known) r.error("/run", "expected one of equilibria, simulate, turnpike, nplayer, sweep");
  }

  if (const json* s = r.member(doc, "", "seed", false)) {
    if (!s->is_number_unsigned())
      r.error("/seed", "expected a nonnegative integer");
    else
      cfg.seed = s->get<std::uint64_t>();
  }
  if (auto t = r.integer(r.member(doc, "", "threads", false), "/threads")) {
    if (*t < 1)
      r.error("/threads", "must be >= 1");
    else
      cfg.threads = unsigned(*t);
  }

  if (const json* o = r.member(doc, "", "output", false); o && r.object(*o, "/output", {"directory", "format"})) {
    if (auto dir = r.string(r.member(*o, "/output", "directory", false), "/output/directory")) cfg.output.directory = *dir;
    if (auto fmt = r.string(r.member(*o, "/output", "format", false), "/output/format")) {
      if (*fmt == "csv")
        cfg.output.format = OutputFormat::csv;
      else if (*fmt == "json")
        cfg.output.format = OutputFormat::json;
      else
        r.error("/output/format", "expected \"csv\" or \"json\"");
    }
  }

  if (d > 0) {
    if (const json* s = r.member(doc, "", "simulate", cfg.run == RunKind::simulate);
        s && r.object(*s, "/simulate", {"control", "x0", "gT", "grid", "mode"})) {
      SimulateSpec spec;
      spec.control = detail::read_control(r, r.member(*s, "/simulate", "control", true), "/simulate/control", d);
      spec.x0 = detail::read_state(r, r.member(*s, "/simulate", "x0", false), "/simulate/x0", states);
      spec.gT = detail::read_values(r, r.member(*s, "/simulate", "gT", false), "/simulate/gT", states, {});
      spec.grid = detail::read_grid(r, r.member(*s, "/simulate", "grid", true), "/simulate/grid");
      if (auto mode = r.string(r.member(*s, "/simulate", "mode", false), "/simulate/mode")) {
        if (*mode == "fixed_control")
          spec.mode = HjbMode::fixed_control;
        else if (*mode == "adaptive")
          spec.mode = HjbMode::adaptive;
        else
          r.error("/simulate/mode", "expected \"fixed_control\" or \"adaptive\"");
      }
      if ((spec.x0.kind == StateSpec::Kind::fixed_point || spec.gT.kind == ValueSpec::Kind::stationary) &&
          !spec.control.is_canonical())
        r.error("/simulate", "fixed_point/stationary specs need a single or mixed control");
      cfg.simulate = spec;
    }

    if (const json* t = r.member(doc, "", "turnpike", cfg.run == RunKind::turnpike);
        t && r.object(*t, "/turnpike", {"strategy", "x0", "gT", "grid", "epsilon"})) {
      TurnpikeSpec spec;
      if (auto i = r.strategy(r.member(*t, "/turnpike", "strategy", true), "/turnpike/strategy", d)) spec.strategy = *i;
      spec.x0 = detail::read_state(r, r.member(*t, "/turnpike", "x0", false), "/turnpike/x0", states);
      spec.gT = detail::read_values(r, r.member(*t, "/turnpike", "gT", false), "/turnpike/gT", states, spec.gT);
      spec.grid = detail::read_grid(r, r.member(*t, "/turnpike", "grid", true), "/turnpike/grid");
      if (auto eps = r.number(r.member(*t, "/turnpike", "epsilon", false), "/turnpike/epsilon")) {
        if (!(*eps > 0.0))
          r.error("/turnpike/epsilon", "must be > 0");
        else
          spec.epsilon = *eps;
      }
      cfg.turnpike = spec;
    }

    if (const json* n = r.member(doc, "", "nplayer", cfg.run == RunKind::nplayer);
        n && r.object(*n, "/nplayer", {"control", "x0", "grid", "N_list", "replications"})) {
      NPlayerSpec spec;
      spec.control = detail::read_control(r, r.member(*n, "/nplayer", "control", true), "/nplayer/control", d);
      spec.x0 = detail::read_state(r, r.member(*n, "/nplayer", "x0", false), "/nplayer/x0", states);
      spec.grid = detail::read_grid(r, r.member(*n, "/nplayer", "grid", true), "/nplayer/grid");
      if (const json* list = r.member(*n, "/nplayer", "N_list", true)) {
        if (!list->is_array() || list->empty()) {
          r.error("/nplayer/N_list", "expected a nonempty array of integers");
        } else {
          for (std::size_t m = 0; m < list->size(); ++m) {
            const auto N = r.integer(&(*list)[m], "/nplayer/N_list/" + std::to_string(m));
            if (N && *N < 1) r.error("/nplayer/N_list/" + std::to_string(m), "N must be >= 1");
            if (N && *N >= 1) spec.N_list.push_back(long(*N));
          }
        }
      }
      if (auto reps = r.integer(r.member(*n, "/nplayer", "replications", false), "/nplayer/replications")) {
        if (*reps < 1)
          r.error("/nplayer/replications", "must be >= 1");
        else
          spec.replications = std::size_t(*reps);
      }
      if (spec.x0.kind == StateSpec::Kind::fixed_point && !spec.control.is_canonical())
        r.error("/nplayer/x0", "fixed_point needs a single or mixed control");
      cfg.nplayer = spec;
    }
  }

  if (const json* s = r.member(doc, "", "sweep", cfg.run == RunKind::sweep);
      s && r.object(*s, "/sweep", {"axes"})) {
    SweepSpec spec;
    const json* axes = r.member(*s, "/sweep", "axes", true);
    if (axes && (!axes->is_array() || axes->empty())) r.error("/sweep/axes", "expected a nonempty array of axes");
    if (axes && axes->is_array()) {
      for (std::size_t a = 0; a < axes->size(); ++a) {
        const std::string path = "/sweep/axes/" + std::to_string(a);
        const json& axis = (*axes)[a];
        if (!r.object(axis, path, {"path", "values"})) continue;
        SweepAxis ax;
        if (auto p = r.string(r.member(axis, path, "path", true), path + "/path")) {
          ax.path = *p;
          try {
            const json::json_pointer ptr(ax.path);
            if (ax.path.rfind("/model/", 0) != 0 || !doc.contains(ptr))
              r.error(path + "/path", "must point at an existing /model entry: " + ax.path);
          } catch (const json::exception&) {
            r.error(path + "/path", "not a JSON pointer: " + ax.path);
          }
        }
        if (const json* values = r.member(axis, path, "values", true)) {
          if (!values->is_array() || values->empty())
            r.error(path + "/values", "sweep axis is empty");
          else
            ax.values.assign(values->begin(), values->end());
        }
        spec.axes.push_back(std::move(ax));
      }
    }
    cfg.sweep = spec;
  }

  if (!r.errors.empty()) throw ConfigError(r.errors);
  return cfg;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path.string() + ": cannot open file"});
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
}

inline ScenarioConfig parse_config(const std::filesystem::path& path) { return parse_config(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Canonical serialization

inline json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json model_json(const ModelParams& p) {
  json beta = json::array();
  for (Index k = 0; k < p.beta.rows(); ++k) beta.push_back(vector_json(p.beta.row(k).transpose()));
  return {{"d", p.d},           {"lambda", p.lambda},           {"delta", p.delta},
          {"q_plus", vector_json(p.q_plus)}, {"q_minus", vector_json(p.q_minus)}, {"beta", beta},
          {"w_I", vector_json(p.w_I)},       {"w_S", vector_json(p.w_S)}};
}

inline json control_json(const StationaryControl& u) {
  const Index d = u.strategies();
  for (Index i = 0; i < d; ++i) {
    if (u == StationaryControl::single(d, i)) return {{"type", "single"}, {"i", i + 1}};
    for (Index k = 0; k < d; ++k)
      if (k != i && u == StationaryControl::mixed(d, i, k)) return {{"type", "mixed"}, {"i", i + 1}, {"k", k + 1}};
  }
  json tI = json::array(), tS = json::array();
  for (Index j = 0; j < d; ++j) {
    tI.push_back(u.target_I[std::size_t(j)] + 1);
    tS.push_back(u.target_S[std::size_t(j)] + 1);
  }
  return {{"type", "custom"}, {"target_I", tI}, {"target_S", tS}};
}

inline json state_json(const StateSpec& s) {
  switch (s.kind) {
    case StateSpec::Kind::uniform: return "uniform";
    case StateSpec::Kind::fixed_point: return "fixed_point";
    case StateSpec::Kind::explicit_values: return vector_json(s.values);
  }
  return nullptr;
}

inline json values_json(const ValueSpec& v) {
  switch (v.kind) {
    case ValueSpec::Kind::zero: return "zero";
    case ValueSpec::Kind::stationary: return "stationary";
    case ValueSpec::Kind::explicit_values: return vector_json(v.values);
  }
  return nullptr;
}

inline json grid_json(const GridSpec& g) {
  json out = {{"t_start", g.t_start}, {"t_end", g.t_end}};
  if (g.n_steps) out["n_steps"] = *g.n_steps;
  return out;
}

/// Canonical document: every default made explicit, so that
/// parse_config(serialize(c)) == c and serialize is idempotent.
inline json serialize(const ScenarioConfig& c) {
  json doc = {{"model", model_json(c.model)},
              {"run", to_string(c.run)},
              {"seed", c.seed},
              {"threads", c.threads},
              {"output",
               {{"directory", c.output.directory}, {"format", c.output.format == OutputFormat::csv ? "csv" : "json"}}}};
  if (c.simulate)
    doc["simulate"] = {{"control", control_json(c.simulate->control)},
                       {"x0", state_json(c.simulate->x0)},
                       {"gT", values_json(c.simulate->gT)},
                       {"grid", grid_json(c.simulate->grid)},
                       {"mode", c.simulate->mode == HjbMode::fixed_control ? "fixed_control" : "adaptive"}};
  if (c.turnpike)
    doc["turnpike"] = {{"strategy", c.turnpike->strategy + 1},
                       {"x0", state_json(c.turnpike->x0)},
                       {"gT", values_json(c.turnpike->gT)},
                       {"grid", grid_json(c.turnpike->grid)},
                       {"epsilon", c.turnpike->epsilon}};
  if (c.nplayer)
    doc["nplayer"] = {{"control", control_json(c.nplayer->control)},
                      {"x0", state_json(c.nplayer->x0)},
                      {"grid", grid_json(c.nplayer->grid)},
                      {"N_list", c.nplayer->N_list},
                      {"replications", c.nplayer->replications}};
  if (c.sweep) {
    json axes = json::array();
    for (const auto& a : c.sweep->axes) axes.push_back({{"path", a.path}, {"values", a.values}});
    doc["sweep"] = {{"axes", axes}};
  }
  return doc;
}

}  // namespace mfg::cli
