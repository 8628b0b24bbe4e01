// Run dispatch and result persistence. Every run writes manifest.json; bulk
// numbers go to CSV (17 significant digits) or JSON depending on the config.
#pragma once

#include "mfg/cli/config.hpp"
#include "mfg/dynamics.hpp"
#include "mfg/finite_n.hpp"
#include "mfg/parallel.hpp"
#include "mfg/stationary.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifndef MFG_VERSION
#define MFG_VERSION "0.1.0"
#endif

namespace mfg::cli {

namespace fs = std::filesystem;

struct ResultBundle {
  fs::path directory;
  std::vector<std::string> files;
  std::size_t points_total = 0;
  std::size_t points_ok = 0;
  std::vector<std::string> errors;

  int exit_code() const { return points_ok > 0 ? 0 : 2; }
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Tabular output shared by all bulk writers.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  static std::string cell(const json& v) {
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
    if (v.is_string()) return csv_quote(v.get<std::string>());
    if (v.is_null()) return "";
    return csv_quote(v.dump());
  }

  void write(const fs::path& stem, OutputFormat format, ResultBundle& bundle) const {
    const fs::path path = stem.string() + (format == OutputFormat::csv ? ".csv" : ".json");
    std::ofstream out(path);
    if (format == OutputFormat::csv) {
      for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
      out << '\n';
      for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << cell(row[c]);
        out << '\n';
      }
    } else {
      out << json{{"columns", columns}, {"rows", rows}}.dump(1) << '\n';
    }
    if (!out) throw std::runtime_error("cannot write " + path.string());
    bundle.files.push_back(path.filename().string());
  }
};

inline void write_json(const fs::path& path, const json& doc, ResultBundle& bundle) {
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
  bundle.files.push_back(path.filename().string());
}

// ---------------------------------------------------------------------------
// Serialization of results

inline json stability_json(const StabilityReport& s) {
  json spectrum = json::array();
  for (const auto& z : s.spectrum) spectrum.push_back({z.real(), z.imag()});
  json out = {{"spectrum", spectrum},           {"max_real_part", s.max_real_part}, {"stable", s.stable},
              {"spectral_mismatch", s.spectral_mismatch}, {"consistent", s.consistent}};
  if (!std::isnan(s.xi_principal)) {
    out["xi_principal"] = s.xi_principal;
    out["closed_form"] = s.closed_form;
  }
  return out;
}

inline json margins_json(const ConsistencyMargins& m) {
  const auto rows = [](const std::vector<Index>& js, const std::vector<double>& exact,
                       const std::vector<double>& asym, const std::vector<double>& small) {
    json out = json::array();
    for (std::size_t n = 0; n < js.size(); ++n)
      out.push_back({{"j", js[n] + 1},
                     {"exact", exact[n]},
                     {"asymptotic", n < asym.size() ? json(asym[n]) : json()},
                     {"small_parameter", n < small.size() ? json(small[n]) : json()}});
    return out;
  };
  json sufficient = json::array();
  for (const auto& c : m.sufficient_conditions)
    sufficient.push_back(
        {{"name", c.name}, {"strategy", c.strategy >= 0 ? json(c.strategy + 1) : json()}, {"value", c.value}});
  return {{"reference_I", m.reference_I + 1},
          {"reference_S", m.reference_S + 1},
          {"I", rows(m.compared_I, m.margin_I, m.asymptotic_margin_I, m.small_parameter_margin_I)},
          {"S", rows(m.compared_S, m.margin_S, m.asymptotic_margin_S, m.small_parameter_margin_S)},
          {"min_exact", m.min_exact()},
          {"sufficient_conditions", sufficient}};
}

inline json candidate_json(const CandidateOutcome& c) {
  json out = {{"control", c.control.label()},
              {"i", c.control.target_I.front() + 1},
              {"k", c.control.target_S.front() + 1},
              {"status", to_string(c.status)},
              {"diagnostic", c.diagnostic}};
  if (c.solution) {
    const auto& s = *c.solution;
    out["x_star"] = vector_json(s.x_star.values());
    out["g"] = vector_json(s.g.g);
    out["residual"] = s.residual;
    out["degenerate"] = s.degenerate;
    out["stability"] = stability_json(s.stability);
    out["margins"] = margins_json(s.margins);
  }
  return out;
}

inline json enumeration_json(const EnumerationResult& r) {
  json candidates = json::array(), equilibria = json::array();
  for (const auto& c : r.candidates) {
    candidates.push_back(candidate_json(c));
    if (c.is_equilibrium()) equilibria.push_back(c.control.label());
  }
  return {{"equilibria", equilibria}, {"candidates", candidates}};
}

inline std::vector<std::string> trajectory_columns(Index d) {
  std::vector<std::string> cols{"t"};
  for (const char* prefix : {"x_", "g_"})
    for (Index s = 0; s < 2 * d; ++s) cols.push_back(prefix + state_label(s));
  cols.push_back("cone_ok");
  cols.push_back("argmin_ok");
  return cols;
}

inline Table trajectory_table(const TimeGrid& grid, const std::vector<MixedState>& x,
                              const std::vector<ValueVector>& g, const std::vector<bool>& cone_ok,
                              const std::vector<bool>& argmin_ok) {
  Table t;
  t.columns = trajectory_columns(x.front().strategies());
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    std::vector<json> row{grid.time(n)};
    for (Index s = 0; s < x[n].values().size(); ++s) row.emplace_back(x[n](s));
    for (Index s = 0; s < g[n].g.size(); ++s) row.emplace_back(g[n].g(s));
    row.emplace_back(bool(cone_ok[n]));
    row.emplace_back(bool(argmin_ok[n]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Resolving symbolic initial and terminal data

inline MixedState resolve_state(const StateSpec& spec, const ModelParams& p, const StationaryControl& u) {
  switch (spec.kind) {
    case StateSpec::Kind::uniform: return MixedState::uniform(p.d);
    case StateSpec::Kind::explicit_values: return MixedState(spec.values);
    case StateSpec::Kind::fixed_point: {
      const Index i = u.target_I.front(), k = u.target_S.front();
      if (i == k) return fixed_point_single(p, i).state;
      const auto fp = fixed_point_mixed(p, i, k);
      if (!fp.converged) throw std::runtime_error("fixed point: " + fp.diagnostic);
      return fp.state;
    }
  }
  throw std::logic_error("resolve_state");
}

inline ValueVector resolve_values(const ValueSpec& spec, const ModelParams& p, const StationaryControl& u) {
  switch (spec.kind) {
    case ValueSpec::Kind::zero: return ValueVector(Vector::Zero(p.states()));
    case ValueSpec::Kind::explicit_values: return ValueVector(spec.values);
    case ValueSpec::Kind::stationary: {
      const Index i = u.target_I.front(), k = u.target_S.front();
      if (i == k) return hjb_single_exact(p, i, fixed_point_single(p, i).x_star);
      const auto fp = fixed_point_mixed(p, i, k);
      if (!fp.converged) throw std::runtime_error("fixed point: " + fp.diagnostic);
      return hjb_mixed_exact(p, i, k, fp.state);
    }
  }
  throw std::logic_error("resolve_values");
}

// ---------------------------------------------------------------------------
// Runs

inline void run_equilibria(const ScenarioConfig& cfg, const fs::path& dir, ResultBundle& bundle) {
  bundle.points_total = 1;
  const auto result = enumerate_equilibria(cfg.model, cfg.threads);
  write_json(dir / "equilibria.json", enumeration_json(result), bundle);
  bundle.points_ok = 1;
}

inline void run_simulate(const ScenarioConfig& cfg, const fs::path& dir, ResultBundle& bundle) {
  bundle.points_total = 1;
  const auto& spec = *cfg.simulate;
  const auto grid = spec.grid.resolve(cfg.model);
  const auto x0 = resolve_state(spec.x0, cfg.model, spec.control);
  const auto gT = resolve_values(spec.gT, cfg.model, spec.control);
  const auto x = integrate_forward(cfg.model, x0, spec.control, grid);
  const auto g = integrate_backward(cfg.model, gT, x, grid, spec.control, spec.mode);
  trajectory_table(grid, x, g.g_path, g.cone_ok, g.argmin_ok).write(dir / "trajectory", cfg.output.format, bundle);
  bundle.points_ok = 1;
}

inline void run_turnpike(const ScenarioConfig& cfg, const fs::path& dir, ResultBundle& bundle) {
  bundle.points_total = 1;
  const auto& spec = *cfg.turnpike;
  const auto& p = cfg.model;
  const auto u = StationaryControl::single(p.d, spec.strategy);
  const auto grid = spec.grid.resolve(p);
  const auto res = solve_turnpike(p, spec.strategy, resolve_state(spec.x0, p, u), resolve_values(spec.gT, p, u), grid);

  json hypotheses = json::array();
  for (const auto& c : res.hypotheses.checks)
    hypotheses.push_back({{"condition", c.condition},
                          {"strategy", c.strategy + 1},
                          {"margin", c.margin},
                          {"holds", c.holds()}});
  json summary = {{"strategy", spec.strategy + 1},
                  {"status", to_string(res.status)},
                  {"hypotheses", hypotheses},
                  {"first_violation_time", res.first_violation_time ? json(*res.first_violation_time) : json()}};
  if (res.trajectory) {
    const auto& sol = *res.trajectory;
    const auto eq = solve_candidate(p, spec.strategy, spec.strategy);
    const auto& st = sol.turnpike_stats;
    summary["turnpike_stats"] = {{"window_start", st.window_start},
                                 {"window_end", st.window_end},
                                 {"x_sup_mid", st.x_sup_mid},
                                 {"g_sup_mid", st.g_sup_mid},
                                 {"gap_mismatch", st.gap_mismatch}};
    if (eq.solution) {
      const auto m = turnpike_metrics(sol, *eq.solution, spec.epsilon);
      summary["metrics"] = {{"epsilon", spec.epsilon},
                            {"entry_time", m.entry_time ? json(*m.entry_time) : json()},
                            {"exit_time", m.exit_time ? json(*m.exit_time) : json()},
                            {"inside_fraction", m.inside_fraction}};
    }
    trajectory_table(sol.grid, sol.x_path, sol.g_path, sol.cone_ok, sol.argmin_ok)
        .write(dir / "trajectory", cfg.output.format, bundle);
    bundle.points_ok = 1;
  } else {
    bundle.errors.push_back("turnpike hypotheses violated; no trajectory computed");
  }
  write_json(dir / "turnpike.json", summary, bundle);
}

inline void run_nplayer(const ScenarioConfig& cfg, const fs::path& dir, ResultBundle& bundle) {
  bundle.points_total = 1;
  const auto& spec = *cfg.nplayer;
  const auto grid = spec.grid.resolve(cfg.model);
  const auto x0 = resolve_state(spec.x0, cfg.model, spec.control);
  const auto rows = lln_error(cfg.model, spec.control, x0, grid, spec.N_list, spec.replications, cfg.seed, cfg.threads);
  Table t;
  t.columns = {"N", "replications", "mean_sup_error", "std_error"};
  for (const auto& r : rows) t.rows.push_back({r.N, r.replications, r.mean_sup_error, r.std_error});
  t.write(dir / "lln_errors", cfg.output.format, bundle);
  bundle.points_ok = 1;
}

/// Cartesian product of the sweep axes; each point re-validates the patched
/// scenario and enumerates equilibria.
inline void run_sweep(const ScenarioConfig& cfg, const fs::path& dir, ResultBundle& bundle) {
  const auto& axes = cfg.sweep->axes;
  json base = serialize(cfg);
  base["run"] = "equilibria";
  base.erase("sweep");

  std::size_t points = 1;
  for (const auto& a : axes) points *= a.values.size();
  bundle.points_total = points;

  struct Point {
    std::vector<json> overrides;
    std::optional<EnumerationResult> result;
    std::string error;
  };
  std::vector<Point> results(points);
  parallel_for(points, cfg.threads, [&](std::size_t n) {
    Point& pt = results[n];
    json doc = base;
    std::size_t rest = n;
    // last axis varies fastest
    pt.overrides.resize(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      const auto& axis = axes[a];
      pt.overrides[a] = axis.values[rest % axis.values.size()];
      rest /= axis.values.size();
      doc[json::json_pointer(axis.path)] = pt.overrides[a];
    }
    try {
      const auto point_cfg = parse_config(doc);
      pt.result = enumerate_equilibria(point_cfg.model, 1);
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
  });

  Table t;
  t.columns = {"point"};
  for (const auto& a : axes) t.columns.push_back(a.path);
  for (const char* c : {"control", "status", "degenerate", "x_iI", "residual", "min_margin", "max_real_part",
                        "stable", "diagnostic"})
    t.columns.push_back(c);
  json points_json = json::array();
  for (std::size_t n = 0; n < points; ++n) {
    const auto& pt = results[n];
    std::vector<json> prefix{n};
    prefix.insert(prefix.end(), pt.overrides.begin(), pt.overrides.end());
    json entry = {{"point", n}, {"overrides", pt.overrides}};
    if (!pt.result) {
      bundle.errors.push_back("point " + std::to_string(n) + ": " + pt.error);
      auto row = prefix;
      row.insert(row.end(), {json(), "failed", json(), json(), json(), json(), json(), json(), pt.error});
      t.rows.push_back(std::move(row));
      entry["error"] = pt.error;
      points_json.push_back(entry);
      continue;
    }
    ++bundle.points_ok;
    for (const auto& c : pt.result->candidates) {
      auto row = prefix;
      row.push_back(c.control.label());
      row.push_back(to_string(c.status));
      if (c.solution) {
        const auto& s = *c.solution;
        row.insert(row.end(), {json(s.degenerate), json(s.x_star.I(c.control.target_I.front())), json(s.residual),
                               json(s.margins.min_exact()), json(s.stability.max_real_part),
                               json(s.stability.stable)});
      } else {
        row.insert(row.end(), {json(), json(), json(), json(), json(), json()});
      }
      row.push_back(c.diagnostic);
      t.rows.push_back(std::move(row));
    }
    entry["result"] = enumeration_json(*pt.result);
    points_json.push_back(entry);
  }
  if (cfg.output.format == OutputFormat::csv)
    t.write(dir / "sweep", OutputFormat::csv, bundle);
  else
    write_json(dir / "sweep.json", {{"axes", serialize(cfg)["sweep"]["axes"]}, {"points", points_json}}, bundle);
}

inline void write_manifest(const fs::path& dir, const json& config, const ResultBundle& bundle,
                           const std::string& started, int exit_code) {
  json doc = {{"tool", "mfg_solve"},
              {"version", MFG_VERSION},
              {"started_utc", started},
              {"finished_utc", utc_timestamp()},
              {"config", config},
              {"points_total", bundle.points_total},
              {"points_ok", bundle.points_ok},
              {"exit_code", exit_code},
              {"files", bundle.files},
              {"errors", bundle.errors}};
  std::ofstream out(dir / "manifest.json");
  out << doc.dump(2) << '\n';
}

/// Runs cfg into dir and always leaves a manifest behind.
inline ResultBundle execute(const ScenarioConfig& cfg, const fs::path& dir) {
  const std::string started = utc_timestamp();
  ResultBundle bundle;
  bundle.directory = dir;
  fs::create_directories(dir);
  try {
    switch (cfg.run) {
      case RunKind::equilibria: run_equilibria(cfg, dir, bundle); break;
      case RunKind::simulate: run_simulate(cfg, dir, bundle); break;
      case RunKind::turnpike: run_turnpike(cfg, dir, bundle); break;
      case RunKind::nplayer: run_nplayer(cfg, dir, bundle); break;
      case RunKind::sweep: run_sweep(cfg, dir, bundle); break;
    }
  } catch (const std::exception& e) {
    bundle.errors.push_back(e.what());
  }
  if (bundle.points_total == 0) bundle.points_total = 1;
  write_manifest(dir, serialize(cfg), bundle, started, bundle.exit_code());
  bundle.files.push_back("manifest.json");
  return bundle;
}

}  // namespace mfg::cli
