// Time-dependent solutions: forward kinetic paths, backward discounted HJB
// paths, and the stationary-control (turnpike) construction around a
// Single(i) equilibrium.
#pragma once

#include "mfg/model.hpp"
#include "mfg/stationary.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace mfg {

/// Tolerance on how far an RK4 stage may leave the simplex before the step
/// is subdivided.
inline constexpr double kStageSimplexTolerance = 1e-6;
inline constexpr int kMaxStepHalvings = 20;

struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  std::size_t n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double start, double end, std::size_t steps) : t_start(start), t_end(end), n_steps(steps) {
    if (!(t_end > t_start)) throw std::invalid_argument("TimeGrid: t_end must exceed t_start");
    if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
  }

  double step() const { return (t_end - t_start) / double(n_steps); }
  double time(std::size_t n) const { return n == n_steps ? t_end : t_start + double(n) * step(); }
  std::size_t nodes() const { return n_steps + 1; }
};

/// Default step min(0.01, 0.1/lambda).
inline double default_step(const ModelParams& p) { return std::min(0.01, 0.1 / p.lambda); }

/// Uniform grid on [t_start, t_end] whose step does not exceed default_step(p).
inline TimeGrid default_grid(const ModelParams& p, double t_start, double t_end) {
  const auto steps = std::size_t(std::ceil((t_end - t_start) / default_step(p) - 1e-9));
  return TimeGrid(t_start, t_end, std::max<std::size_t>(steps, 1));
}

namespace detail {

inline bool stage_on_simplex(const Vector& x) { return x.minCoeff() >= -kStageSimplexTolerance; }

// One classical RK4 step of the kinetic field; nullopt if a stage leaves the
// simplex by more than the stage tolerance.
inline std::optional<Vector> kinetic_rk4(const ModelParams& p, const Vector& x, const StationaryControl& u, double h) {
  const Vector k1 = kinetic_field(p, x, u);
  const Vector s2 = x + 0.5 * h * k1;
  if (!stage_on_simplex(s2)) return std::nullopt;
  const Vector k2 = kinetic_field(p, s2, u);
  const Vector s3 = x + 0.5 * h * k2;
  if (!stage_on_simplex(s3)) return std::nullopt;
  const Vector k3 = kinetic_field(p, s3, u);
  const Vector s4 = x + h * k3;
  if (!stage_on_simplex(s4)) return std::nullopt;
  const Vector k4 = kinetic_field(p, s4, u);
  Vector next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!stage_on_simplex(next)) return std::nullopt;
  return next;
}

}  // namespace detail

/// Forward kinetic path under a fixed control, one node per grid point. Each
/// node is clipped and renormalized onto the simplex. A step whose stages
/// leave the simplex is split into 2, 4, ... substeps (at most 2^20).
inline std::vector<MixedState> integrate_forward(const ModelParams& p, const MixedState& x0,
                                                 const StationaryControl& u, const TimeGrid& grid) {
  if (x0.values().size() != p.states()) throw std::invalid_argument("integrate_forward: dimension mismatch");
  std::vector<MixedState> path;
  path.reserve(grid.nodes());
  path.push_back(x0);
  const double h = grid.step();
  for (std::size_t n = 0; n < grid.n_steps; ++n) {
    const Vector& x = path.back().values();
    std::optional<Vector> next;
    for (int halvings = 0; halvings <= kMaxStepHalvings && !next; ++halvings) {
      const long substeps = 1L << halvings;
      Vector y = x;
      bool ok = true;
      for (long s = 0; s < substeps && ok; ++s) {
        auto stepped = detail::kinetic_rk4(p, y, u, h / double(substeps));
        if (stepped) {
          y = MixedState::project(std::move(*stepped), kStageSimplexTolerance).values();
        } else {
          ok = false;
        }
      }
      if (ok) next = std::move(y);
    }
    if (!next)
      throw std::runtime_error("integrate_forward: step rejected after " + std::to_string(kMaxStepHalvings) +
                               " halvings at t=" + std::to_string(grid.time(n)));
    path.push_back(MixedState::project(std::move(*next)));
  }
  return path;
}

enum class HjbMode {
  fixed_control,  ///< decision term evaluated at the given control (linear)
  adaptive,       ///< decision term minimized at every stage
};

/// Cone around [i(I), k(S)]: g(iI) <= g(jI), g(kS) <= g(jS), g(jI) >= g(jS).
inline bool in_cone(const ValueVector& g, Index i, Index k, double tol = kTieTolerance) {
  for (Index j = 0; j < g.strategies(); ++j) {
    if (g.I(i) > g.I(j) + tol) return false;
    if (g.S(k) > g.S(j) + tol) return false;
    if (g.I(j) < g.S(j) - tol) return false;
  }
  return true;
}

struct BackwardPath {
  std::vector<ValueVector> g_path;  ///< indexed like the grid nodes
  std::vector<bool> cone_ok;
  std::vector<bool> argmin_ok;
};

/// Backward RK4 integration of the discounted HJB from g(t_end) = gT to
/// t_start along a forward path given on the same grid. The path is
/// interpolated linearly at the half-step stages. cone_ok is evaluated for
/// the cone of u's I/S targets, argmin_ok checks that u is a best response.
inline BackwardPath integrate_backward(const ModelParams& p, const ValueVector& gT,
                                       const std::vector<MixedState>& x_path, const TimeGrid& grid,
                                       const StationaryControl& u, HjbMode mode = HjbMode::fixed_control) {
  if (x_path.size() != grid.nodes()) throw std::invalid_argument("integrate_backward: path/grid size mismatch");
  if (gT.g.size() != p.states()) throw std::invalid_argument("integrate_backward: dimension mismatch");
  const double h = grid.step();
  const auto rhs = [&](const Vector& x, const Vector& g) -> Vector {
    const ValueVector gv(g);
    return mode == HjbMode::fixed_control ? hjb_rhs(p, x, gv, u) : hjb_rhs(p, x, gv);
  };
  BackwardPath out;
  out.g_path.resize(grid.nodes());
  out.cone_ok.resize(grid.nodes());
  out.argmin_ok.resize(grid.nodes());
  out.g_path[grid.n_steps] = gT;
  for (std::size_t n = grid.n_steps; n > 0; --n) {
    const Vector& g = out.g_path[n].g;
    const Vector& x_hi = x_path[n].values();
    const Vector& x_lo = x_path[n - 1].values();
    const Vector x_mid = 0.5 * (x_hi + x_lo);
    const Vector k1 = rhs(x_hi, g);
    const Vector k2 = rhs(x_mid, g + 0.5 * h * k1);
    const Vector k3 = rhs(x_mid, g + 0.5 * h * k2);
    const Vector k4 = rhs(x_lo, g + h * k3);
    out.g_path[n - 1] = ValueVector(g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }
  const Index i = u.target_I.front(), k = u.target_S.front();
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    out.cone_ok[n] = in_cone(out.g_path[n], i, k);
    out.argmin_ok[n] = is_best_response(out.g_path[n], u);
  }
  return out;
}

/// g_t(iI) - g_t(iS) under Single(i) from its explicit solution
///   gap(t) = exp(-int_t^T a) gT_gap + (wI - wS) int_t^T exp(-int_t^s a) ds,
///   a = q+i + q-i + delta + sum_k beta(k,i) x_kI.
/// The inner integral of a uses the trapezoid rule on the grid (exact for a
/// piecewise linear a); the outer integral is taken per cell with 3-point
/// Gauss-Legendre on that piecewise linear a.
inline std::vector<double> gap_closed_form(const ModelParams& p, Index i, const std::vector<MixedState>& x_path,
                                           double gT_gap, const TimeGrid& grid) {
  if (x_path.size() != grid.nodes()) throw std::invalid_argument("gap_closed_form: path/grid size mismatch");
  const double h = grid.step();
  const double base = p.q_plus(i) + p.q_minus(i) + p.delta;
  std::vector<double> a(grid.nodes());
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    double interaction = 0.0;
    for (Index k = 0; k < p.d; ++k) interaction += p.beta(k, i) * x_path[n].I(k);
    a[n] = base + interaction;
  }
  static constexpr double gl_node = 0.7745966692414834;  // sqrt(3/5)
  static constexpr double gl_weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double taus[3] = {0.5 * h * (1.0 - gl_node), 0.5 * h, 0.5 * h * (1.0 + gl_node)};
  const double cost_gap = p.w_I(i) - p.w_S(i);

  std::vector<double> gap(grid.nodes());
  gap[grid.n_steps] = gT_gap;
  for (std::size_t n = grid.n_steps; n > 0; --n) {
    const double a0 = a[n - 1], a1 = a[n];
    const double slope = (a1 - a0) / h;
    double cell = 0.0;
    for (int q = 0; q < 3; ++q) {
      const double tau = taus[q];
      cell += gl_weights[q] * std::exp(-(a0 * tau + 0.5 * slope * tau * tau));
    }
    cell *= 0.5 * h;
    const double decay = std::exp(-0.5 * h * (a0 + a1));
    gap[n - 1] = decay * gap[n] + cost_gap * cell;
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Turnpike construction around Single(i)

struct HypothesisCheck {
  std::string condition;
  Index strategy = -1;
  double margin = 0.0;
  bool strict = true;

  bool holds(double tol = kTieTolerance) const { return strict ? margin > 0.0 : margin >= -tol; }
};

struct HypothesisReport {
  std::vector<HypothesisCheck> checks;

  std::vector<HypothesisCheck> violations() const {
    std::vector<HypothesisCheck> out;
    for (const auto& c : checks)
      if (!c.holds()) out.push_back(c);
    return out;
  }
  bool ok() const { return violations().empty(); }
  bool violates(const std::string& condition) const {
    for (const auto& c : checks)
      if (c.condition == condition && !c.holds()) return true;
    return false;
  }
};

/// Conditions under which the stationary control Single(i) stays optimal for
/// all times: strict cost ordering, rate ordering, gT inside the cone, and a
/// terminal gap small enough for the worst-case cone-boundary inequalities.
inline HypothesisReport check_turnpike_hypotheses(const ModelParams& p, Index i, const ValueVector& gT) {
  HypothesisReport rep;
  const double cost_gap = p.w_I(i) - p.w_S(i);
  const double rates = p.q_minus(i) + p.q_plus(i) + p.delta;
  const double terminal_gap = gT.I(i) - gT.S(i);
  const double gap_bound = terminal_gap + cost_gap / rates;
  double beta_into_i = 0.0;
  for (Index k = 0; k < p.d; ++k) beta_into_i = std::max(beta_into_i, p.beta(k, i));

  for (Index j = 0; j < p.d; ++j) {
    rep.checks.push_back({"terminal_cone_gap", j, gT.I(j) - gT.S(j), false});
    if (j == i) continue;
    rep.checks.push_back({"strict_cost_ordering_I", j,
                          (p.w_I(j) - p.w_I(i)) / cost_gap - (p.q_plus(j) - p.q_plus(i)) / rates, true});
    rep.checks.push_back({"strict_cost_ordering_S", j,
                          (p.w_S(j) - p.w_S(i)) / cost_gap - (p.q_minus(i) - p.q_minus(j)) / rates, true});
    rep.checks.push_back({"rate_ordering_q_plus", j, p.q_plus(j) - p.q_plus(i), true});
    rep.checks.push_back({"rate_ordering_q_minus", j, p.q_minus(i) - p.q_minus(j), true});
    rep.checks.push_back({"terminal_cone_I", j, gT.I(j) - gT.I(i), false});
    rep.checks.push_back({"terminal_cone_S", j, gT.S(j) - gT.S(i), false});

    double beta_into_j = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < p.d; ++k) beta_into_j = std::min(beta_into_j, p.beta(k, j));
    const double interaction = std::max(0.0, beta_into_i - beta_into_j);
    rep.checks.push_back(
        {"terminal_gap_small_I", j, (p.w_I(j) - p.w_I(i)) - (p.q_plus(j) - p.q_plus(i)) * gap_bound, true});
    rep.checks.push_back({"terminal_gap_small_S", j,
                          (p.w_S(j) - p.w_S(i)) - (p.q_minus(i) - p.q_minus(j) + interaction) * gap_bound, true});
  }
  return rep;
}

struct TurnpikeStats {
  double window_start = 0.0;  ///< middle 80% of the horizon
  double window_end = 0.0;
  double x_sup_mid = 0.0;  ///< sup |x(s) - x*| over the window
  double g_sup_mid = 0.0;  ///< sup |g(s) - g*| over the window
  double gap_mismatch = 0.0;  ///< sup |integrated gap - closed-form gap|
};

struct TrajectorySolution {
  TimeGrid grid;
  Index strategy = 0;
  std::vector<MixedState> x_path;
  std::vector<ValueVector> g_path;
  std::vector<bool> cone_ok;
  std::vector<bool> argmin_ok;
  std::vector<double> gap_closed;
  TurnpikeStats turnpike_stats;

  bool certified() const {
    for (std::size_t n = 0; n < cone_ok.size(); ++n)
      if (!cone_ok[n] || !argmin_ok[n]) return false;
    return true;
  }
};

enum class TurnpikeStatus { certified, hypothesis_violation, certification_failure };

inline const char* to_string(TurnpikeStatus s) {
  switch (s) {
    case TurnpikeStatus::certified: return "certified";
    case TurnpikeStatus::hypothesis_violation: return "hypothesis_violation";
    case TurnpikeStatus::certification_failure: return "certification_failure";
  }
  return "?";
}

struct TurnpikeResult {
  TurnpikeStatus status = TurnpikeStatus::hypothesis_violation;
  HypothesisReport hypotheses;
  std::optional<TrajectorySolution> trajectory;
  std::optional<double> first_violation_time;
};

struct TurnpikeOptions {
  /// Integrate even when a hypothesis fails (status still reports it).
  bool integrate_on_violation = false;
};

/// Time-dependent MFG solution on grid with stationary control Single(i):
/// forward x from x0, backward g from gT, then node-by-node certification.
inline TurnpikeResult solve_turnpike(const ModelParams& p, Index i, const MixedState& x0, const ValueVector& gT,
                                     const TimeGrid& grid, const TurnpikeOptions& options = {}) {
  require_valid(p);
  detail::require_discounted(p, "solve_turnpike");
  TurnpikeResult res;
  res.hypotheses = check_turnpike_hypotheses(p, i, gT);
  res.status = TurnpikeStatus::certified;
  if (!res.hypotheses.ok()) {
    res.status = TurnpikeStatus::hypothesis_violation;
    if (!options.integrate_on_violation) return res;
  }

  const auto u = StationaryControl::single(p.d, i);
  TrajectorySolution sol;
  sol.grid = grid;
  sol.strategy = i;
  sol.x_path = integrate_forward(p, x0, u, grid);
  auto back = integrate_backward(p, gT, sol.x_path, grid, u, HjbMode::fixed_control);
  sol.g_path = std::move(back.g_path);
  sol.cone_ok = std::move(back.cone_ok);
  sol.argmin_ok = std::move(back.argmin_ok);
  sol.gap_closed = gap_closed_form(p, i, sol.x_path, gT.I(i) - gT.S(i), grid);

  const auto fp = fixed_point_single(p, i);
  const ValueVector g_star = hjb_single_exact(p, i, fp.x_star);
  auto& st = sol.turnpike_stats;
  const double horizon = grid.t_end - grid.t_start;
  st.window_start = grid.t_start + 0.1 * horizon;
  st.window_end = grid.t_end - 0.1 * horizon;
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const double t = grid.time(n);
    const double integrated_gap = sol.g_path[n].I(i) - sol.g_path[n].S(i);
    st.gap_mismatch = std::max(st.gap_mismatch, std::abs(integrated_gap - sol.gap_closed[n]));
    if (t < st.window_start || t > st.window_end) continue;
    st.x_sup_mid = std::max(st.x_sup_mid, (sol.x_path[n].values() - fp.state.values()).lpNorm<Eigen::Infinity>());
    st.g_sup_mid = std::max(st.g_sup_mid, (sol.g_path[n].g - g_star.g).lpNorm<Eigen::Infinity>());
  }

  if (res.status == TurnpikeStatus::certified) {
    for (std::size_t n = 0; n < grid.nodes(); ++n) {
      if (!sol.cone_ok[n] || !sol.argmin_ok[n]) {
        res.status = TurnpikeStatus::certification_failure;
        res.first_violation_time = grid.time(n);
        break;
      }
    }
  }
  res.trajectory = std::move(sol);
  return res;
}

struct TurnpikeMetrics {
  std::optional<double> entry_time;
  std::optional<double> exit_time;
  double inside_fraction = 0.0;  ///< fraction of nodes within epsilon in both x and g
  double x_sup_mid = 0.0;
  double g_sup_mid = 0.0;
};

/// Entry/exit of the epsilon-neighbourhood of the stationary pair (x*, g*).
inline TurnpikeMetrics turnpike_metrics(const TrajectorySolution& sol, const EquilibriumSolution& eq,
                                        double epsilon = 1e-3) {
  TurnpikeMetrics m;
  m.x_sup_mid = sol.turnpike_stats.x_sup_mid;
  m.g_sup_mid = sol.turnpike_stats.g_sup_mid;
  std::size_t inside = 0;
  for (std::size_t n = 0; n < sol.x_path.size(); ++n) {
    const double dx = (sol.x_path[n].values() - eq.x_star.values()).lpNorm<Eigen::Infinity>();
    const double dg = (sol.g_path[n].g - eq.g.g).lpNorm<Eigen::Infinity>();
    if (dx <= epsilon && dg <= epsilon) {
      ++inside;
      const double t = sol.grid.time(n);
      if (!m.entry_time) m.entry_time = t;
      m.exit_time = t;
    }
  }
  m.inside_fraction = sol.x_path.empty() ? 0.0 : double(inside) / double(sol.x_path.size());
  return m;
}

}  // namespace mfg
