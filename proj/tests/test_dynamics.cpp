#include "mfg/dynamics.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace mfg;
using Catch::Matchers::WithinAbs;

namespace {

double sup_distance(const std::vector<MixedState>& path, const Vector& x) {
  double worst = 0.0;
  for (const auto& s : path) worst = std::max(worst, (s.values() - x).cwiseAbs().maxCoeff());
  return worst;
}

double sup_distance(const std::vector<ValueVector>& path, const Vector& g) {
  double worst = 0.0;
  for (const auto& v : path) worst = std::max(worst, (v.g - g).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace

TEST_CASE("time grid", "[dynamics]") {
  const TimeGrid g(0.0, 2.0, 8);
  CHECK(g.step() == 0.25);
  CHECK(g.nodes() == 9);
  CHECK(g.time(8) == 2.0);
  CHECK_THROWS(TimeGrid(1.0, 1.0, 4));
  CHECK_THROWS(TimeGrid(0.0, 1.0, 0));
  const auto p = oracle::p0();
  CHECK(default_step(p) == 0.001);
  CHECK(default_grid(p, 0.0, 50.0).n_steps == 50000);
}

TEST_CASE("forward integration", "[dynamics][forward]") {
  const auto p = oracle::p0();
  const auto u = StationaryControl::single(2, 0);
  const auto fp = fixed_point_single(p, 0);

  SECTION("fixed point is stationary") {
    const auto path = integrate_forward(p, fp.state, u, TimeGrid(0.0, 5.0, 5000));
    CHECK(sup_distance(path, fp.state.values()) < 1e-9);
  }
  SECTION("uniform start converges to the fixed point; fine Euler agrees") {
    const auto path = integrate_forward(p, MixedState::uniform(2), u, default_grid(p, 0.0, 50.0));
    CHECK((path.back().values() - fp.state.values()).cwiseAbs().maxCoeff() < 1e-6);
    for (const auto& x : path) {
      CHECK(x.values().minCoeff() >= 0.0);
      CHECK(std::abs(x.values().sum() - 1.0) < 1e-12);
    }
    const Vector euler = oracle::euler_forward(p, MixedState::uniform(2).values(), u, 2.0, 1e-5);
    const auto short_path = integrate_forward(p, MixedState::uniform(2), u, TimeGrid(0.0, 2.0, 2000));
    CHECK((short_path.back().values() - euler).cwiseAbs().maxCoeff() < 1e-4);
  }
  SECTION("fourth order under step halving") {
    // lambda h <= 0.5 keeps the fast decision mode in the asymptotic regime
    const double T = 2.0;
    const auto terminal = [&](std::size_t n) {
      return integrate_forward(p, MixedState::uniform(2), u, TimeGrid(0.0, T, n)).back().values();
    };
    const Vector x1 = terminal(400), x2 = terminal(800), x4 = terminal(1600);
    const double ratio = (x1 - x2).cwiseAbs().maxCoeff() / (x2 - x4).cwiseAbs().maxCoeff();
    CHECK(ratio > 8.0);
    CHECK(ratio < 32.0);
  }
  SECTION("steps that overshoot the simplex are subdivided") {
    // lambda h = 3 would push the off-target mass negative in one RK4 step
    const auto path = integrate_forward(p, MixedState::uniform(2), u, TimeGrid(0.0, 1.0, 33));
    for (const auto& x : path) CHECK(x.values().minCoeff() >= 0.0);
  }
}

TEST_CASE("backward integration", "[dynamics][backward]") {
  const auto p = oracle::p0();
  const auto u = StationaryControl::single(2, 0);
  const auto fp = fixed_point_single(p, 0);
  const auto g_star = hjb_single_exact(p, 0, fp.x_star);
  const TimeGrid grid(0.0, 10.0, 10000);
  const std::vector<MixedState> frozen(grid.nodes(), fp.state);

  SECTION("stationary terminal data stays put") {
    const auto back = integrate_backward(p, g_star, frozen, grid, u);
    CHECK(sup_distance(back.g_path, g_star.g) < 1e-9);
    for (std::size_t n = 0; n < grid.nodes(); ++n) {
      CHECK(back.cone_ok[n]);
      CHECK(back.argmin_ok[n]);
    }
  }
  SECTION("gap matches the closed form with zero terminal data") {
    const ValueVector zero(Vector::Zero(4));
    const auto back = integrate_backward(p, zero, frozen, grid, u);
    const auto gap = gap_closed_form(p, 0, frozen, 0.0, grid);
    const double a = 0.5 + 0.5 + 0.1 + 0.2 * fp.x_star;
    CHECK_THAT(a, WithinAbs(1.20990, 5e-6));
    for (std::size_t n = 0; n < grid.nodes(); ++n) {
      CHECK(std::abs(back.g_path[n].I(0) - back.g_path[n].S(0) - gap[n]) < 1e-8);
      const double scalar = (2.0 - 1.0) * (1.0 - std::exp(-a * (grid.t_end - grid.time(n)))) / a;
      CHECK(std::abs(gap[n] - scalar) < 1e-11);
    }
    CHECK(gap.back() == 0.0);
    CHECK_THAT(gap.front(), WithinAbs(0.82651, 5e-5));
  }
  SECTION("fixed-control and adaptive modes agree while the control is optimal") {
    const auto fixed = integrate_backward(p, g_star, frozen, grid, u, HjbMode::fixed_control);
    const auto adaptive = integrate_backward(p, g_star, frozen, grid, u, HjbMode::adaptive);
    for (std::size_t n = 0; n < grid.nodes(); ++n) REQUIRE(fixed.argmin_ok[n]);
    for (std::size_t n = 0; n < grid.nodes(); ++n)
      CHECK((fixed.g_path[n].g - adaptive.g_path[n].g).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("backward then forward with frozen coefficients returns gT") {
    // forward in time the linear system grows like exp(lambda t), so keep lambda small
    auto slow = p;
    slow.lambda = 1.0;
    const ValueVector gT(Vector{{3.0, 1.0, 4.0, 2.0}});
    const TimeGrid short_grid(0.0, 1.0, 1000);
    const std::vector<MixedState> x(short_grid.nodes(), fp.state);
    const auto back = integrate_backward(slow, gT, x, short_grid, u);
    // forward RK4 of dg/dt = -F(g) from g(0)
    Vector g = back.g_path.front().g;
    const double h = short_grid.step();
    const auto F = [&](const Vector& v) { return Vector(-hjb_rhs(slow, fp.state.values(), ValueVector(v), u)); };
    for (std::size_t n = 0; n < short_grid.n_steps; ++n) {
      const Vector k1 = F(g), k2 = F(g + 0.5 * h * k1), k3 = F(g + 0.5 * h * k2), k4 = F(g + h * k3);
      g += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    CHECK((g - gT.g).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("gap closed form bounds", "[dynamics][gap]") {
  const auto p = oracle::p0();
  const auto u = StationaryControl::single(2, 0);
  const TimeGrid grid(0.0, 20.0, 20000);
  const auto x = integrate_forward(p, MixedState::uniform(2), u, grid);
  const double gT_gap = 0.3;
  const auto gap = gap_closed_form(p, 0, x, gT_gap, grid);
  const double base = 0.5 + 0.5 + 0.1;
  CHECK(gap.back() == gT_gap);
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const double tau = grid.t_end - grid.time(n);
    CHECK(gap[n] <= std::exp(-base * tau) * gT_gap + 1.0 / base + 1e-12);
  }
}

TEST_CASE("turnpike hypotheses", "[dynamics][turnpike]") {
  const auto p = oracle::p0();
  const auto fp = fixed_point_single(p, 0);
  const auto g_star = hjb_single_exact(p, 0, fp.x_star);

  CHECK(check_turnpike_hypotheses(p, 0, g_star).ok());
  CHECK(check_turnpike_hypotheses(p, 0, ValueVector(Vector::Zero(4))).ok());

  auto flipped = p;
  flipped.q_plus(1) = 0.4;
  const auto rep = check_turnpike_hypotheses(flipped, 0, g_star);
  CHECK_FALSE(rep.ok());
  CHECK(rep.violates("rate_ordering_q_plus"));

  ValueVector outside = g_star;
  outside.I(1) = outside.I(0) - 0.5;
  const auto rep2 = check_turnpike_hypotheses(p, 0, outside);
  CHECK(rep2.violates("terminal_cone_I"));

  ValueVector inverted(Vector{{0.0, 1.0, 0.0, 1.0}});
  CHECK(check_turnpike_hypotheses(p, 0, inverted).violates("terminal_cone_gap"));

  ValueVector large_gap(Vector{{50.0, 0.0, 60.0, 10.0}});
  CHECK(check_turnpike_hypotheses(p, 0, large_gap).violates("terminal_gap_small_I"));

  const auto res = solve_turnpike(flipped, 0, MixedState::uniform(2), g_star, TimeGrid(0.0, 1.0, 1000));
  CHECK(res.status == TurnpikeStatus::hypothesis_violation);
  CHECK_FALSE(res.trajectory.has_value());
}

TEST_CASE("turnpike solutions", "[dynamics][turnpike]") {
  const auto p = oracle::p0();
  const auto eq = *solve_candidate(p, 0, 0).solution;

  SECTION("stationary data gives a flat certified path") {
    const auto res = solve_turnpike(p, 0, eq.x_star, eq.g, TimeGrid(0.0, 5.0, 5000));
    REQUIRE(res.status == TurnpikeStatus::certified);
    const auto& st = res.trajectory->turnpike_stats;
    CHECK(st.x_sup_mid < 1e-9);
    CHECK(st.g_sup_mid < 1e-9);
    const auto m = turnpike_metrics(*res.trajectory, eq);
    CHECK(m.entry_time == 0.0);
    CHECK(m.exit_time == 5.0);
    CHECK(m.inside_fraction == 1.0);
  }
  SECTION("uniform start, long horizon") {
    const auto res = solve_turnpike(p, 0, MixedState::uniform(2), eq.g, default_grid(p, 0.0, 50.0));
    REQUIRE(res.status == TurnpikeStatus::certified);
    const auto& sol = *res.trajectory;
    CHECK(sol.certified());
    // transient decays like exp(xi t), xi = -1.0198, from a distance ~0.3
    CHECK(sol.turnpike_stats.x_sup_mid < 0.3 * std::exp(-1.0198 * 5.0) * 1.2);
    CHECK(sol.turnpike_stats.g_sup_mid < 1e-3);
    CHECK(sol.turnpike_stats.gap_mismatch < 1e-8);
    const auto m = turnpike_metrics(sol, eq);
    CHECK(m.inside_fraction >= 0.8);
    REQUIRE(m.entry_time.has_value());
    CHECK(*m.entry_time < 10.0);
  }
  SECTION("decoupling: x path does not depend on gT") {
    const TimeGrid grid(0.0, 3.0, 3000);
    const auto a = solve_turnpike(p, 0, MixedState::uniform(2), eq.g, grid);
    const auto b = solve_turnpike(p, 0, MixedState::uniform(2), ValueVector(Vector::Zero(4)), grid);
    REQUIRE(a.trajectory);
    REQUIRE(b.trajectory);
    for (std::size_t n = 0; n < grid.nodes(); ++n)
      CHECK(a.trajectory->x_path[n].values() == b.trajectory->x_path[n].values());
  }
  SECTION("short horizon may never enter the window") {
    const auto res = solve_turnpike(p, 0, MixedState::uniform(2), ValueVector(Vector::Zero(4)), TimeGrid(0.0, 0.1, 100));
    REQUIRE(res.trajectory);
    const auto m = turnpike_metrics(*res.trajectory, eq);
    CHECK_FALSE(m.entry_time.has_value());
    CHECK(m.inside_fraction == 0.0);
  }
}
