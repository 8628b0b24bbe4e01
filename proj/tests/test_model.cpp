#include "mfg/model.hpp"
#include "mfg/stationary.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace mfg;
using Catch::Matchers::WithinAbs;

TEST_CASE("params validation collects every error", "[model]") {
  auto p = oracle::p0();
  CHECK(validate(p).empty());

  p.q_plus(0) = 0.0;
  p.w_S(1) = p.w_I(1);
  p.beta(0, 1) = -0.1;
  const auto errors = validate(p);
  CHECK(errors.size() == 3);
  CHECK_THROWS_AS(require_valid(p), std::invalid_argument);

  auto swapped = oracle::p0();
  std::swap(swapped.w_I, swapped.w_S);
  const auto swap_errors = validate(swapped);
  REQUIRE_FALSE(swap_errors.empty());
  CHECK(swap_errors.front().find("better state") != std::string::npos);
}

TEST_CASE("mixed state enforces the simplex", "[model]") {
  CHECK_THROWS(MixedState(Vector{{0.5, 0.6}}));
  CHECK_THROWS(MixedState(Vector{{1.1, -0.1}}));
  const MixedState u = MixedState::uniform(3);
  CHECK_THAT(u.values().sum(), WithinAbs(1.0, 1e-15));
  const auto projected = MixedState::project(Vector{{0.5, 0.5 + 1e-13, -1e-13, 0.0}});
  CHECK(projected.values().minCoeff() >= 0.0);
  CHECK_THAT(projected.values().sum(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("canonical controls and labels", "[model]") {
  const auto s = StationaryControl::single(3, 1);
  CHECK(s.label() == "Single(2)");
  CHECK(s.target(0) == 1);
  CHECK(s.target(5) == 1);
  const auto m = StationaryControl::mixed(3, 0, 2);
  CHECK(m.label() == "Mixed(1,3)");
  CHECK(m.target(2) == 0);
  CHECK(m.target(3) == 2);
  CHECK(m.is_canonical());
  CHECK(state_label(0) == "1I");
  CHECK(state_label(3) == "2S");
}

TEST_CASE("kinetic rhs examples", "[model][kinetic]") {
  SECTION("absorbing susceptible state without pressure") {
    auto p = oracle::p0();
    p.q_minus(0) = 0.0;
    p.beta.setZero();
    const auto dx = kinetic_rhs(p, MixedState(Vector{{0.0, 1.0, 0.0, 0.0}}), StationaryControl::single(2, 0));
    CHECK(dx.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("P0 single fixed point is stationary") {
    const auto p = oracle::p0();
    const double y = oracle::single_root(0.2, 0.5, 0.5);
    CHECK_THAT(y, WithinAbs(0.54951, 1e-5));
    const auto dx = kinetic_rhs(p, MixedState(Vector{{y, 1.0 - y, 0.0, 0.0}}), StationaryControl::single(2, 0));
    CHECK(dx.cwiseAbs().maxCoeff() < 1e-12);
    const auto rounded =
        kinetic_rhs(p, MixedState(Vector{{0.54951, 0.45049, 0.0, 0.0}}), StationaryControl::single(2, 0));
    CHECK(rounded.cwiseAbs().maxCoeff() < 1e-4);
  }
  SECTION("matches the transition-list oracle") {
    std::mt19937_64 rng(11);
    for (int n = 0; n < 50; ++n) {
      const auto p = oracle::random_params(rng, 3);
      const Vector x = oracle::random_simplex(rng, 6);
      const auto u = StationaryControl::mixed(3, n % 3, (n + 1) % 3);
      CHECK((kinetic_rhs(p, x, u) - oracle::kinetic(p, x, u)).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
  SECTION("rejects points off the simplex") {
    const auto p = oracle::p0();
    CHECK_THROWS_AS(kinetic_rhs(p, Vector{{0.5, 0.5, 0.5, 0.0}}, StationaryControl::single(2, 0)), std::domain_error);
  }
}

TEST_CASE("hjb rhs examples", "[model][hjb]") {
  SECTION("constant g, equal costs, no discount gives zero") {
    auto p = oracle::p0();
    p.delta = 0.0;
    p.beta.setZero();
    p.w_I.setZero();
    p.w_S.setZero();
    const ValueVector g(Vector::Constant(4, 3.7));
    CHECK(hjb_rhs(p, MixedState::uniform(2).values(), g).cwiseAbs().maxCoeff() < 1e-15);
  }
  SECTION("d = 1 has no decision term") {
    ModelParams p;
    p.d = 1;
    p.lambda = 50.0;
    p.delta = 0.2;
    p.q_plus = Vector{{0.7}};
    p.q_minus = Vector{{0.4}};
    p.beta = Matrix{{0.3}};
    p.w_I = Vector{{2.0}};
    p.w_S = Vector{{1.0}};
    const Vector x{{0.3, 0.7}};
    const ValueVector g(Vector{{5.0, 4.0}});
    const Vector r = hjb_rhs(p, x, g);
    const double qt = 0.4 + 0.3 * 0.3;
    CHECK_THAT(r(0), WithinAbs(-0.7 * (5.0 - 4.0) + 2.0 - 0.2 * 5.0, 1e-14));
    CHECK_THAT(r(1), WithinAbs(qt * (5.0 - 4.0) + 1.0 - 0.2 * 4.0, 1e-14));
  }
  SECTION("stationary single values are a zero of the rhs") {
    const auto p = oracle::p0();
    const auto fp = fixed_point_single(p, 0);
    const auto g = hjb_single_exact(p, 0, fp.x_star);
    CHECK(hjb_rhs(p, fp.state.values(), g).cwiseAbs().maxCoeff() < 1e-9);
    const Vector dense = oracle::stationary_values(p, fp.state.values(), StationaryControl::single(2, 0));
    CHECK((g.g - dense).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("explicit min equals the rhs at the best response") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 50; ++n) {
      const auto p = oracle::random_params(rng, 3);
      const Vector x = oracle::random_simplex(rng, 6);
      const ValueVector g(oracle::random_simplex(rng, 6) * 10.0);
      const auto br = best_response(g);
      CHECK((hjb_rhs(p, x, g) - hjb_rhs(p, x, g, br.control)).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("best response examples", "[model][best_response]") {
  const auto mixed = best_response(ValueVector(Vector{{1.0, 2.0, 2.0, 1.0}}));
  CHECK(mixed.control == StationaryControl::mixed(2, 0, 1));
  CHECK_FALSE(mixed.degenerate);

  const auto tied = best_response(ValueVector(Vector{{1.0, 2.0, 1.0, 3.0}}));
  CHECK(tied.degenerate);
  CHECK(tied.control.target_I.front() == 0);

  const auto p = oracle::p0();
  const auto fp = fixed_point_single(p, 0);
  const auto g = hjb_single_exact(p, 0, fp.x_star);
  const auto br = best_response(g);
  CHECK(br.control == StationaryControl::single(2, oracle::brute_argmin(g.g, 0)));
  CHECK(oracle::brute_argmin(g.g, 1) == 0);
  CHECK(br.control == StationaryControl::single(2, 0));
}

TEST_CASE("consistency residual", "[model]") {
  const auto p = oracle::p0();
  const auto fp = fixed_point_single(p, 0);
  const auto g = hjb_single_exact(p, 0, fp.x_star);
  const auto u = StationaryControl::single(2, 0);
  CHECK(consistency_residual(p, fp.state.values(), g, u) < 1e-8);

  Vector x = fp.state.values();
  x(0) += 0.1;
  x /= x.sum();
  CHECK(consistency_residual(p, x, g, u) > 1e-3);
  CHECK(consistency_residual(p, fp.state.values(), g, StationaryControl::single(2, 1)) > 1e-3);
}
