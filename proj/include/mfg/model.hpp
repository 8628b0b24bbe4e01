// Data model of the 2d-state corruption / botnet-defense mean-field game and
// the right-hand sides of its kinetic and discounted HJB equations.
//
// State vectors are ordered (1I, 1S, 2I, 2S, ..., dI, dS). Strategies are
// 0-based in the C++ API and 1-based in every user-facing label and file.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute tolerance under which two values are treated as tied in an argmin
/// and under which a consistency margin counts as a bifurcation boundary.
inline constexpr double kTieTolerance = 1e-10;
/// Tolerance on the simplex normalization of a MixedState.
inline constexpr double kSimplexTolerance = 1e-12;
/// Tolerance used by kinetic_rhs before it rejects an input as off-simplex.
inline constexpr double kKineticInputTolerance = 1e-9;

constexpr Index infected(Index j) { return 2 * j; }
constexpr Index susceptible(Index j) { return 2 * j + 1; }

/// "1I", "2S", ... for state position `s` in the canonical ordering.
inline std::string state_label(Index s) {
  return std::to_string(s / 2 + 1) + (s % 2 == 0 ? "I" : "S");
}

/// All constants of the game. beta(k, j) is the rate at which one kI-agent
/// infects a jS-agent (scaled by the kI fraction).
struct ModelParams {
  Index d = 1;
  double lambda = 1.0;
  double delta = 0.0;
  Vector q_plus;
  Vector q_minus;
  Matrix beta;
  Vector w_I;
  Vector w_S;

  Index states() const { return 2 * d; }

  bool operator==(const ModelParams& o) const {
    return d == o.d && lambda == o.lambda && delta == o.delta && q_plus == o.q_plus &&
           q_minus == o.q_minus && beta == o.beta && w_I == o.w_I && w_S == o.w_S;
  }
};

/// Every invariant violation of `p`, empty when admissible.
inline std::vector<std::string> validate(const ModelParams& p) {
  std::vector<std::string> errors;
  if (p.d < 1) {
    errors.emplace_back("d must be >= 1");
    return errors;
  }
  const auto check_size = [&](const char* name, Index size) {
    if (size != p.d) {
      errors.push_back(std::string(name) + " must have length d=" + std::to_string(p.d) + " (got " +
                       std::to_string(size) + ")");
      return false;
    }
    return true;
  };
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda)) errors.emplace_back("lambda must be finite and > 0");
  if (!(p.delta >= 0.0) || !std::isfinite(p.delta)) errors.emplace_back("delta must be finite and >= 0");
  const bool qp = check_size("q_plus", p.q_plus.size());
  const bool qm = check_size("q_minus", p.q_minus.size());
  const bool wi = check_size("w_I", p.w_I.size());
  const bool ws = check_size("w_S", p.w_S.size());
  if (p.beta.rows() != p.d || p.beta.cols() != p.d) {
    errors.push_back("beta must be a d x d matrix (d=" + std::to_string(p.d) + ")");
  } else {
    for (Index k = 0; k < p.d; ++k)
      for (Index j = 0; j < p.d; ++j)
        if (!(p.beta(k, j) >= 0.0) || !std::isfinite(p.beta(k, j)))
          errors.push_back("beta[" + std::to_string(k + 1) + "][" + std::to_string(j + 1) +
                           "] must be finite and >= 0");
  }
  for (Index j = 0; j < p.d; ++j) {
    const auto tag = "[" + std::to_string(j + 1) + "]";
    if (qp && (!(p.q_plus(j) > 0.0) || !std::isfinite(p.q_plus(j))))
      errors.push_back("q_plus" + tag + " must be finite and > 0");
    if (qm && (!(p.q_minus(j) > 0.0) || !std::isfinite(p.q_minus(j))))
      errors.push_back("q_minus" + tag + " must be finite and > 0");
    if (wi && !std::isfinite(p.w_I(j))) errors.push_back("w_I" + tag + " must be finite");
    if (ws && !std::isfinite(p.w_S(j))) errors.push_back("w_S" + tag + " must be finite");
    if (wi && ws && !(p.w_S(j) < p.w_I(j)))
      errors.push_back("w_S" + tag + " must be strictly below w_I" + tag +
                       ": S is the better state, so its running cost must be lower");
  }
  return errors;
}

inline void require_valid(const ModelParams& p) {
  const auto errors = validate(p);
  if (errors.empty()) return;
  std::ostringstream os;
  os << "invalid model parameters:";
  for (const auto& e : errors) os << "\n  - " << e;
  throw std::invalid_argument(os.str());
}

/// Population distribution over the 2d states; always on the simplex.
class MixedState {
 public:
  MixedState() = default;

  explicit MixedState(Vector x) : x_(std::move(x)) {
    if (x_.size() == 0 || x_.size() % 2 != 0)
      throw std::invalid_argument("MixedState needs an even, nonzero number of entries");
    for (Index s = 0; s < x_.size(); ++s)
      if (!(x_(s) >= 0.0))
        throw std::invalid_argument("MixedState entry " + state_label(s) + " is negative");
    if (std::abs(x_.sum() - 1.0) > kSimplexTolerance)
      throw std::invalid_argument("MixedState entries must sum to 1");
  }

  /// Uniform distribution over all 2d states.
  static MixedState uniform(Index d) { return MixedState(Vector::Constant(2 * d, 1.0 / double(2 * d))); }

  /// Clips entries in [-clip, 0) to zero and renormalizes.
  static MixedState project(Vector x, double clip = 1e-12) {
    for (Index s = 0; s < x.size(); ++s) {
      if (x(s) < 0.0) {
        if (x(s) < -clip)
          throw std::domain_error("cannot project state: entry " + state_label(s) + " is below -" +
                                  std::to_string(clip));
        x(s) = 0.0;
      }
    }
    x /= x.sum();
    return MixedState(std::move(x));
  }

  const Vector& values() const { return x_; }
  Index strategies() const { return x_.size() / 2; }
  double I(Index j) const { return x_(infected(j)); }
  double S(Index j) const { return x_(susceptible(j)); }
  double operator()(Index s) const { return x_(s); }

 private:
  Vector x_;
};

/// Discounted payoff per state.
struct ValueVector {
  Vector g;

  ValueVector() = default;
  explicit ValueVector(Vector values) : g(std::move(values)) {}

  Index strategies() const { return g.size() / 2; }
  double I(Index j) const { return g(infected(j)); }
  double S(Index j) const { return g(susceptible(j)); }
  double& I(Index j) { return g(infected(j)); }
  double& S(Index j) { return g(susceptible(j)); }
};

/// Policy: target strategy chosen in each state jI and jS.
struct StationaryControl {
  std::vector<Index> target_I;
  std::vector<Index> target_S;

  /// All states switch to strategy i.
  static StationaryControl single(Index d, Index i) {
    return {std::vector<Index>(std::size_t(d), i), std::vector<Index>(std::size_t(d), i)};
  }

  /// Infected states switch to i, susceptible states to k (k != i).
  static StationaryControl mixed(Index d, Index i, Index k) {
    if (i == k) throw std::invalid_argument("mixed control requires k != i");
    return {std::vector<Index>(std::size_t(d), i), std::vector<Index>(std::size_t(d), k)};
  }

  Index strategies() const { return Index(target_I.size()); }

  Index target(Index s) const {
    const auto j = std::size_t(s / 2);
    return s % 2 == 0 ? target_I[j] : target_S[j];
  }

  /// True when the policy is the canonical [i(I), k(S)] form.
  bool is_canonical() const {
    return std::all_of(target_I.begin(), target_I.end(), [&](Index t) { return t == target_I.front(); }) &&
           std::all_of(target_S.begin(), target_S.end(), [&](Index t) { return t == target_S.front(); });
  }

  /// "Single(1)", "Mixed(1,2)" or an explicit table for non-canonical policies.
  std::string label() const {
    if (target_I.empty()) return "Empty";
    if (is_canonical()) {
      const auto i = target_I.front() + 1;
      const auto k = target_S.front() + 1;
      if (i == k) return "Single(" + std::to_string(i) + ")";
      return "Mixed(" + std::to_string(i) + "," + std::to_string(k) + ")";
    }
    std::string out = "Policy(I:";
    for (auto t : target_I) out += std::to_string(t + 1);
    out += ",S:";
    for (auto t : target_S) out += std::to_string(t + 1);
    return out + ")";
  }

  auto operator<=>(const StationaryControl&) const = default;
};

/// q~^j_- = q^j_- + sum_k beta(k, j) x_kI for every strategy j.
inline Vector tilde_rates(const ModelParams& p, const Vector& x) {
  Vector infected_mass(p.d);
  for (Index k = 0; k < p.d; ++k) infected_mass(k) = x(infected(k));
  return p.q_minus + p.beta.transpose() * infected_mass;
}

/// Kinetic vector field without any domain checks; used at integrator stages
/// and by finite-difference Jacobians, where points may sit slightly off the
/// simplex.
inline Vector kinetic_field(const ModelParams& p, const Vector& x, const StationaryControl& u) {
  const Index n = p.states();
  Vector dx = Vector::Zero(n);
  for (Index s = 0; s < n; ++s) {
    const Index j = s / 2;
    const Index m = u.target(s);
    if (m != j) {
      const double flow = p.lambda * x(s);
      dx(s) -= flow;
      dx(2 * m + s % 2) += flow;
    }
  }
  const Vector qt = tilde_rates(p, x);
  for (Index j = 0; j < p.d; ++j) {
    const double net = x(susceptible(j)) * qt(j) - x(infected(j)) * p.q_plus(j);
    dx(infected(j)) += net;
    dx(susceptible(j)) -= net;
  }
  return dx;
}

/// Time derivative of the population distribution under control u.
inline Vector kinetic_rhs(const ModelParams& p, const Vector& x, const StationaryControl& u) {
  if (x.size() != p.states()) throw std::invalid_argument("state dimension does not match 2d");
  if (x.minCoeff() < -kKineticInputTolerance || std::abs(x.sum() - 1.0) > kKineticInputTolerance)
    throw std::domain_error("kinetic_rhs: state is off the simplex");
  return kinetic_field(p, x, u);
}

inline Vector kinetic_rhs(const ModelParams& p, const MixedState& x, const StationaryControl& u) {
  return kinetic_field(p, x.values(), u);
}

struct BestResponse {
  StationaryControl control;
  bool degenerate = false;
};

namespace detail {

struct ArgMin {
  Index index = 0;
  double value = 0.0;
  bool tied = false;
};

inline ArgMin argmin_compartment(const Vector& g, Index compartment) {
  const Index d = g.size() / 2;
  ArgMin best{0, g(compartment), false};
  for (Index m = 1; m < d; ++m) {
    const double v = g(2 * m + compartment);
    if (v < best.value) best = {m, v, false};
  }
  for (Index m = 0; m < d; ++m)
    if (m != best.index && g(2 * m + compartment) - best.value <= kTieTolerance) best.tied = true;
  return best;
}

}  // namespace detail

/// Individually optimal stationary control for payoff g. Every I-state picks
/// the strategy with minimal g(mI), every S-state the one with minimal g(mS);
/// the lowest index wins a tie and the result is flagged degenerate.
inline BestResponse best_response(const ValueVector& g) {
  const Index d = g.strategies();
  const auto bi = detail::argmin_compartment(g.g, 0);
  const auto bs = detail::argmin_compartment(g.g, 1);
  BestResponse out;
  out.control = {std::vector<Index>(std::size_t(d), bi.index), std::vector<Index>(std::size_t(d), bs.index)};
  out.degenerate = bi.tied || bs.tied;
  return out;
}

/// Largest amount by which a target of u exceeds the best available value.
inline double suboptimality(const ValueVector& g, const StationaryControl& u) {
  const Index n = g.g.size();
  const double min_I = detail::argmin_compartment(g.g, 0).value;
  const double min_S = detail::argmin_compartment(g.g, 1).value;
  double worst = 0.0;
  for (Index s = 0; s < n; ++s) {
    const double best = s % 2 == 0 ? min_I : min_S;
    worst = std::max(worst, g.g(2 * u.target(s) + s % 2) - best);
  }
  return worst;
}

/// u attains the minimum in every state, ties allowed.
inline bool is_best_response(const ValueVector& g, const StationaryControl& u) {
  return suboptimality(g, u) <= kTieTolerance;
}

namespace detail {

// Shared body of both HJB evaluations; `jump_I(j)` / `jump_S(j)` give the
// value reached by the decision term from jI / jS.
template <class JumpI, class JumpS>
Vector hjb_body(const ModelParams& p, const Vector& x, const ValueVector& g, JumpI jump_I, JumpS jump_S) {
  const Vector qt = tilde_rates(p, x);
  Vector out(p.states());
  for (Index j = 0; j < p.d; ++j) {
    const double gap = g.I(j) - g.S(j);
    out(infected(j)) = p.lambda * (jump_I(j) - g.I(j)) - p.q_plus(j) * gap + p.w_I(j) - p.delta * g.I(j);
    out(susceptible(j)) = p.lambda * (jump_S(j) - g.S(j)) + qt(j) * gap + p.w_S(j) - p.delta * g.S(j);
  }
  return out;
}

}  // namespace detail

/// Residual F(g) of the discounted HJB, with the decision term minimized over
/// all strategies. The backward dynamics are dg/dt = -F(g); stationary
/// payoffs solve F(g) = 0. delta = 0 gives the undiscounted equation.
inline Vector hjb_rhs(const ModelParams& p, const Vector& x, const ValueVector& g) {
  const double min_I = detail::argmin_compartment(g.g, 0).value;
  const double min_S = detail::argmin_compartment(g.g, 1).value;
  return detail::hjb_body(
      p, x, g, [&](Index) { return min_I; }, [&](Index) { return min_S; });
}

/// Same residual with the decision term fixed to control u (linear in g).
inline Vector hjb_rhs(const ModelParams& p, const Vector& x, const ValueVector& g, const StationaryControl& u) {
  return detail::hjb_body(
      p, x, g, [&](Index j) { return g.I(u.target_I[std::size_t(j)]); },
      [&](Index j) { return g.S(u.target_S[std::size_t(j)]); });
}

/// Certificate of a stationary MFG pair: 0 iff u is a best response to g,
/// x is a fixed point under u and g solves the stationary HJB.
inline double consistency_residual(const ModelParams& p, const Vector& x, const ValueVector& g,
                                   const StationaryControl& u) {
  const double kinetic = kinetic_field(p, x, u).lpNorm<Eigen::Infinity>();
  const double hjb = hjb_rhs(p, x, g).lpNorm<Eigen::Infinity>();
  return std::max({kinetic, hjb, suboptimality(g, u)});
}

}  // namespace mfg
