// Stationary MFG equilibria: fixed points of the kinetic equation under the
// canonical controls [i(I), k(S)], their stability, the stationary discounted
// payoffs (exact and large-lambda asymptotics) and the consistency margins
// that decide whether a candidate control is individually optimal.
#pragma once

#include "mfg/model.hpp"
#include "mfg/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mfg {

inline constexpr double kResidualCertificate = 1e-8;
inline constexpr double kNewtonTolerance = 1e-12;
inline constexpr double kJacobianStep = 1e-6;
inline constexpr double kSpectralMismatchLimit = 1e-6;

// ---------------------------------------------------------------------------
// Fixed points

/// Root in [0, 1] of beta*y^2 + y*(q_plus - beta + q_minus) - q_minus.
/// Evaluated in the cancellation-free form 2c / (b + sqrt(b^2 + 4*beta*c)),
/// which also covers beta = 0.
inline double infected_fraction_root(double beta, double q_plus, double q_minus) {
  const double b = q_plus - beta + q_minus;
  if (q_minus == 0.0) return b >= 0.0 ? 0.0 : -b / beta;
  return 2.0 * q_minus / (b + std::sqrt(b * b + 4.0 * beta * q_minus));
}

struct SingleFixedPoint {
  double x_star = 0.0;
  MixedState state;
};

/// Fixed point under Single(i): all mass on strategy i with infected fraction x*.
inline SingleFixedPoint fixed_point_single(const ModelParams& p, Index i) {
  const double x_star = infected_fraction_root(p.beta(i, i), p.q_plus(i), p.q_minus(i));
  Vector x = Vector::Zero(p.states());
  x(infected(i)) = x_star;
  x(susceptible(i)) = 1.0 - x_star;
  return {x_star, MixedState(std::move(x))};
}

struct MixedFixedPoint {
  MixedState state;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;
};

namespace detail {

struct Reduced {
  double f1, f2;
  double j11, j12, j21, j22;
};

// Two-equation reduction under Mixed(i,k) with a = x_iI, b = x_kI = x_iS,
// x_kS = 1 - a - 2b.
inline Reduced mixed_reduced(const ModelParams& p, Index i, Index k, double a, double b) {
  const double c = 1.0 - a - 2.0 * b;
  const double inf_k = p.q_minus(k) + b * p.beta(k, k) + a * p.beta(i, k);
  Reduced r{};
  r.f1 = b * p.q_minus(i) - a * p.q_plus(i) + a * b * p.beta(i, i) + b * b * p.beta(k, i) + p.lambda * b;
  r.f2 = c * inf_k - (p.lambda + p.q_plus(k)) * b;
  r.j11 = -p.q_plus(i) + b * p.beta(i, i);
  r.j12 = p.q_minus(i) + a * p.beta(i, i) + 2.0 * b * p.beta(k, i) + p.lambda;
  r.j21 = -inf_k + c * p.beta(i, k);
  r.j22 = -2.0 * inf_k + c * p.beta(k, k) - (p.lambda + p.q_plus(k));
  return r;
}

}  // namespace detail

/// Fixed point under Mixed(i,k), found by damped Newton on the reduced
/// two-equation system, seeded with the large-lambda approximation.
inline MixedFixedPoint fixed_point_mixed(const ModelParams& p, Index i, Index k, int max_iterations = 100) {
  if (i == k) throw std::invalid_argument("fixed_point_mixed requires k != i");
  double a = infected_fraction_root(p.beta(i, k), p.q_plus(i), p.q_minus(k));
  double b = a * p.q_plus(i) / p.lambda;

  const auto norm = [](const detail::Reduced& r) { return std::max(std::abs(r.f1), std::abs(r.f2)); };
  MixedFixedPoint out;
  auto r = detail::mixed_reduced(p, i, k, a, b);
  double res = norm(r);
  int it = 0;
  for (; it < max_iterations && res >= kNewtonTolerance; ++it) {
    const double det = r.j11 * r.j22 - r.j12 * r.j21;
    if (det == 0.0 || !std::isfinite(det)) {
      out.diagnostic = "singular Jacobian in mixed fixed-point Newton";
      break;
    }
    const double da = -(r.f1 * r.j22 - r.j12 * r.f2) / det;
    const double db = -(r.j11 * r.f2 - r.f1 * r.j21) / det;
    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving <= 30; ++halving, t *= 0.5) {
      const auto trial = detail::mixed_reduced(p, i, k, a + t * da, b + t * db);
      if (norm(trial) < res) {
        a += t * da;
        b += t * db;
        r = trial;
        res = norm(trial);
        improved = true;
        break;
      }
    }
    if (!improved) {
      out.diagnostic = "damped Newton stalled at residual " + std::to_string(res);
      break;
    }
  }
  out.iterations = it;
  const double kS = 1.0 - a - 2.0 * b;
  if (res >= kNewtonTolerance) {
    if (out.diagnostic.empty())
      out.diagnostic = "Newton did not converge in " + std::to_string(max_iterations) + " iterations (residual " +
                       std::to_string(res) + ")";
    out.residual = res;
    return out;
  }
  if (a < -kSimplexTolerance || b < -kSimplexTolerance || kS < -kSimplexTolerance) {
    out.diagnostic = "Newton converged outside the simplex";
    out.residual = res;
    return out;
  }
  Vector x = Vector::Zero(p.states());
  x(infected(i)) = std::max(a, 0.0);
  x(susceptible(i)) = std::max(b, 0.0);
  x(infected(k)) = std::max(b, 0.0);
  x(susceptible(k)) = std::max(kS, 0.0);
  x /= x.sum();
  out.state = MixedState(std::move(x));
  out.residual = kinetic_field(p, out.state.values(), StationaryControl::mixed(p.d, i, k)).lpNorm<Eigen::Infinity>();
  out.converged = true;
  return out;
}

// ---------------------------------------------------------------------------
// Stability

struct StabilityReport {
  /// Closed-form eigenvalue of the reduced i-dynamics (Single family only).
  double xi_principal = std::numeric_limits<double>::quiet_NaN();
  /// Closed-form pairs for each j != i (Single family only).
  std::vector<Index> pair_strategies;
  std::vector<std::pair<double, double>> xi_pairs;
  /// Sorted closed-form spectrum; empty when no closed form is known.
  std::vector<double> closed_form;
  /// Spectrum of the finite-difference Jacobian on the simplex tangent space,
  /// sorted by real part then imaginary part.
  std::vector<std::complex<double>> spectrum;
  double spectral_mismatch = 0.0;
  double max_real_part = 0.0;
  bool stable = false;
  bool consistent = true;
};

/// Central-difference Jacobian of the kinetic field restricted to the tangent
/// space {sum v = 0}, in coordinates (x_1, ..., x_{2d-1}) with the last
/// coordinate eliminated.
inline Matrix tangent_jacobian(const ModelParams& p, const Vector& x, const StationaryControl& u,
                               double step = kJacobianStep) {
  const Index n = p.states();
  Matrix full(n, n);
  for (Index c = 0; c < n; ++c) {
    Vector xp = x, xm = x;
    xp(c) += step;
    xm(c) -= step;
    full.col(c) = (kinetic_field(p, xp, u) - kinetic_field(p, xm, u)) / (2.0 * step);
  }
  const Index m = n - 1;
  Matrix reduced(m, m);
  for (Index r = 0; r < m; ++r)
    for (Index c = 0; c < m; ++c) reduced(r, c) = full(r, c) - full(r, n - 1);
  return reduced;
}

inline std::vector<std::complex<double>> sorted_spectrum(const Matrix& a) {
  std::vector<std::complex<double>> ev;
  if (a.size() == 0) return ev;
  Eigen::EigenSolver<Matrix> solver(a, false);
  for (Index e = 0; e < a.rows(); ++e) ev.push_back(solver.eigenvalues()(e));
  std::sort(ev.begin(), ev.end(), [](auto l, auto r) {
    return l.real() != r.real() ? l.real() < r.real() : l.imag() < r.imag();
  });
  return ev;
}

/// Linear stability of a fixed point using the numerical spectrum only.
inline StabilityReport stability_numerical(const ModelParams& p, const MixedState& x, const StationaryControl& u) {
  StabilityReport rep;
  rep.spectrum = sorted_spectrum(tangent_jacobian(p, x.values(), u));
  rep.max_real_part = -std::numeric_limits<double>::infinity();
  for (auto e : rep.spectrum) rep.max_real_part = std::max(rep.max_real_part, e.real());
  rep.stable = rep.max_real_part < 0.0;
  return rep;
}

/// Closed-form spectrum at the Single(i) fixed point, cross-checked against
/// the numerical Jacobian.
inline StabilityReport stability_single(const ModelParams& p, Index i, double x_star) {
  Vector x = Vector::Zero(p.states());
  x(infected(i)) = x_star;
  x(susceptible(i)) = 1.0 - x_star;
  const auto u = StationaryControl::single(p.d, i);
  StabilityReport rep = stability_numerical(p, MixedState::project(x), u);

  rep.xi_principal = (1.0 - 2.0 * x_star) * p.beta(i, i) - p.q_minus(i) - p.q_plus(i);
  rep.closed_form.push_back(rep.xi_principal);
  for (Index j = 0; j < p.d; ++j) {
    if (j == i) continue;
    const double fast = -p.lambda - (p.q_plus(j) + p.q_minus(j) + x_star * p.beta(i, j));
    rep.pair_strategies.push_back(j);
    rep.xi_pairs.emplace_back(fast, -p.lambda);
    rep.closed_form.push_back(fast);
    rep.closed_form.push_back(-p.lambda);
  }
  std::sort(rep.closed_form.begin(), rep.closed_form.end());

  rep.spectral_mismatch = 0.0;
  for (std::size_t e = 0; e < rep.closed_form.size(); ++e)
    rep.spectral_mismatch = std::max(rep.spectral_mismatch, std::abs(rep.spectrum[e] - rep.closed_form[e]));
  rep.consistent = rep.spectral_mismatch <= kSpectralMismatchLimit;
  const double closed_max = rep.closed_form.back();
  rep.stable = rep.stable && closed_max < 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Stationary payoffs, Single(i)

namespace detail {

inline void require_discounted(const ModelParams& p, const char* who) {
  if (!(p.delta > 0.0)) throw std::domain_error(std::string(who) + " requires delta > 0");
}

inline MixedState single_state(const ModelParams& p, Index i, double x_star) {
  Vector x = Vector::Zero(p.states());
  x(infected(i)) = x_star;
  x(susceptible(i)) = 1.0 - x_star;
  return MixedState::project(std::move(x));
}

// Solves the decoupled pair of a non-reference strategy j, given the values
// g_to_I, g_to_S reached by the lambda-switching terms:
//   (lambda + delta + q+) gI - q+ gS       = wI + lambda g_to_I
//   -qt gI         + (lambda + delta + qt) gS = wS + lambda g_to_S
inline std::pair<double, double> switching_pair(double lambda, double delta, double q_plus, double q_tilde,
                                                double w_I, double w_S, double g_to_I, double g_to_S) {
  const double a = lambda + delta + q_plus;
  const double e = lambda + delta + q_tilde;
  const double r1 = w_I + lambda * g_to_I;
  const double r2 = w_S + lambda * g_to_S;
  const double det = a * e - q_plus * q_tilde;
  if (!(std::abs(det) > 0.0)) throw std::runtime_error("singular switching block in stationary HJB");
  return {(r1 * e + q_plus * r2) / det, (a * r2 + q_tilde * r1) / det};
}

}  // namespace detail

/// Exact stationary payoffs under Single(i) at the fixed point with infected
/// fraction x_star.
inline ValueVector hjb_single_exact(const ModelParams& p, Index i, double x_star) {
  detail::require_discounted(p, "hjb_single_exact");
  const MixedState x = detail::single_state(p, i, x_star);
  const Vector qt = tilde_rates(p, x.values());
  ValueVector g(Vector::Zero(p.states()));
  const double gap = (p.w_I(i) - p.w_S(i)) / (p.q_minus(i) + p.q_plus(i) + p.beta(i, i) * x_star + p.delta);
  g.I(i) = (p.w_I(i) - p.q_plus(i) * gap) / p.delta;
  g.S(i) = g.I(i) - gap;
  for (Index j = 0; j < p.d; ++j) {
    if (j == i) continue;
    std::tie(g.I(j), g.S(j)) =
        detail::switching_pair(p.lambda, p.delta, p.q_plus(j), qt(j), p.w_I(j), p.w_S(j), g.I(i), g.S(i));
  }
  return g;
}

struct SingleAsymptotic {
  ValueVector values;
  /// Coefficients of 1/lambda in g(jI) - g(iI) and g(jS) - g(iS); zero at j = i.
  Vector correction_I;
  Vector correction_S;
};

/// First order in 1/lambda: exact i-block, g(jI) = g(iI) + c_I(j)/lambda and
/// g(jS) = g(iS) + c_S(j)/lambda for j != i.
inline SingleAsymptotic hjb_single_asymptotic(const ModelParams& p, Index i, double x_star) {
  detail::require_discounted(p, "hjb_single_asymptotic");
  const Vector qt = tilde_rates(p, detail::single_state(p, i, x_star).values());
  SingleAsymptotic out{ValueVector(Vector::Zero(p.states())), Vector::Zero(p.d), Vector::Zero(p.d)};
  auto& g = out.values;
  const double gap = (p.w_I(i) - p.w_S(i)) / (p.q_minus(i) + p.q_plus(i) + p.beta(i, i) * x_star + p.delta);
  g.I(i) = (p.w_I(i) - p.q_plus(i) * gap) / p.delta;
  g.S(i) = g.I(i) - gap;
  for (Index j = 0; j < p.d; ++j) {
    if (j == i) continue;
    out.correction_I(j) = p.w_I(j) - p.q_plus(j) * gap - p.delta * g.I(i);
    out.correction_S(j) = p.w_S(j) + qt(j) * gap - p.delta * g.S(i);
    g.I(j) = g.I(i) + out.correction_I(j) / p.lambda;
    g.S(j) = g.S(i) + out.correction_S(j) / p.lambda;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Consistency margins

struct NamedMargin {
  std::string name;
  Index strategy = -1;  // -1 when the condition has no free index
  double value = 0.0;
};

enum class MarginVerdict { accepted, boundary, rejected };

inline const char* to_string(MarginVerdict v) {
  switch (v) {
    case MarginVerdict::accepted: return "accepted";
    case MarginVerdict::boundary: return "boundary";
    case MarginVerdict::rejected: return "rejected";
  }
  return "?";
}

/// Slack of every optimality inequality of a candidate [i(I), k(S)]:
/// g(iI) <= g(jI) for j != i and g(kS) <= g(jS) for j != k.
struct ConsistencyMargins {
  Index reference_I = 0;
  Index reference_S = 0;
  std::vector<Index> compared_I;
  std::vector<Index> compared_S;
  /// Exact slack g(jI) - g(iI) and g(jS) - g(kS) from solved payoffs.
  std::vector<double> margin_I;
  std::vector<double> margin_S;
  /// Leading large-lambda slack, multiplied by lambda.
  std::vector<double> asymptotic_margin_I;
  std::vector<double> asymptotic_margin_S;
  /// Closed-form conditions in a small parameter: small beta for Single,
  /// small delta (first order) for Mixed. Sign-equivalent to the leading
  /// slack in that limit; the scale differs per row.
  std::vector<double> small_parameter_margin_I;
  std::vector<double> small_parameter_margin_S;
  /// Strict closed-form sufficient conditions in the small-beta, small-delta
  /// regime (Mixed only). Diagnostic; they use bare q_- and can disagree with
  /// the exact slack away from that regime.
  std::vector<NamedMargin> sufficient_conditions;

  double min_exact() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : margin_I) m = std::min(m, v);
    for (double v : margin_S) m = std::min(m, v);
    return m;
  }

  MarginVerdict verdict(double tol = kTieTolerance) const {
    const double m = min_exact();
    if (m < -tol) return MarginVerdict::rejected;
    if (m <= tol) return MarginVerdict::boundary;
    return MarginVerdict::accepted;
  }
};

/// Margins of Single(i) from an already solved fixed point and payoff.
inline ConsistencyMargins consistency_single(const ModelParams& p, Index i, double x_star, const ValueVector& g) {
  ConsistencyMargins m;
  m.reference_I = m.reference_S = i;
  const double rate_sum = p.q_minus(i) + p.q_plus(i) + p.beta(i, i) * x_star + p.delta;
  const double cost_gap = p.w_I(i) - p.w_S(i);
  const double gap = cost_gap / rate_sum;
  const double small_beta_rates = p.q_minus(i) + p.q_plus(i) + p.delta;
  for (Index j = 0; j < p.d; ++j) {
    if (j == i) continue;
    m.compared_I.push_back(j);
    m.compared_S.push_back(j);
    m.margin_I.push_back(g.I(j) - g.I(i));
    m.margin_S.push_back(g.S(j) - g.S(i));
    m.asymptotic_margin_I.push_back((p.w_I(j) - p.w_I(i)) - (p.q_plus(j) - p.q_plus(i)) * gap);
    m.asymptotic_margin_S.push_back(
        (p.w_S(j) - p.w_S(i)) -
        (p.q_minus(i) - p.q_minus(j) + (p.beta(i, i) - p.beta(i, j)) * x_star) * gap);
    m.small_parameter_margin_I.push_back((p.w_I(j) - p.w_I(i)) / cost_gap -
                                         (p.q_plus(j) - p.q_plus(i)) / small_beta_rates);
    m.small_parameter_margin_S.push_back((p.w_S(j) - p.w_S(i)) / cost_gap -
                                         (p.q_minus(i) - p.q_minus(j)) / small_beta_rates);
  }
  return m;
}

inline ConsistencyMargins consistency_single(const ModelParams& p, Index i) {
  const auto fp = fixed_point_single(p, i);
  return consistency_single(p, i, fp.x_star, hjb_single_exact(p, i, fp.x_star));
}

// ---------------------------------------------------------------------------
// Stationary payoffs, Mixed(i,k)

/// Exact stationary payoffs under Mixed(i,k) at distribution x. The block
/// (iI, iS, kI, kS) is reduced to a 2x2 system in (g(kS), g(iI)); the other
/// strategies follow from decoupled 2x2 blocks.
inline ValueVector hjb_mixed_exact(const ModelParams& p, Index i, Index k, const MixedState& x) {
  detail::require_discounted(p, "hjb_mixed_exact");
  if (i == k) throw std::invalid_argument("hjb_mixed_exact requires k != i");
  const Vector qt = tilde_rates(p, x.values());
  const double lam = p.lambda, dl = p.delta;
  const double qpi = p.q_plus(i), qpk = p.q_plus(k), qti = qt(i), qtk = qt(k);

  // rows: a11 g(kS) + a12 g(iI) = r1 ; a21 g(kS) + a22 g(iI) = r2
  const double a11 = lam * qpi;
  const double a12 = -(lam * (qpi + dl) + dl * (qpi + qti + dl));
  const double r1 = -p.w_I(i) * (lam + dl + qti) - p.w_S(i) * qpi;
  const double a21 = lam * (qtk + dl) + dl * (qtk + qpk + dl);
  const double a22 = -lam * qtk;
  const double r2 = p.w_I(k) * qtk + p.w_S(k) * (lam + dl + qpk);
  const double det = a11 * a22 - a12 * a21;
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw std::runtime_error("singular mixed HJB block");

  ValueVector g(Vector::Zero(p.states()));
  g.S(k) = (r1 * a22 - a12 * r2) / det;
  g.I(i) = (a11 * r2 - r1 * a21) / det;
  g.S(i) = g.I(i) + (dl * g.I(i) - p.w_I(i)) / qpi;
  g.I(k) = g.S(k) + (dl * g.S(k) - p.w_S(k)) / qtk;
  for (Index j = 0; j < p.d; ++j) {
    if (j == i || j == k) continue;
    std::tie(g.I(j), g.S(j)) =
        detail::switching_pair(lam, dl, p.q_plus(j), qt(j), p.w_I(j), p.w_S(j), g.I(i), g.S(k));
  }
  return g;
}

struct MixedAsymptotic {
  /// delta * g0 of kS (= iS) and of iI (= kI); finite for delta >= 0.
  double delta_g0_kS = 0.0;
  double delta_g0_iI = 0.0;
  /// delta * (q~k + q+i + delta) * g1 for kS and iI; finite for delta >= 0.
  double scaled_g1_kS = 0.0;
  double scaled_g1_iI = 0.0;
  /// Both sides of the two first-order optimality inequalities
  ///   q~k g1(iI) <= (q~k + delta) g1(kS)     [g(iI) <= g(kI)]
  ///   q+i g1(kS) <= (q+i + delta) g1(iI)     [g(kS) <= g(iS)]
  /// multiplied by delta * (q~k + q+i + delta). They coincide at delta = 0.
  double lhs_kI = 0.0, rhs_kI = 0.0;
  double lhs_iS = 0.0, rhs_iS = 0.0;
  /// Zeroth and first order coefficients (NaN when delta = 0).
  double g0_iI = 0.0, g0_iS = 0.0, g0_kI = 0.0, g0_kS = 0.0;
  double g1_iI = 0.0, g1_kS = 0.0;
  /// Full first-order approximation of the payoff (NaN entries when delta = 0).
  ValueVector values;
  /// lambda * slack at leading order: for the k/i pair and every other strategy.
  Vector correction_I;
  Vector correction_S;
};

/// Large-lambda expansion g = g0 + g1/lambda + O(1/lambda^2) of the Mixed(i,k)
/// payoffs with the effective rates q~ frozen at x. g1 is obtained by solving
/// the first-order 2x2 system exactly.
inline MixedAsymptotic hjb_mixed_asymptotic(const ModelParams& p, Index i, Index k, const MixedState& x) {
  if (i == k) throw std::invalid_argument("hjb_mixed_asymptotic requires k != i");
  if (!(p.delta >= 0.0)) throw std::domain_error("hjb_mixed_asymptotic requires delta >= 0");
  const Vector qt = tilde_rates(p, x.values());
  const double dl = p.delta, lam = p.lambda;
  const double qpi = p.q_plus(i), qpk = p.q_plus(k), qti = qt(i), qtk = qt(k);
  const double wiI = p.w_I(i), wiS = p.w_S(i), wkI = p.w_I(k), wkS = p.w_S(k);
  const double sum = qtk + qpi + dl;

  MixedAsymptotic out;
  out.delta_g0_kS = (qtk * wiI + qpi * wkS + dl * wkS) / sum;
  out.delta_g0_iI = (qtk * wiI + qpi * wkS + dl * wiI) / sum;
  const double g0_gap = (wiI - wkS) / sum;  // g0(iI) - g0(kS)

  const double r1 = (qpi + qti + dl) * out.delta_g0_iI - wiI * (dl + qti) - wiS * qpi;
  const double r2 = -(qtk + qpk + dl) * out.delta_g0_kS + wkI * qtk + wkS * (dl + qpk);
  out.scaled_g1_kS = -qtk * r1 + (qpi + dl) * r2;
  out.scaled_g1_iI = qpi * r2 - (qtk + dl) * r1;
  out.lhs_kI = qtk * out.scaled_g1_iI;
  out.rhs_kI = (qtk + dl) * out.scaled_g1_kS;
  out.lhs_iS = qpi * out.scaled_g1_kS;
  out.rhs_iS = (qpi + dl) * out.scaled_g1_iI;

  out.correction_I = Vector::Zero(p.d);
  out.correction_S = Vector::Zero(p.d);
  out.correction_I(k) = r2 / qtk;
  out.correction_S(i) = -r1 / qpi;
  for (Index j = 0; j < p.d; ++j) {
    if (j == i || j == k) continue;
    out.correction_I(j) = p.w_I(j) - out.delta_g0_iI - p.q_plus(j) * g0_gap;
    out.correction_S(j) = p.w_S(j) - out.delta_g0_kS + qt(j) * g0_gap;
  }

  if (dl == 0.0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.g0_iI = out.g0_iS = out.g0_kI = out.g0_kS = out.g1_iI = out.g1_kS = nan;
    out.values = ValueVector(Vector::Constant(p.states(), nan));
    return out;
  }

  const double scale = dl * sum;
  out.g0_kS = out.g0_iS = out.delta_g0_kS / dl;
  out.g0_iI = out.g0_kI = out.delta_g0_iI / dl;
  out.g1_kS = out.scaled_g1_kS / scale;
  out.g1_iI = out.scaled_g1_iI / scale;

  ValueVector g(Vector::Zero(p.states()));
  g.I(i) = out.g0_iI + out.g1_iI / lam;
  g.S(k) = out.g0_kS + out.g1_kS / lam;
  g.S(i) = g.I(i) + (dl * g.I(i) - wiI) / qpi;
  g.I(k) = g.S(k) + (dl * g.S(k) - wkS) / qtk;
  for (Index j = 0; j < p.d; ++j) {
    if (j == i || j == k) continue;
    g.I(j) = g.I(i) + out.correction_I(j) / lam;
    g.S(j) = g.S(k) + out.correction_S(j) / lam;
  }
  out.values = std::move(g);
  return out;
}

/// Margins of Mixed(i,k) from a solved fixed point and payoff.
inline ConsistencyMargins consistency_mixed(const ModelParams& p, Index i, Index k, const MixedState& x,
                                            const ValueVector& g) {
  const auto asym = hjb_mixed_asymptotic(p, i, k, x);
  const Vector qt = tilde_rates(p, x.values());
  const double qpi = p.q_plus(i), qpk = p.q_plus(k), qti = qt(i), qtk = qt(k);
  const double wiI = p.w_I(i), wiS = p.w_S(i), wkI = p.w_I(k), wkS = p.w_S(k);
  const double rates0 = qtk + qpi;

  ConsistencyMargins m;
  m.reference_I = i;
  m.reference_S = k;
  for (Index j = 0; j < p.d; ++j) {
    if (j != i) {
      m.compared_I.push_back(j);
      m.margin_I.push_back(g.I(j) - g.I(i));
      m.asymptotic_margin_I.push_back(asym.correction_I(j));
      m.small_parameter_margin_I.push_back(
          j == k ? qpi * (wkI - wkS) + qpk * (wkS - wiI) + qtk * (wkI - wiI)
                 : rates0 * p.w_I(j) - qtk * wiI - qpi * wkS - p.q_plus(j) * (wiI - wkS));
    }
    if (j != k) {
      m.compared_S.push_back(j);
      m.margin_S.push_back(g.S(j) - g.S(k));
      m.asymptotic_margin_S.push_back(asym.correction_S(j));
      m.small_parameter_margin_S.push_back(
          j == i ? qpi * (wiS - wkS) + qti * (wiI - wkS) + qtk * (wiS - wiI)
                 : rates0 * p.w_S(j) - qtk * wiI - qpi * wkS + qt(j) * (wiI - wkS));
    }
  }

  const double qmk = p.q_minus(k), qmi = p.q_minus(i);
  for (Index j = 0; j < p.d; ++j)
    if (j != k)
      m.sufficient_conditions.push_back(
          {"residual_I", j, p.q_plus(j) * (wiI - wkS) + p.w_I(j) * (qmk + qpi)});
  for (Index j = 0; j < p.d; ++j)
    if (j != i)
      m.sufficient_conditions.push_back(
          {"residual_S", j, p.q_minus(j) * (wiI - wkS) + p.w_S(j) * (qmk + qpi)});
  m.sufficient_conditions.push_back({"I_target_i_over_k", -1, qmk * (wkI - wiI) + wkS * (qpk - qpi)});
  m.sufficient_conditions.push_back({"S_target_k_over_i", -1, qpi * (wiS - wkS) + wiI * (qmi - qmk)});
  return m;
}

inline ConsistencyMargins consistency_mixed(const ModelParams& p, Index i, Index k) {
  const auto fp = fixed_point_mixed(p, i, k);
  if (!fp.converged) throw std::runtime_error("consistency_mixed: " + fp.diagnostic);
  return consistency_mixed(p, i, k, fp.state, hjb_mixed_exact(p, i, k, fp.state));
}

// ---------------------------------------------------------------------------
// Enumeration

struct EquilibriumSolution {
  StationaryControl control;
  MixedState x_star;
  ValueVector g;
  StabilityReport stability;
  ConsistencyMargins margins;
  double residual = 0.0;
  bool degenerate = false;
};

enum class CandidateStatus { accepted, degenerate, rejected, failed };

inline const char* to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::accepted: return "accepted";
    case CandidateStatus::degenerate: return "degenerate";
    case CandidateStatus::rejected: return "rejected";
    case CandidateStatus::failed: return "failed";
  }
  return "?";
}

struct CandidateOutcome {
  StationaryControl control;
  CandidateStatus status = CandidateStatus::failed;
  std::string diagnostic;
  /// Present whenever the fixed point and payoffs were computed, including
  /// rejected candidates.
  std::optional<EquilibriumSolution> solution;

  bool is_equilibrium() const {
    return status == CandidateStatus::accepted || status == CandidateStatus::degenerate;
  }
};

struct EnumerationResult {
  std::vector<CandidateOutcome> candidates;

  std::vector<EquilibriumSolution> equilibria() const {
    std::vector<EquilibriumSolution> out;
    for (const auto& c : candidates)
      if (c.is_equilibrium()) out.push_back(*c.solution);
    return out;
  }
};

/// Solves and certifies one canonical candidate [i(I), k(S)].
inline CandidateOutcome solve_candidate(const ModelParams& p, Index i, Index k) {
  CandidateOutcome out;
  out.control = i == k ? StationaryControl::single(p.d, i) : StationaryControl::mixed(p.d, i, k);
  try {
    EquilibriumSolution sol;
    sol.control = out.control;
    if (i == k) {
      const auto fp = fixed_point_single(p, i);
      sol.x_star = fp.state;
      sol.stability = stability_single(p, i, fp.x_star);
      sol.g = hjb_single_exact(p, i, fp.x_star);
      sol.margins = consistency_single(p, i, fp.x_star, sol.g);
    } else {
      const auto fp = fixed_point_mixed(p, i, k);
      if (!fp.converged) {
        out.diagnostic = fp.diagnostic;
        return out;
      }
      sol.x_star = fp.state;
      sol.stability = stability_numerical(p, fp.state, sol.control);
      sol.g = hjb_mixed_exact(p, i, k, fp.state);
      sol.margins = consistency_mixed(p, i, k, fp.state, sol.g);
    }
    sol.residual = consistency_residual(p, sol.x_star.values(), sol.g, sol.control);
    const auto verdict = sol.margins.verdict();
    sol.degenerate = verdict == MarginVerdict::boundary;

    if (!sol.stability.consistent) {
      out.status = CandidateStatus::failed;
      out.diagnostic = "closed-form and numerical spectra disagree by " + std::to_string(sol.stability.spectral_mismatch);
    } else if (verdict == MarginVerdict::rejected) {
      out.status = CandidateStatus::rejected;
      out.diagnostic = "optimality violated (min margin " + std::to_string(sol.margins.min_exact()) + ")";
    } else if (sol.residual > kResidualCertificate) {
      out.status = CandidateStatus::failed;
      out.diagnostic = "consistency residual " + std::to_string(sol.residual) + " above certificate";
    } else {
      out.status = sol.degenerate ? CandidateStatus::degenerate : CandidateStatus::accepted;
      if (sol.degenerate) out.diagnostic = "margin within tie tolerance: bifurcation boundary";
    }
    out.solution = std::move(sol);
  } catch (const std::exception& e) {
    out.status = CandidateStatus::failed;
    out.diagnostic = e.what();
  }
  return out;
}

/// All d^2 canonical candidates, sorted by control. Solver failures are
/// reported per candidate and never abort the sweep.
inline EnumerationResult enumerate_equilibria(const ModelParams& p, unsigned threads = 1) {
  require_valid(p);
  detail::require_discounted(p, "enumerate_equilibria");
  EnumerationResult res;
  res.candidates.resize(std::size_t(p.d * p.d));
  parallel_for(res.candidates.size(), threads, [&](std::size_t n) {
    const Index i = Index(n) / p.d, k = Index(n) % p.d;
    res.candidates[n] = solve_candidate(p, i, k);
  });
  std::sort(res.candidates.begin(), res.candidates.end(),
            [](const CandidateOutcome& a, const CandidateOutcome& b) { return a.control < b.control; });
  return res;
}

}  // namespace mfg
