// N-player Markov model whose fluid limit is the kinetic equation: exact
// jump simulation (Gillespie) and law-of-large-numbers error tables.
#pragma once

#include "mfg/dynamics.hpp"
#include "mfg/model.hpp"
#include "mfg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace mfg {

struct CountVector {
  std::vector<long> n;  ///< agents per state, ordered (1I, 1S, 2I, ...)

  CountVector() = default;
  explicit CountVector(std::vector<long> counts) : n(std::move(counts)) {
    for (long c : n)
      if (c < 0) throw std::invalid_argument("CountVector: negative count");
  }

  long total() const { return std::accumulate(n.begin(), n.end(), 0L); }
  Index strategies() const { return Index(n.size() / 2); }
  Vector fractions() const {
    Vector x(Index(n.size()));
    const double N = double(total());
    for (std::size_t s = 0; s < n.size(); ++s) x(Index(s)) = double(n[s]) / N;
    return x;
  }
  bool operator==(const CountVector&) const = default;
};

/// x * N rounded to integer counts summing to N: floors first, then the
/// remaining agents go to the largest fractional parts (lowest index on ties).
inline CountVector largest_remainder(const MixedState& x, long N) {
  if (N < 1) throw std::invalid_argument("largest_remainder: N must be >= 1");
  const Vector& v = x.values();
  std::vector<long> counts(std::size_t(v.size()));
  std::vector<std::pair<double, std::size_t>> remainders;
  long assigned = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    const double exact = v(Index(s)) * double(N);
    counts[s] = long(std::floor(exact));
    assigned += counts[s];
    remainders.emplace_back(exact - double(counts[s]), s);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < N; ++r, ++assigned) ++counts[remainders[r % remainders.size()].second];
  return CountVector(std::move(counts));
}

enum class JumpKind { decision_migration, pressure_infection, recovery, peer_infection };

inline const char* to_string(JumpKind k) {
  switch (k) {
    case JumpKind::decision_migration: return "decision_migration";
    case JumpKind::pressure_infection: return "pressure_infection";
    case JumpKind::recovery: return "recovery";
    case JumpKind::peer_infection: return "peer_infection";
  }
  return "?";
}

/// One active transition channel at a count state. For peer infection,
/// `source` is the infecting strategy k.
struct Transition {
  JumpKind kind;
  Index from;
  Index to;
  double rate;
  Index source = -1;
};

struct JumpEvent {
  double time;
  JumpKind kind;
  Index from;
  Index to;
};

/// All channels with positive rate. Agents already at their target strategy
/// generate no decision event.
inline std::vector<Transition> transition_rates(const ModelParams& p, const CountVector& n,
                                                const StationaryControl& u) {
  std::vector<Transition> out;
  const double N = double(n.total());
  for (Index s = 0; s < p.states(); ++s) {
    const Index m = u.target(s);
    if (m != s / 2 && n.n[std::size_t(s)] > 0)
      out.push_back({JumpKind::decision_migration, s, 2 * m + s % 2, p.lambda * double(n.n[std::size_t(s)])});
  }
  for (Index j = 0; j < p.d; ++j) {
    const double nS = double(n.n[std::size_t(susceptible(j))]);
    const double nI = double(n.n[std::size_t(infected(j))]);
    if (nS > 0 && p.q_minus(j) > 0)
      out.push_back({JumpKind::pressure_infection, susceptible(j), infected(j), p.q_minus(j) * nS});
    if (nI > 0 && p.q_plus(j) > 0)
      out.push_back({JumpKind::recovery, infected(j), susceptible(j), p.q_plus(j) * nI});
    for (Index k = 0; k < p.d; ++k) {
      const double rate = p.beta(k, j) * double(n.n[std::size_t(infected(k))]) / N * nS;
      if (rate > 0) out.push_back({JumpKind::peer_infection, susceptible(j), infected(j), rate, k});
    }
  }
  return out;
}

/// Expected instantaneous drift of n/N.
inline Vector expected_drift(const ModelParams& p, const CountVector& n, const StationaryControl& u) {
  Vector drift = Vector::Zero(p.states());
  const double N = double(n.total());
  for (const auto& t : transition_rates(p, n, u)) {
    drift(t.from) -= t.rate / N;
    drift(t.to) += t.rate / N;
  }
  return drift;
}

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent stream for (master seed, replication, N): the three words are
/// folded through splitmix64 and the result seeds a mt19937_64.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t replication, std::uint64_t population) {
  std::uint64_t state = seed;
  std::uint64_t mixed = splitmix64(state);
  state = mixed ^ replication;
  mixed = splitmix64(state);
  state = mixed ^ population;
  return std::mt19937_64(splitmix64(state));
}

/// Uniform on [0,1) from the top 53 bits; identical on every platform,
/// unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

// ---------------------------------------------------------------------------
// Simulation

struct CountPath {
  std::vector<double> times;         ///< jump times, times[0] = 0
  std::vector<CountVector> states;   ///< state held on [times[m], times[m+1])
  std::vector<JumpEvent> events;     ///< events[m] leads into states[m+1]
  double t_end = 0.0;

  /// State at time t (right-continuous).
  const CountVector& at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return states[std::size_t(std::distance(times.begin(), it)) - 1];
  }

  /// Time average of n/N over [0, t_end].
  Vector time_average() const {
    Vector acc = Vector::Zero(Index(states.front().n.size()));
    for (std::size_t m = 0; m < states.size(); ++m) {
      const double until = m + 1 < times.size() ? times[m + 1] : t_end;
      acc += (until - times[m]) * states[m].fractions();
    }
    return acc / t_end;
  }
};

/// Gillespie simulation on [0, t_end]; on_jump(event, state) is called after
/// every jump. Returns the terminal state.
template <class OnJump>
CountVector simulate_ctmc_visit(const ModelParams& p, CountVector n, const StationaryControl& u, double t_end,
                                std::mt19937_64& rng, OnJump&& on_jump) {
  if (Index(n.n.size()) != p.states()) throw std::invalid_argument("simulate_ctmc: dimension mismatch");
  if (n.total() < 1) throw std::invalid_argument("simulate_ctmc: N must be >= 1");
  double t = 0.0;
  for (;;) {
    const auto channels = transition_rates(p, n, u);
    double total = 0.0;
    for (const auto& c : channels) total += c.rate;
    if (total <= 0.0) break;
    t += -std::log1p(-uniform01(rng)) / total;
    if (t > t_end) break;
    const double pick = uniform01(rng) * total;
    std::size_t chosen = channels.size() - 1;
    double running = 0.0;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      running += channels[c].rate;
      if (pick < running) {
        chosen = c;
        break;
      }
    }
    const auto& c = channels[chosen];
    --n.n[std::size_t(c.from)];
    ++n.n[std::size_t(c.to)];
    on_jump(JumpEvent{t, c.kind, c.from, c.to}, n);
  }
  return n;
}

/// Full recorded path, stream chosen by (seed, replication, N).
inline CountPath simulate_ctmc(const ModelParams& p, const CountVector& n0, const StationaryControl& u,
                               double t_end, std::uint64_t seed, std::uint64_t replication = 0) {
  auto rng = make_stream(seed, replication, std::uint64_t(n0.total()));
  CountPath path;
  path.t_end = t_end;
  path.times.push_back(0.0);
  path.states.push_back(n0);
  simulate_ctmc_visit(p, n0, u, t_end, rng, [&](const JumpEvent& e, const CountVector& n) {
    path.times.push_back(e.time);
    path.states.push_back(n);
    path.events.push_back(e);
  });
  return path;
}

struct LlnRow {
  long N = 0;
  std::size_t replications = 0;
  double mean_sup_error = 0.0;  ///< mean over replications of sup_t |n(t)/N - x(t)|
  double std_error = 0.0;       ///< standard error of that mean
};

/// Sup-norm distance between n/N and the kinetic path, evaluated at the
/// nodes of grid, for each N; replications run on up to `threads` workers.
inline std::vector<LlnRow> lln_error(const ModelParams& p, const StationaryControl& u, const MixedState& x0,
                                     const TimeGrid& grid, const std::vector<long>& N_list,
                                     std::size_t replications, std::uint64_t seed, unsigned threads = 1) {
  if (replications < 1) throw std::invalid_argument("lln_error: replications must be >= 1");
  const auto ode = integrate_forward(p, x0, u, grid);
  std::vector<LlnRow> table;
  for (long N : N_list) {
    const CountVector n0 = largest_remainder(x0, N);
    std::vector<double> errors(replications);
    parallel_for(replications, threads, [&](std::size_t r) {
      auto rng = make_stream(seed, r, std::uint64_t(N));
      std::size_t node = 0;
      double worst = 0.0;
      CountVector held = n0;
      const auto advance_to = [&](double t) {
        // every node strictly before t sees the state held before this jump
        while (node < grid.nodes() && grid.time(node) < t) {
          worst = std::max(worst, (held.fractions() - ode[node].values()).lpNorm<Eigen::Infinity>());
          ++node;
        }
      };
      simulate_ctmc_visit(p, n0, u, grid.t_end, rng, [&](const JumpEvent& e, const CountVector& n) {
        advance_to(e.time);
        held = n;
      });
      advance_to(std::numeric_limits<double>::infinity());
      errors[r] = worst;
    });
    LlnRow row;
    row.N = N;
    row.replications = replications;
    row.mean_sup_error = std::accumulate(errors.begin(), errors.end(), 0.0) / double(replications);
    if (replications > 1) {
      double ss = 0.0;
      for (double e : errors) ss += (e - row.mean_sup_error) * (e - row.mean_sup_error);
      row.std_error = std::sqrt(ss / double(replications - 1) / double(replications));
    }
    table.push_back(row);
  }
  return table;
}

}  // namespace mfg
