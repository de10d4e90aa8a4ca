#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lapkey/error.hpp"
#include "lapkey/mdp.hpp"
#include "lapkey/planning.hpp"
#include "lapkey/spectral.hpp"
#include "lapkey/usfa.hpp"

namespace lapkey {

/// Finite set of weight vectors, each executed as its greedy SF policy for
/// t_term primitive steps.
struct OptionLibrary {
  std::vector<WeightVector> options;
  std::vector<std::string> labels;
  int t_term = 5;
  std::vector<std::shared_ptr<const SuccessorFeatures>> policies;  // parallel to options once bound

  int size() const { return static_cast<int>(options.size()); }
  bool bound() const { return policies.size() == options.size() && !options.empty(); }

  /// Solve (or fetch memoized) successor features for every option.
  void bind(const UsfaTable& usfa) {
    policies.clear();
    for (const auto& w : options) policies.push_back(usfa.solve(w));
  }

  std::span<const int> actions(int option) const {
    if (!bound()) throw DomainError("option library has no bound policies");
    return policies[static_cast<std::size_t>(option)]->actions;
  }
};

/// +e_1, -e_1, +e_2, ..., -e_k, then the zero-shot weight when given and not already present.
inline OptionLibrary build_library(const SpectralBasis& basis, int k,
                                   const std::optional<WeightVector>& zero_shot, int t_term) {
  if (k < 1) throw DomainError("option library needs k >= 1");
  if (k > basis.width())
    throw DomainError("k = " + std::to_string(k) + " exceeds basis width " +
                      std::to_string(basis.width()));
  if (t_term < 1) throw DomainError("t_term must be >= 1");
  OptionLibrary lib;
  lib.t_term = t_term;
  for (int i = 0; i < k; ++i) {
    for (const double sign : {1.0, -1.0}) {
      Vector w = Vector::Zero(k);
      w(i) = sign;
      lib.options.emplace_back(std::move(w));
      lib.labels.push_back((sign > 0 ? "+e" : "-e") + std::to_string(i + 1));
    }
  }
  if (zero_shot) {
    if (zero_shot->dim() != k)
      throw DimensionError("zero-shot weight has dimension " + std::to_string(zero_shot->dim()) +
                           ", expected " + std::to_string(k));
    const bool duplicate = std::any_of(lib.options.begin(), lib.options.end(), [&](const auto& w) {
      return (w.w - zero_shot->w).cwiseAbs().maxCoeff() <= 1e-12;
    });
    if (!duplicate) {
      lib.options.push_back(*zero_shot);
      lib.labels.emplace_back("zero-shot");
    }
  }
  return lib;
}

struct Segment {
  int start = 0;
  int option = 0;
  double ret = 0.0;           // sum_{t < tau} gamma^t r_{t+1}
  double undiscounted = 0.0;  // sum_{t < tau} r_{t+1}
  int length = 0;             // tau
  int end = 0;
  bool terminated = false;
};

struct RolloutRecord {
  std::vector<Segment> segments;
};

/// Follow `actions` from `state` for up to `t_term` steps, stopping early on a terminal state.
template <RewardModel R>
Segment execute_option(const TabularMdp& mdp, const R& reward, int state, std::span<const int> actions,
                       int t_term, Rng& rng, int option_index = 0) {
  mdp.check_state(state);
  if (mdp.is_terminal(state)) throw DomainError("cannot start an option in a terminal state");
  if (static_cast<int>(actions.size()) != mdp.n_states())
    throw DimensionError("option policy does not cover every state");
  Segment seg;
  seg.start = state;
  seg.option = option_index;
  double discount = 1.0;
  int s = state;
  while (seg.length < t_term) {
    const int a = actions[static_cast<std::size_t>(s)];
    const int next = mdp.sample_next(s, a, rng);
    const double r = reward(s, a, next);
    seg.ret += discount * r;
    seg.undiscounted += r;
    discount *= mdp.gamma();
    ++seg.length;
    s = next;
    if (mdp.is_terminal(s)) {
      seg.terminated = true;
      break;
    }
  }
  seg.end = s;
  return seg;
}

/// Tabular SMDP action values over (state, option).
struct MetaAgent {
  Matrix q;
  double alpha = 0.1;
  double epsilon = 0.1;        // initial exploration rate
  double epsilon_final = 0.01;  // reached linearly at the last training episode
  double gamma = 0.95;
  std::uint64_t rng_seed = 0;

  static MetaAgent zeros(int n_states, int n_options, double gamma, std::uint64_t seed) {
    MetaAgent agent;
    agent.q = Matrix::Zero(n_states, n_options);
    agent.gamma = gamma;
    agent.rng_seed = seed;
    return agent;
  }

  /// Greedy option, lowest index on ties.
  int greedy(int s) const {
    Eigen::Index best = 0;
    for (Eigen::Index o = 1; o < q.cols(); ++o)
      if (q(s, o) > q(s, best)) best = o;
    return static_cast<int>(best);
  }

  /// Q(s,o) += alpha [R + gamma^tau (1 - done) max_o' Q(s',o') - Q(s,o)].
  void update(const Segment& seg) {
    const double boot =
        seg.terminated ? 0.0 : std::pow(gamma, seg.length) * q.row(seg.end).maxCoeff();
    q(seg.start, seg.option) += alpha * (seg.ret + boot - q(seg.start, seg.option));
  }
};

struct CurvePoint {
  int episode = 0;
  double greedy_return = 0.0;
  double epsilon = 0.0;
};

struct EvalResult {
  double mean_return = 0.0;             // undiscounted
  double mean_discounted_return = 0.0;  // with the MDP discount
  double success_rate = 0.0;            // fraction of episodes ending in a terminal state
};

struct MetaTrainOptions {
  std::vector<int> starts;  // uniform start distribution; empty = every non-terminal state
  int eval_interval = 0;    // 0 disables the learning curve
  int eval_episodes = 10;
};

namespace detail {

inline std::vector<int> resolve_starts(const TabularMdp& mdp, const std::vector<int>& starts) {
  std::vector<int> out = starts;
  if (out.empty())
    for (int s = 0; s < mdp.n_states(); ++s)
      if (!mdp.is_terminal(s)) out.push_back(s);
  if (out.empty()) throw DomainError("no non-terminal start state");
  for (int s : out) {
    mdp.check_state(s);
    if (mdp.is_terminal(s)) throw DomainError("start state " + std::to_string(s) + " is terminal");
  }
  return out;
}

inline int draw(const std::vector<int>& pool, Rng& rng) {
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

}  // namespace detail

/// Greedy (epsilon = 0) hierarchical rollouts.
template <RewardModel R>
EvalResult evaluate(const TabularMdp& mdp, const R& reward, const OptionLibrary& library,
                    const MetaAgent& agent, int n_episodes, int episode_cap, std::uint64_t seed,
                    const std::vector<int>& starts = {}) {
  if (n_episodes < 1) throw DomainError("n_episodes must be positive");
  const auto pool = detail::resolve_starts(mdp, starts);
  Rng rng(seed);
  EvalResult res;
  for (int ep = 0; ep < n_episodes; ++ep) {
    int s = detail::draw(pool, rng);
    int steps = 0;
    double discount = 1.0;
    bool done = false;
    while (!done && steps < episode_cap) {
      const int o = agent.greedy(s);
      const auto seg = execute_option(mdp, reward, s, library.actions(o),
                                      std::min(library.t_term, episode_cap - steps), rng, o);
      res.mean_return += seg.undiscounted;
      res.mean_discounted_return += discount * seg.ret;
      discount *= std::pow(mdp.gamma(), seg.length);
      steps += seg.length;
      s = seg.end;
      done = seg.terminated;
    }
    if (done) res.success_rate += 1.0;
  }
  res.mean_return /= n_episodes;
  res.mean_discounted_return /= n_episodes;
  res.success_rate /= n_episodes;
  return res;
}

/// Rollouts of a flat stationary policy (one action per state).
template <RewardModel R>
EvalResult evaluate_policy(const TabularMdp& mdp, const R& reward, std::span<const int> actions,
                           int n_episodes, int episode_cap, std::uint64_t seed,
                           const std::vector<int>& starts = {}) {
  if (n_episodes < 1) throw DomainError("n_episodes must be positive");
  const auto pool = detail::resolve_starts(mdp, starts);
  Rng rng(seed);
  EvalResult res;
  for (int ep = 0; ep < n_episodes; ++ep) {
    const auto seg = execute_option(mdp, reward, detail::draw(pool, rng), actions, episode_cap, rng);
    res.mean_return += seg.undiscounted;
    res.mean_discounted_return += seg.ret;
    if (seg.terminated) res.success_rate += 1.0;
  }
  res.mean_return /= n_episodes;
  res.mean_discounted_return /= n_episodes;
  res.success_rate /= n_episodes;
  return res;
}

/// SMDP Q-learning over the option library with epsilon-greedy option choice.
/// Exploratory greedy picks break ties at random; evaluation uses the lowest index.
template <RewardModel R>
std::pair<MetaAgent, std::vector<CurvePoint>> train_meta(const TabularMdp& mdp, const R& reward,
                                                         const OptionLibrary& library, MetaAgent agent,
                                                         int episodes, int episode_cap,
                                                         const MetaTrainOptions& opts = {}) {
  if (episodes < 1) throw DomainError("episodes must be >= 1");
  if (episode_cap < 1) throw DomainError("episode_cap must be >= 1");
  if (!library.bound()) throw DomainError("option library has no bound policies");
  if (agent.q.rows() != mdp.n_states() || agent.q.cols() != library.size())
    throw DimensionError("meta Q-table shape does not match MDP states x options");
  if (!(agent.epsilon >= 0.0 && agent.epsilon <= 1.0))
    throw DomainError("epsilon must lie in [0, 1]");

  const auto pool = detail::resolve_starts(mdp, opts.starts);
  Rng rng(agent.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> any_option(0, library.size() - 1);
  std::vector<int> ties;
  std::vector<CurvePoint> curve;

  for (int ep = 0; ep < episodes; ++ep) {
    const double frac = episodes > 1 ? static_cast<double>(ep) / (episodes - 1) : 1.0;
    const double eps = agent.epsilon + (agent.epsilon_final - agent.epsilon) * frac;
    int s = detail::draw(pool, rng);
    int steps = 0;
    bool done = false;
    while (!done && steps < episode_cap) {
      int o;
      if (unif(rng) < eps) {
        o = any_option(rng);
      } else {
        const double best = agent.q.row(s).maxCoeff();
        ties.clear();
        for (int c = 0; c < library.size(); ++c)
          if (agent.q(s, c) == best) ties.push_back(c);
        o = ties.size() == 1 ? ties[0] : detail::draw(ties, rng);
      }
      const auto seg = execute_option(mdp, reward, s, library.actions(o),
                                      std::min(library.t_term, episode_cap - steps), rng, o);
      agent.update(seg);
      if (!agent.q.row(seg.start).allFinite())
        throw NumericalError("meta Q-table diverged at episode " + std::to_string(ep));
      steps += seg.length;
      s = seg.end;
      done = seg.terminated;
    }
    if (opts.eval_interval > 0 && (ep + 1) % opts.eval_interval == 0) {
      const auto res = evaluate(mdp, reward, library, agent, opts.eval_episodes, episode_cap,
                                agent.rng_seed + 7919u * static_cast<std::uint64_t>(ep + 1), opts.starts);
      curve.push_back({ep + 1, res.mean_return, eps});
    }
  }
  return {std::move(agent), std::move(curve)};
}

/// Table-style relative improvement, in percent, of `value` over `baseline`.
inline double percent_improvement(double value, double baseline) {
  if (baseline == 0.0) return value == 0.0 ? 0.0 : std::copysign(INFINITY, value);
  return 100.0 * (value - baseline) / std::abs(baseline);
}

}  // namespace lapkey
