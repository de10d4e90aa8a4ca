#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lapkey/envs.hpp"
#include "lapkey/io.hpp"
#include "lapkey/keyboard.hpp"
#include "lapkey/planning.hpp"
#include "lapkey/spectral.hpp"
#include "lapkey/usfa.hpp"

namespace lapkey::experiments {

/// Apply fn to every seed on up to `jobs` threads; results come back in seed order.
/// The first failure in seed order is rethrown.
template <class Fn>
auto for_seeds(const std::vector<std::uint64_t>& seeds, int jobs, Fn fn) {
  using Result = decltype(fn(std::uint64_t{}));
  std::vector<std::optional<Result>> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
      try {
        results[i].emplace(fn(seeds[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, jobs));
  if (n_threads == 1 || seeds.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, seeds.size()); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<Result> out;
  out.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

/// Uniform-random-policy chain, Laplacian and full basis of a grid.
struct GridSpectrum {
  TransitionMatrix chain;
  LaplacianMatrix laplacian;
  SpectralBasis basis;
};

inline GridSpectrum grid_spectrum(const GridWorld& g) {
  GridSpectrum out;
  out.chain = induced_transition_matrix(g.mdp, PolicyTable::uniform(g.n_states(), g.mdp.n_actions()));
  out.laplacian = build_laplacian(out.chain);
  out.basis = eigendecompose(out.laplacian);
  return out;
}

// ---------------------------------------------------------------- bound sweep

struct GapTrend {
  std::string reward_id;
  int increases = 0;  // consecutive cutoffs where bound_loose - value_error grew
  double max_increase = 0.0;
};

struct BoundSweep {
  std::vector<io::LabeledBound> rows;
  std::vector<GapTrend> trends;
};

/// Gap bound_loose - value_error along consecutive finite-bound rows.
inline GapTrend gap_trend(const std::string& id, const std::vector<BoundReport>& reports) {
  GapTrend t{id};
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : reports) {
    if (!std::isfinite(r.bound_loose)) continue;
    const double gap = r.bound_loose - r.value_error;
    if (!std::isnan(prev) && gap > prev + kBoundSlack) {
      ++t.increases;
      t.max_increase = std::max(t.max_increase, gap - prev);
    }
    prev = gap;
  }
  return t;
}

/// theorem1_check for each reward over every spectral-gap cutoff in [k_min, k_max].
inline BoundSweep bound_sweep(const GridWorld& g, const GridSpectrum& spec,
                              const std::vector<RewardSpec>& rewards, double gamma, int k_min,
                              int k_max) {
  const auto ks = gap_cutoffs(spec.basis, k_min, k_max);
  BoundSweep out;
  for (const auto& rw : rewards) {
    const TabularMdp task = g.mdp.with_terminals(rw.terminal_states).with_gamma(gamma);
    const auto reports = theorem1_sweep(task, spec.chain, spec.basis, rw.reward, ks);
    for (const auto& r : reports) out.rows.push_back({rw.id, r});
    out.trends.push_back(gap_trend(rw.id, reports));
  }
  return out;
}

/// Reward w^T phi_k with w ~ N(0, I), reproducible from the seed.
inline RewardTable in_span_reward(const SpectralBasis& basis, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Vector w(k);
  for (int i = 0; i < k; ++i) w(i) = normal(rng);
  return RewardTable(basis.eigenvectors.leftCols(k) * w);
}

// ---------------------------------------------------------------- zero-shot

/// n i.i.d. uniform state draws with the reward paid on entering each.
inline std::vector<RewardSample> uniform_reward_samples(const RewardTable& r, int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("sample count must be positive");
  Rng rng(seed);
  std::uniform_int_distribution<int> state(0, r.n_states() - 1);
  std::vector<RewardSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int s = state(rng);
    out.push_back({s, r.values(s)});
  }
  return out;
}

inline double relative_error(const Vector& estimate, const Vector& exact) {
  const double denom = exact.norm();
  if (denom == 0.0) return estimate.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (estimate - exact).norm() / denom;
}

struct ZeroShotConfig {
  Cell goal = kFourRoomsGoal;
  int k = 6;
  double gamma = 0.95;
  bool sampled = false;
  int samples = 10000;
  int episodes = 100;
  int episode_cap = 500;
};

struct ZeroShotResult {
  WeightVector exact;
  WeightVector used;
  double weight_error = 0.0;
  EvalResult eval;
};

/// Zero-shot policy for a Four-Rooms goal task, evaluated from the start region.
inline ZeroShotResult four_rooms_zero_shot(const ZeroShotConfig& cfg, std::uint64_t seed) {
  const GridWorld g = four_rooms_goal_task(cfg.goal, cfg.gamma);
  const GridSpectrum spec = grid_spectrum(g);
  const Matrix phi = features_from_basis(spec.basis, cfg.k);
  const RewardTable r = g.goal_reward();
  ZeroShotResult out;
  out.exact = zero_shot_weight(r, phi);
  out.used = cfg.sampled ? zero_shot_weight_sampled(uniform_reward_samples(r, cfg.samples, seed), phi)
                         : out.exact;
  out.weight_error = relative_error(out.used.w, out.exact.w);
  const TabularMdp task = g.task();
  const auto sf = sf_iteration(task, phi, out.used);
  out.eval = evaluate_policy(task, r, sf.actions, cfg.episodes, cfg.episode_cap, seed,
                             four_rooms_start_region(g));
  return out;
}

// ---------------------------------------------------------------- stitching

struct StitchConfig {
  Cell goal = kFourRoomsGoal;
  int k = 6;
  int t_term = 6;
  int episodes = 2000;
  int episode_cap = 500;
  double gamma = 0.95;
  int eval_episodes = 100;
  int eval_interval = 100;
};

struct StitchResult {
  EvalResult zero_shot;
  EvalResult keyboard;
  std::vector<CurvePoint> curve;
  int first_full_success = -1;  // first curve episode with greedy success on every eval episode
  MetaAgent agent;
  OptionLibrary library;
};

/// Meta-policy over +-e_i options plus the zero-shot option on a Four-Rooms goal task.
inline StitchResult four_rooms_keyboard(const StitchConfig& cfg, std::uint64_t seed) {
  const GridWorld g = four_rooms_goal_task(cfg.goal, cfg.gamma);
  const GridSpectrum spec = grid_spectrum(g);
  const Matrix phi = features_from_basis(spec.basis, cfg.k);
  const RewardTable r = g.goal_reward();
  const TabularMdp task = g.task();
  const auto starts = four_rooms_start_region(g);

  const UsfaTable usfa(task, phi);
  const WeightVector w = zero_shot_weight(r, phi);
  StitchResult out;
  out.zero_shot = evaluate_policy(task, r, usfa.solve(w)->actions, cfg.eval_episodes,
                                  cfg.episode_cap, seed, starts);

  out.library = build_library(spec.basis, cfg.k, w, cfg.t_term);
  out.library.bind(usfa);
  MetaAgent agent = MetaAgent::zeros(task.n_states(), out.library.size(), task.gamma(), seed);
  MetaTrainOptions opts;
  opts.starts = starts;
  opts.eval_interval = cfg.eval_interval;
  opts.eval_episodes = 10;
  auto [trained, curve] = train_meta(task, r, out.library, agent, cfg.episodes, cfg.episode_cap, opts);
  out.agent = std::move(trained);
  out.curve = std::move(curve);
  out.keyboard = evaluate(task, r, out.library, out.agent, cfg.eval_episodes, cfg.episode_cap,
                          seed + 1, starts);
  for (const auto& p : out.curve)
    if (p.greedy_return >= 1.0) {
      out.first_full_success = p.episode;
      break;
    }
  return out;
}

// ---------------------------------------------------------------- Item-Collector

struct ItemRunConfig {
  ItemCollectorConfig env{5, 2, 50, 0, ItemRewardScheme::kOrdered, 0.95};
  int k = 5;
  int t_term = 5;
  int episodes = 3000;
  int zero_shot_samples = 10000;
  int eval_interval = 100;
};

struct ItemRunResult {
  double zero_shot = 0.0;
  double best_single = 0.0;
  std::string best_single_label;
  double keyboard = 0.0;
  double improvement = 0.0;  // percent over zero-shot
  double optimal = 0.0;      // best achievable return within the horizon
  std::vector<CurvePoint> curve;
  MetaAgent agent;
  OptionLibrary library;
};

/// Random-walk reward samples (uniform actions, restarted every horizon steps).
template <RewardModel R>
std::vector<RewardSample> random_walk_samples(const TabularMdp& mdp, const R& reward, int start,
                                              int horizon, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> act(0, mdp.n_actions() - 1);
  std::vector<RewardSample> out;
  out.reserve(static_cast<std::size_t>(n));
  int s = start;
  for (int i = 0; i < n; ++i) {
    if (i % horizon == 0) s = start;
    const int a = act(rng);
    const int next = mdp.sample_next(s, a, rng);
    out.push_back({next, reward(s, a, next)});
    s = next;
  }
  return out;
}

/// One layout: features from the position torus lifted to (cell, mask) states,
/// sampled zero-shot weight, fixed-option baselines and the trained meta-policy.
inline ItemRunResult item_collector_keyboard(const ItemRunConfig& cfg, std::uint64_t seed) {
  ItemCollectorConfig env = cfg.env;
  env.layout_seed = seed;
  const ItemCollector ic = item_collector(env);
  const GridSpectrum spec = grid_spectrum(ic.positions);
  const Matrix phi = ic.lift(features_from_basis(spec.basis, cfg.k));
  const UsfaTable usfa(ic.mdp, phi);
  const int horizon = env.horizon;
  const std::vector<int> start{ic.start_state};

  const WeightVector w = zero_shot_weight_sampled(
      random_walk_samples(ic.mdp, ic.reward, ic.start_state, horizon, cfg.zero_shot_samples, seed), phi);

  ItemRunResult out;
  out.library = build_library(spec.basis, cfg.k, w, cfg.t_term);
  out.library.bind(usfa);
  out.best_single = -std::numeric_limits<double>::infinity();
  for (int o = 0; o < out.library.size(); ++o) {
    const double ret =
        evaluate_policy(ic.mdp, ic.reward, out.library.actions(o), 1, horizon, seed, start).mean_return;
    if (out.library.labels[static_cast<std::size_t>(o)] == "zero-shot") out.zero_shot = ret;
    if (ret > out.best_single) {
      out.best_single = ret;
      out.best_single_label = out.library.labels[static_cast<std::size_t>(o)];
    }
  }
  if (out.library.labels.back() != "zero-shot") {
    // zero-shot weight coincided with a directional option
    out.zero_shot = evaluate_policy(ic.mdp, ic.reward, usfa.solve(w)->actions, 1, horizon, seed, start)
                        .mean_return;
  }

  MetaAgent agent = MetaAgent::zeros(ic.mdp.n_states(), out.library.size(), env.gamma, seed);
  MetaTrainOptions opts;
  opts.starts = start;
  opts.eval_interval = cfg.eval_interval;
  auto [trained, curve] = train_meta(ic.mdp, ic.reward, out.library, agent, cfg.episodes, horizon, opts);
  out.agent = std::move(trained);
  out.curve = std::move(curve);
  out.keyboard = evaluate(ic.mdp, ic.reward, out.library, out.agent, 1, horizon, seed, start).mean_return;
  out.improvement = percent_improvement(out.keyboard, out.zero_shot);
  out.optimal = finite_horizon_value(ic.mdp, ic.reward, horizon)(ic.start_state);
  return out;
}

}  // namespace lapkey::experiments
