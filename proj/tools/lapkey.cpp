#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "lapkey/allo.hpp"
#include "lapkey/envs.hpp"
#include "lapkey/experiments.hpp"
#include "lapkey/io.hpp"

namespace {

using namespace lapkey;
using io::json;

enum Exit : int { kOk = 0, kConfig = 2, kNumerical = 3, kInvariant = 4 };

struct Common {
  std::string domain;
  std::string layout;
  int k = 6;
  double gamma = 0.95;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  int seed_count = 0;
  std::string out = ".";
  int jobs = 1;
  std::string config;

  std::vector<std::uint64_t> seed_list() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> out_seeds;
    for (int i = 0; i < std::max(1, seed_count); ++i) out_seeds.push_back(seed + static_cast<std::uint64_t>(i));
    return out_seeds;
  }
};

void add_common(CLI::App* cmd, Common& c, bool needs_domain = true) {
  auto* d = cmd->add_option("--domain", c.domain, "four-rooms | item-collector | grid");
  if (needs_domain) d->check(CLI::IsMember({"four-rooms", "item-collector", "grid"}));
  cmd->add_option("--layout", c.layout, "grid layout JSON (for --domain grid)");
  cmd->add_option("--k", c.k, "number of eigenvectors")->check(CLI::PositiveNumber);
  cmd->add_option("--gamma", c.gamma, "discount factor")->check(CLI::Range(0.0, 0.999999));
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--seeds", c.seeds, "explicit seed list")->delimiter(',');
  cmd->add_option("--seed-count", c.seed_count, "run seeds seed..seed+N-1")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--jobs", c.jobs, "parallel workers across seeds")->check(CLI::PositiveNumber);
  cmd->add_option("--config", c.config, "JSON config file; flags given on the command line win");
}

/// Fill options that were not given on the command line from the JSON config.
/// Keys are option names without dashes, with '-' replaced by '_'.
void apply_config(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  const json j = [&] {
    try {
      return json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
      throw FormatError("config " + path + ": " + e.what());
    }
  }();
  if (!j.is_object()) throw FormatError("config " + path + " must hold a JSON object");
  std::map<std::string, CLI::Option*> by_key;
  for (CLI::Option* opt : cmd->get_options()) {
    std::string key = opt->get_single_name();
    std::replace(key.begin(), key.end(), '-', '_');
    by_key[key] = opt;
  }
  for (const auto& [key, value] : j.items()) {
    auto it = by_key.find(key);
    if (it == by_key.end() || key == "config" || key == "help")
      throw FormatError("config " + path + ": unknown key '" + key + "'");
    CLI::Option* opt = it->second;
    if (opt->count() > 0) continue;
    std::vector<std::string> values;
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array())
      for (const auto& v : value) values.push_back(text(v));
    else
      values.push_back(text(value));
    opt->add_result(values);
    opt->run_callback();
  }
}

std::filesystem::path out_dir(const Common& c) {
  std::filesystem::path p(c.out);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p)) throw FormatError("output directory " + c.out + " is not writable");
  return p;
}

GridWorld grid_domain(const Common& c) {
  if (c.domain == "four-rooms") return four_rooms(c.gamma);
  if (c.domain == "grid") {
    if (c.layout.empty()) throw FormatError("--domain grid requires --layout");
    GridSpec spec = io::grid_spec_from_json(io::detail::parse_with_line(io::read_file(c.layout), "layout " + c.layout));
    spec.gamma = c.gamma;
    return build_grid(spec);
  }
  throw FormatError("domain '" + c.domain + "' is not a grid domain for this command");
}

void require_domain(const Common& c) {
  if (c.domain.empty()) throw CLI::RequiredError("--domain");
}

// ---------------------------------------------------------------- spectrum

int cmd_spectrum(const Common& c) {
  require_domain(c);
  GridWorld g = c.domain == "item-collector" ? [&] {
    ItemCollectorConfig cfg{5, 2, 50, c.seed, ItemRewardScheme::kOrdered, c.gamma};
    return item_collector(cfg).positions;
  }()
                                             : grid_domain(c);
  const auto spec = experiments::grid_spectrum(g);
  if (c.k > spec.basis.width()) throw DomainError("--k exceeds the number of states");
  const int k = c.k;
  const auto dir = out_dir(c);
  io::write_file((dir / "basis.csv").string(), io::basis_csv(spec.basis, k, c.seed));
  io::write_file((dir / "eigenvalues.json").string(),
                 io::dump(io::eigenvalues_json(spec.basis, k, spec.chain, c.seed)));
  io::write_file((dir / "layout.json").string(), io::dump(io::layout_json(g)));
  std::cout << "spectrum: " << g.n_states() << " states, " << k << " eigenvectors -> " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- bound

struct BoundOpts {
  int k_min = 2;
  int k_max = 0;
  std::string reward = "library";
  int span_k = 6;
};

int cmd_bound(const Common& c, const BoundOpts& b) {
  require_domain(c);
  const GridWorld g = grid_domain(c);
  const auto spec = experiments::grid_spectrum(g);
  const int k_max = b.k_max > 0 ? b.k_max : g.n_states();

  std::vector<RewardSpec> rewards;
  if (b.reward == "in-span") {
    if (b.span_k < 1 || b.span_k > g.n_states()) throw DomainError("--span-k out of range");
    RewardSpec rs;
    rs.id = "in_span_k" + std::to_string(b.span_k);
    rs.reward = experiments::in_span_reward(spec.basis, b.span_k, c.seed);
    rs.graph_norm = graph_norm(spec.chain, rs.reward.values).norm;
    rewards.push_back(rs);
  } else {
    for (const auto& rs : reward_library(g))
      if (b.reward == "library" || rs.id == b.reward) rewards.push_back(rs);
    if (rewards.empty()) throw FormatError("unknown reward '" + b.reward + "'");
  }

  const auto sweep = experiments::bound_sweep(g, spec, rewards, c.gamma, b.k_min, k_max);
  const auto dir = out_dir(c);
  io::write_file((dir / "bounds.csv").string(), io::bound_csv(sweep.rows, c.seed));
  json trends = json::array();
  for (const auto& t : sweep.trends)
    trends.push_back({{"reward_id", t.reward_id}, {"gap_increases", t.increases}, {"max_gap_increase", t.max_increase}});
  io::write_file((dir / "bounds_summary.json").string(),
                 io::dump({{"rows", sweep.rows.size()}, {"violations", 0}, {"gap_trend", trends},
                           {"metadata", io::metadata(c.seed)}}));
  std::cout << "bound: " << sweep.rows.size() << " rows, 0 dominance violations\n";
  return kOk;
}

// ---------------------------------------------------------------- zeroshot

struct ZeroShotOpts {
  std::string mode = "exact";
  int samples = 10000;
  int episodes = 100;
  int goal_row = kFourRoomsGoal.row;
  int goal_col = kFourRoomsGoal.col;
};

int cmd_zeroshot(const Common& c, const ZeroShotOpts& z) {
  require_domain(c);
  if (c.domain != "four-rooms") throw FormatError("zeroshot supports --domain four-rooms");
  if (z.mode != "exact" && z.mode != "sampled") throw FormatError("--mode must be exact or sampled");
  experiments::ZeroShotConfig cfg;
  cfg.goal = {z.goal_row, z.goal_col};
  cfg.k = c.k;
  cfg.gamma = c.gamma;
  cfg.sampled = z.mode == "sampled";
  cfg.samples = z.samples;
  cfg.episodes = z.episodes;
  const auto seeds = c.seed_list();
  const auto results = experiments::for_seeds(seeds, c.jobs, [&](std::uint64_t s) {
    return experiments::four_rooms_zero_shot(cfg, s);
  });
  io::CsvWriter csv({"seed", "mode", "k", "mean_return", "success_rate", "weight_error"});
  double mean = 0.0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& r = results[i];
    mean += r.eval.mean_return / static_cast<double>(seeds.size());
    csv.row({std::to_string(seeds[i]), z.mode, std::to_string(c.k), io::format_double(r.eval.mean_return),
             io::format_double(r.eval.success_rate), io::format_double(r.weight_error)});
  }
  io::write_file((out_dir(c) / "zeroshot.csv").string(), csv.str(c.seed));
  std::cout << "zeroshot: mean return " << io::format_double(mean) << " over " << seeds.size() << " seeds\n";
  return kOk;
}

// ---------------------------------------------------------------- keyboard

struct KeyboardOpts {
  int t_term = 0;
  int episodes = 0;
  int side = 5;
  int items_per_type = 2;
  int horizon = 50;
  std::string scheme = "ordered";
};

int cmd_keyboard(const Common& c, const KeyboardOpts& kb, bool k_given) {
  require_domain(c);
  const auto seeds = c.seed_list();
  const auto dir = out_dir(c);
  json per_seed = json::array();
  double zs_mean = 0.0, lk_mean = 0.0, single_mean = 0.0;
  const double inv = 1.0 / static_cast<double>(seeds.size());

  if (c.domain == "four-rooms") {
    experiments::StitchConfig cfg;
    cfg.k = k_given ? c.k : 6;
    cfg.t_term = kb.t_term > 0 ? kb.t_term : 6;
    cfg.episodes = kb.episodes > 0 ? kb.episodes : 2000;
    cfg.gamma = c.gamma;
    const auto results = experiments::for_seeds(seeds, c.jobs, [&](std::uint64_t s) {
      return experiments::four_rooms_keyboard(cfg, s);
    });
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto& r = results[i];
      io::write_file((dir / ("curve_seed" + std::to_string(seeds[i]) + ".csv")).string(),
                     io::curve_csv(r.curve, seeds[i]));
      io::write_file((dir / ("agent_seed" + std::to_string(seeds[i]) + ".json")).string(),
                     io::dump(io::agent_json(r.agent, r.library)));
      zs_mean += inv * r.zero_shot.mean_return;
      lk_mean += inv * r.keyboard.mean_return;
      per_seed.push_back({{"seed", seeds[i]},
                          {"zero_shot_return", r.zero_shot.mean_return},
                          {"zero_shot_success", r.zero_shot.success_rate},
                          {"lk_return", r.keyboard.mean_return},
                          {"lk_success", r.keyboard.success_rate},
                          {"first_full_success_episode", r.first_full_success},
                          {"improvement_percent", percent_improvement(r.keyboard.mean_return, r.zero_shot.mean_return)}});
    }
  } else if (c.domain == "item-collector") {
    experiments::ItemRunConfig cfg;
    cfg.env.side = kb.side;
    cfg.env.items_per_type = kb.items_per_type;
    cfg.env.horizon = kb.horizon;
    cfg.env.scheme = io::parse_scheme(kb.scheme);
    cfg.env.gamma = c.gamma;
    cfg.k = k_given ? c.k : 5;
    if (kb.t_term > 0) cfg.t_term = kb.t_term;
    if (kb.episodes > 0) cfg.episodes = kb.episodes;
    const auto results = experiments::for_seeds(seeds, c.jobs, [&](std::uint64_t s) {
      return experiments::item_collector_keyboard(cfg, s);
    });
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto& r = results[i];
      io::write_file((dir / ("curve_seed" + std::to_string(seeds[i]) + ".csv")).string(),
                     io::curve_csv(r.curve, seeds[i]));
      zs_mean += inv * r.zero_shot;
      lk_mean += inv * r.keyboard;
      single_mean += inv * r.best_single;
      per_seed.push_back({{"seed", seeds[i]},
                          {"zero_shot_return", r.zero_shot},
                          {"best_single_return", r.best_single},
                          {"best_single_option", r.best_single_label},
                          {"lk_return", r.keyboard},
                          {"optimal_return", r.optimal},
                          {"improvement_percent", r.improvement}});
    }
  } else {
    throw FormatError("keyboard supports --domain four-rooms or item-collector");
  }

  json summary = {{"domain", c.domain},
                  {"seeds", seeds.size()},
                  {"zero_shot_return", zs_mean},
                  {"lk_return", lk_mean},
                  {"improvement_percent", percent_improvement(lk_mean, zs_mean)},
                  {"per_seed", per_seed},
                  {"metadata", io::metadata(c.seed)}};
  if (c.domain == "item-collector") summary["best_single_return"] = single_mean;
  io::write_file((dir / "keyboard_summary.json").string(), io::dump(summary));
  std::cout << "keyboard: zero-shot " << io::format_double(zs_mean) << ", LK " << io::format_double(lk_mean)
            << " (" << io::format_double(percent_improvement(lk_mean, zs_mean)) << "%)\n";
  return kOk;
}

// ---------------------------------------------------------------- allo

struct AlloOpts {
  std::string mode = "full";
  long iters = 200000;
  long transitions = 100000;
  AlloHyper hyper{.trace_stride = 100};
};

int cmd_allo(const Common& c, const AlloOpts& a) {
  require_domain(c);
  if (a.mode != "full" && a.mode != "samples") throw FormatError("--mode must be full or samples");
  const GridWorld g = grid_domain(c);
  const auto spec = experiments::grid_spectrum(g);
  if (c.k > g.n_states()) throw DomainError("--k exceeds the number of states");
  const Matrix reference = spec.basis.eigenvectors.leftCols(c.k);
  const auto seeds = c.seed_list();
  const auto reports = experiments::for_seeds(seeds, c.jobs, [&](std::uint64_t s) {
    if (a.mode == "full") return allo_optimize(spec.laplacian, c.k, a.hyper, a.iters, s, reference).second;
    const auto data = random_walk(g.mdp, static_cast<int>(s % static_cast<std::uint64_t>(g.n_states())),
                                  a.transitions, s);
    return allo_from_samples(data, g.n_states(), c.k, a.hyper, a.iters, s, reference).second;
  });
  const auto dir = out_dir(c);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    io::write_file((dir / ("allo_seed" + std::to_string(seeds[i]) + ".json")).string(),
                   io::dump(io::allo_json(reports[i], seeds[i])));
    const auto& cos = reports[i].cosine_alignment;
    std::cout << "allo seed " << seeds[i] << ": " << reports[i].iterations << " iterations, min |cos| "
              << io::format_double(*std::min_element(cos.begin(), cos.end())) << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laplacian Keyboard tabular laboratory"};
  app.require_subcommand(1);

  Common c;
  BoundOpts bound;
  ZeroShotOpts zs;
  KeyboardOpts kb;
  AlloOpts al;

  auto* spectrum = app.add_subcommand("spectrum", "eigenvector fields and eigenvalues");
  add_common(spectrum, c);

  auto* bnd = app.add_subcommand("bound", "value-error bound sweep over spectral-gap cutoffs");
  add_common(bnd, c);
  bnd->add_option("--k-min", bound.k_min, "smallest cutoff")->check(CLI::PositiveNumber);
  bnd->add_option("--k-max", bound.k_max, "largest cutoff (default: all states)");
  bnd->add_option("--reward", bound.reward, "library | single_goal | two_goals | radial | noise | in-span");
  bnd->add_option("--span-k", bound.span_k, "span width for --reward in-span");

  auto* zero = app.add_subcommand("zeroshot", "zero-shot policy returns");
  add_common(zero, c);
  zero->add_option("--mode", zs.mode, "exact | sampled");
  zero->add_option("--samples", zs.samples, "reward samples for --mode sampled")->check(CLI::PositiveNumber);
  zero->add_option("--episodes", zs.episodes, "evaluation episodes")->check(CLI::PositiveNumber);
  zero->add_option("--goal-row", zs.goal_row, "goal cell row");
  zero->add_option("--goal-col", zs.goal_col, "goal cell column");

  auto* key = app.add_subcommand("keyboard", "train the meta-policy over the option library");
  add_common(key, c);
  key->add_option("--t-term", kb.t_term, "option horizon")->check(CLI::PositiveNumber);
  key->add_option("--episodes", kb.episodes, "training episodes")->check(CLI::PositiveNumber);
  key->add_option("--side", kb.side, "Item-Collector grid side")->check(CLI::PositiveNumber);
  key->add_option("--items-per-type", kb.items_per_type, "Item-Collector items per type")->check(CLI::PositiveNumber);
  key->add_option("--horizon", kb.horizon, "Item-Collector episode horizon")->check(CLI::PositiveNumber);
  key->add_option("--reward-scheme,--scheme", kb.scheme, "Item-Collector reward scheme: ordered | any");

  auto* allo = app.add_subcommand("allo", "recover eigenvectors with the augmented Lagrangian objective");
  add_common(allo, c);
  allo->add_option("--mode", al.mode, "full | samples");
  allo->add_option("--iters", al.iters, "maximum iterations")->check(CLI::PositiveNumber);
  allo->add_option("--transitions", al.transitions, "random-walk transitions for --mode samples");
  allo->add_option("--barrier", al.hyper.barrier, "barrier coefficient b");
  allo->add_option("--step-primal", al.hyper.step_primal, "primal step size");
  allo->add_option("--step-dual", al.hyper.step_dual, "dual step size");
  allo->add_option("--gamma-allo", al.hyper.gamma_allo, "positive-pair offset discount");
  allo->add_option("--batch-size", al.hyper.batch_size, "0 = all pairs per step");
  allo->add_option("--trace-stride", al.hyper.trace_stride, "record every n-th loss value");

  try {
    app.parse(argc, argv);
    CLI::App* active = app.get_subcommands().front();
    apply_config(active, c.config);
    const bool k_given = active->get_option("--k")->count() > 0;
    if (active == spectrum) return cmd_spectrum(c);
    if (active == bnd) return cmd_bound(c, bound);
    if (active == zero) return cmd_zeroshot(c, zs);
    if (active == key) return cmd_keyboard(c, kb, k_given);
    return cmd_allo(c, al);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "lapkey: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "lapkey: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DimensionError& e) {
    std::cerr << "lapkey: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvariantViolation& e) {
    std::cerr << "lapkey: invariant violation: " << e.what() << "\n";
    return kInvariant;
  } catch (const NumericalError& e) {
    std::cerr << "lapkey: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ReversibilityError& e) {
    std::cerr << "lapkey: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const json::exception& e) {
    std::cerr << "lapkey: config error: " << e.what() << "\n";
    return kConfig;
  }
}
