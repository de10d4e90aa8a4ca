#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lapkey/error.hpp"
#include "lapkey/mdp.hpp"
#include "lapkey/planning.hpp"
#include "lapkey/spectral.hpp"

namespace lapkey {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum GridAction : int { kNorth = 0, kSouth = 1, kEast = 2, kWest = 3 };
inline constexpr std::array<Cell, 4> kMoves{{{-1, 0}, {1, 0}, {0, 1}, {0, -1}}};

struct GridGoal {
  Cell cell;
  double reward = 1.0;
};

struct GridSpec {
  int width = 0;
  int height = 0;
  std::vector<Cell> walls;
  bool toroidal = false;
  std::vector<GridGoal> goals;
  double slip = 0.0;  // probability the move is replaced by a uniformly random direction
  double gamma = 0.95;
};

/// Reward-free grid dynamics plus the cell <-> state maps. Goals describe a task
/// on top of it (see `task()`), they do not alter the dynamics.
struct GridWorld {
  GridSpec spec;
  TabularMdp mdp;
  std::vector<Cell> cells;  // state -> cell
  std::vector<int> index;   // row * width + col -> state, -1 for walls

  int n_states() const { return mdp.n_states(); }

  int state_of(Cell c) const {
    if (c.row < 0 || c.row >= spec.height || c.col < 0 || c.col >= spec.width) return -1;
    return index[static_cast<std::size_t>(c.row * spec.width + c.col)];
  }

  int state_at(Cell c) const {
    const int s = state_of(c);
    if (s < 0)
      throw DomainError("cell (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                        ") is not an open cell");
    return s;
  }

  std::vector<int> goal_states() const {
    std::vector<int> out;
    for (const auto& g : spec.goals) out.push_back(state_at(g.cell));
    return out;
  }

  RewardTable goal_reward() const {
    Vector r = Vector::Zero(n_states());
    for (const auto& g : spec.goals) r(state_at(g.cell)) += g.reward;
    return RewardTable(std::move(r));
  }

  /// Dynamics with goal cells terminal.
  TabularMdp task() const { return mdp.with_terminals(goal_states()); }

  std::string ascii() const {
    std::string out;
    for (int r = 0; r < spec.height; ++r) {
      for (int c = 0; c < spec.width; ++c) {
        const int s = state_of({r, c});
        char ch = s < 0 ? '#' : '.';
        for (const auto& g : spec.goals)
          if (g.cell == Cell{r, c}) ch = 'G';
        out.push_back(ch);
      }
      out.push_back('\n');
    }
    return out;
  }
};

inline GridWorld build_grid(const GridSpec& spec) {
  if (spec.width < 1 || spec.height < 1) throw DomainError("grid dimensions must be positive");
  if (!(spec.slip >= 0.0 && spec.slip <= 1.0)) throw DomainError("slip must lie in [0, 1]");
  GridWorld g{spec, TabularMdp(1, 1, {{{0, 1.0}}}, {false}, 0.0), {}, {}};
  g.index.assign(static_cast<std::size_t>(spec.width * spec.height), 0);
  for (const auto& w : spec.walls) {
    if (w.row < 0 || w.row >= spec.height || w.col < 0 || w.col >= spec.width)
      throw DomainError("wall outside the grid");
    g.index[static_cast<std::size_t>(w.row * spec.width + w.col)] = -1;
  }
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c) {
      auto& slot = g.index[static_cast<std::size_t>(r * spec.width + c)];
      if (slot < 0) continue;
      slot = static_cast<int>(g.cells.size());
      g.cells.push_back({r, c});
    }
  if (g.cells.empty()) throw DomainError("grid has no open cells");
  for (const auto& goal : spec.goals)
    if (g.state_of(goal.cell) < 0) throw DomainError("goal placed on a wall or outside the grid");

  auto target = [&](int s, int dir) {
    Cell c = g.cells[static_cast<std::size_t>(s)];
    Cell n{c.row + kMoves[static_cast<std::size_t>(dir)].row,
           c.col + kMoves[static_cast<std::size_t>(dir)].col};
    if (spec.toroidal) {
      n.row = (n.row + spec.height) % spec.height;
      n.col = (n.col + spec.width) % spec.width;
    }
    const int t = g.state_of(n);
    return t < 0 ? s : t;  // bump into a wall: stay put
  };

  const int n = static_cast<int>(g.cells.size());
  std::vector<std::vector<Successor>> rows;
  rows.reserve(static_cast<std::size_t>(n) * 4);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 4; ++a) {
      std::vector<Successor> row;
      for (int d = 0; d < 4; ++d) {
        const double p = (d == a ? 1.0 - spec.slip : 0.0) + spec.slip / 4.0;
        if (p > 0.0) row.push_back({target(s, d), p});
      }
      rows.push_back(std::move(row));
    }
  g.mdp = TabularMdp(n, 4, std::move(rows), std::vector<bool>(static_cast<std::size_t>(n), false),
                     spec.gamma);
  return g;
}

inline GridSpec grid_spec_from_ascii(const std::vector<std::string>& lines, double gamma = 0.95) {
  GridSpec spec;
  spec.height = static_cast<int>(lines.size());
  spec.width = 0;
  for (const auto& l : lines) spec.width = std::max(spec.width, static_cast<int>(l.size()));
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c) {
      const auto& l = lines[static_cast<std::size_t>(r)];
      const char ch = c < static_cast<int>(l.size()) ? l[static_cast<std::size_t>(c)] : '#';
      if (ch == '#' || ch == 'w') spec.walls.push_back({r, c});
      if (ch == 'G') spec.goals.push_back({{r, c}, 1.0});
    }
  spec.gamma = gamma;
  return spec;
}

inline const std::vector<std::string>& four_rooms_layout() {
  static const std::vector<std::string> layout{
      "#############",
      "#     #     #",
      "#     #     #",
      "#           #",
      "#     #     #",
      "#     #     #",
      "## ####     #",
      "#     ### ###",
      "#     #     #",
      "#     #     #",
      "#           #",
      "#     #     #",
      "#############",
  };
  return layout;
}

/// Goal used for the Four-Rooms goal task (bottom-right room).
inline constexpr Cell kFourRoomsGoal{9, 9};

/// Classic four-rooms layout: 104 open cells, 4 doorways, deterministic moves.
inline GridWorld four_rooms(double gamma = 0.95) {
  return build_grid(grid_spec_from_ascii(four_rooms_layout(), gamma));
}

/// Four-Rooms with a single terminal goal of reward 1.
inline GridWorld four_rooms_goal_task(Cell goal = kFourRoomsGoal, double gamma = 0.95) {
  auto spec = grid_spec_from_ascii(four_rooms_layout(), gamma);
  spec.goals = {{goal, 1.0}};
  return build_grid(spec);
}

/// States of the top-left room, the start region for the stitching experiment.
inline std::vector<int> four_rooms_start_region(const GridWorld& g) {
  std::vector<int> out;
  for (int r = 1; r <= 5; ++r)
    for (int c = 1; c <= 5; ++c) out.push_back(g.state_at({r, c}));
  return out;
}

struct RewardSpec {
  std::string id;
  RewardTable reward;
  std::vector<int> terminal_states;
  double graph_norm = 0.0;
};

/// Four reward families on Four-Rooms, sorted by ascending graph norm under
/// the uniform-random chain: single goal, two goals, smooth radial bump, i.i.d. noise.
inline std::vector<RewardSpec> reward_library(const GridWorld& g, std::uint64_t noise_seed = 7) {
  const int n = g.n_states();
  std::vector<RewardSpec> out;

  const int goal = g.state_at(kFourRoomsGoal);
  Vector single = Vector::Zero(n);
  single(goal) = 1.0;
  out.push_back({"single_goal", RewardTable(single), {goal}, 0.0});

  const int second = g.state_at({3, 3});
  Vector two = single;
  two(second) = 1.0;
  out.push_back({"two_goals", RewardTable(two), {goal, second}, 0.0});

  Vector radial(n);
  const double sigma = 4.0;
  for (int s = 0; s < n; ++s) {
    const double dr = g.cells[static_cast<std::size_t>(s)].row - 6.0;
    const double dc = g.cells[static_cast<std::size_t>(s)].col - 6.0;
    radial(s) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
  }
  out.push_back({"radial", RewardTable(radial), {}, 0.0});

  Rng rng(noise_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector noise(n);
  for (int s = 0; s < n; ++s) noise(s) = unif(rng);
  out.push_back({"noise", RewardTable(noise), {}, 0.0});

  const auto chain = induced_transition_matrix(g.mdp, PolicyTable::uniform(n, g.mdp.n_actions()));
  for (auto& spec : out) spec.graph_norm = graph_norm(chain, spec.reward.values).norm;
  std::stable_sort(out.begin(), out.end(),
                   [](const RewardSpec& a, const RewardSpec& b) { return a.graph_norm < b.graph_norm; });
  return out;
}

// ---------------------------------------------------------------------------
// Item-Collector

enum class ItemRewardScheme {
  kOrdered,  // first type pays +1; second type pays +1 only once the first type is cleared
  kAny,      // every item pays +1
};

struct ItemCollectorConfig {
  int side = 10;
  int items_per_type = 5;
  int horizon = 50;
  std::uint64_t layout_seed = 0;
  ItemRewardScheme scheme = ItemRewardScheme::kOrdered;
  double gamma = 0.95;

  static constexpr int kTypes = 2;
  int n_items() const { return kTypes * items_per_type; }
};

/// Transition reward: depends on which item (if any) the step collected.
struct ItemReward {
  int n_cells = 0;
  std::vector<int> item_types;  // per item bit
  std::uint32_t first_type_mask = 0;
  ItemRewardScheme scheme = ItemRewardScheme::kOrdered;

  double operator()(int s, int /*a*/, int next) const {
    const auto before = static_cast<std::uint32_t>(s / n_cells);
    const auto after = static_cast<std::uint32_t>(next / n_cells);
    const std::uint32_t fresh = after & ~before;
    if (fresh == 0) return 0.0;
    const int bit = std::countr_zero(fresh);
    if (scheme == ItemRewardScheme::kAny) return 1.0;
    if (item_types[static_cast<std::size_t>(bit)] == 0) return 1.0;
    return (before & first_type_mask) == first_type_mask ? 1.0 : 0.0;
  }
};

/// Toroidal grid; state = (agent cell, collected-items bitmask), index mask * n_cells + cell.
struct ItemCollector {
  ItemCollectorConfig config;
  TabularMdp mdp;
  GridWorld positions;       // reward-free torus over cells alone
  std::vector<int> item_cells;  // cell of item bit i
  std::vector<int> item_types;  // 0 for the first (preferred) type
  int start_state = 0;
  ItemReward reward;

  int n_cells() const { return config.side * config.side; }
  int cell_of(int s) const { return s % n_cells(); }
  std::uint32_t mask_of(int s) const { return static_cast<std::uint32_t>(s / n_cells()); }
  int state_of(int cell, std::uint32_t mask) const {
    return static_cast<int>(mask) * n_cells() + cell;
  }

  /// Lift per-cell features to the product state space.
  Matrix lift(const Matrix& cell_features) const {
    if (cell_features.rows() != n_cells()) throw DimensionError("expected one feature row per cell");
    Matrix out(mdp.n_states(), cell_features.cols());
    for (int s = 0; s < mdp.n_states(); ++s) out.row(s) = cell_features.row(cell_of(s));
    return out;
  }

  std::string ascii() const {
    std::string out;
    for (int r = 0; r < config.side; ++r) {
      for (int c = 0; c < config.side; ++c) {
        const int cell = r * config.side + c;
        char ch = cell == cell_of(start_state) ? 'S' : '.';
        for (std::size_t i = 0; i < item_cells.size(); ++i)
          if (item_cells[i] == cell) ch = item_types[i] == 0 ? 'A' : 'B';
        out.push_back(ch);
      }
      out.push_back('\n');
    }
    return out;
  }
};

inline ItemCollector item_collector(const ItemCollectorConfig& cfg) {
  if (cfg.side < 1) throw DomainError("side must be positive");
  if (cfg.items_per_type < 1) throw DomainError("items_per_type must be positive");
  if (cfg.horizon < 1) throw DomainError("horizon must be >= 1");
  const int n_cells = cfg.side * cfg.side;
  const int m = cfg.n_items();
  if (m >= n_cells)
    throw DomainError("items (" + std::to_string(m) + ") exceed free cells (" +
                      std::to_string(n_cells - 1) + ")");
  if (m > 20) throw DomainError("at most 20 items supported");

  GridSpec pos;
  pos.width = pos.height = cfg.side;
  pos.toroidal = true;
  pos.gamma = cfg.gamma;
  GridWorld positions = build_grid(pos);

  Rng rng(cfg.layout_seed);
  std::vector<int> perm(static_cast<std::size_t>(n_cells));
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates with an explicit draw so layouts do not depend on std::shuffle
  for (int i = n_cells - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }

  ItemCollector ic{cfg, TabularMdp(1, 1, {{{0, 1.0}}}, {false}, 0.0), std::move(positions), {}, {}, 0, {}};
  for (int i = 0; i < m; ++i) {
    ic.item_cells.push_back(perm[static_cast<std::size_t>(i)]);
    ic.item_types.push_back(i < cfg.items_per_type ? 0 : 1);
  }
  const int start_cell = perm[static_cast<std::size_t>(m)];

  const int n_masks = 1 << m;
  std::vector<int> item_at(static_cast<std::size_t>(n_cells), -1);
  for (int i = 0; i < m; ++i) item_at[static_cast<std::size_t>(ic.item_cells[static_cast<std::size_t>(i)])] = i;

  std::vector<std::vector<Successor>> rows;
  rows.reserve(static_cast<std::size_t>(n_cells) * n_masks * 4);
  for (int mask = 0; mask < n_masks; ++mask)
    for (int cell = 0; cell < n_cells; ++cell)
      for (int a = 0; a < 4; ++a) {
        const int r = cell / cfg.side;
        const int c = cell % cfg.side;
        const int nr = (r + kMoves[static_cast<std::size_t>(a)].row + cfg.side) % cfg.side;
        const int nc = (c + kMoves[static_cast<std::size_t>(a)].col + cfg.side) % cfg.side;
        const int ncell = nr * cfg.side + nc;
        int nmask = mask;
        if (const int item = item_at[static_cast<std::size_t>(ncell)]; item >= 0) nmask |= 1 << item;
        rows.push_back({{nmask * n_cells + ncell, 1.0}});
      }
  const int n = n_cells * n_masks;
  ic.mdp = TabularMdp(n, 4, std::move(rows), std::vector<bool>(static_cast<std::size_t>(n), false),
                      cfg.gamma);
  ic.start_state = start_cell;  // empty mask

  ic.reward.n_cells = n_cells;
  ic.reward.item_types = ic.item_types;
  ic.reward.scheme = cfg.scheme;
  for (int i = 0; i < m; ++i)
    if (ic.item_types[static_cast<std::size_t>(i)] == 0) ic.reward.first_type_mask |= 1u << i;
  return ic;
}

}  // namespace lapkey
