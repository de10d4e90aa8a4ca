#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "lapkey/allo.hpp"
#include "lapkey/envs.hpp"
#include "lapkey/error.hpp"
#include "lapkey/keyboard.hpp"
#include "lapkey/mdp.hpp"
#include "lapkey/planning.hpp"
#include "lapkey/spectral.hpp"
#include "lapkey/usfa.hpp"

#ifndef LAPKEY_GIT_DESCRIBE
#define LAPKEY_GIT_DESCRIBE "unknown"
#endif

namespace lapkey::io {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kArtifactVersion = "1.0.0";
inline constexpr std::string_view kGitDescribe = LAPKEY_GIT_DESCRIBE;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

/// RFC 4180 field quoting.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// CSV document with a header row and the trailing metadata comment
/// `# artifact_version,git_describe,seed`.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { row(header); }

  CsvWriter& row(const std::vector<std::string>& fields) {
    if (fields.size() != width_)
      throw DimensionError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                           std::to_string(width_));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) body_ << ',';
      body_ << csv_field(fields[i]);
    }
    body_ << "\r\n";
    return *this;
  }

  std::string str(std::uint64_t seed) const {
    return body_.str() + "# " + std::string(kArtifactVersion) + "," +
           csv_field(std::string(kGitDescribe)) + "," + std::to_string(seed) + "\r\n";
  }

 private:
  std::size_t width_;
  std::ostringstream body_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw FormatError("failed writing " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json metadata(std::uint64_t seed) {
  return {{"artifact_version", kArtifactVersion}, {"git_describe", kGitDescribe}, {"seed", seed}};
}

// ---------------------------------------------------------------- MDP

namespace detail {

inline json parse_with_line(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw FormatError(what + ": parse error at line " + std::to_string(line) + ": " + e.what());
  }
}

inline const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw FormatError("expected a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw FormatError("missing field '" + std::string(name) + "'");
  return *it;
}

template <class T>
T number(const json& j, const std::string& path) {
  if (!j.is_number()) throw FormatError("field '" + path + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw FormatError("field '" + path + "' must be an integer");
  }
  return j.get<T>();
}

}  // namespace detail

/// JSON with n_states, n_actions, transition[s][a][s'], terminal, gamma.
inline json mdp_to_json(const TabularMdp& mdp) {
  json trans = json::array();
  for (int s = 0; s < mdp.n_states(); ++s) {
    json per_action = json::array();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      std::vector<double> row(static_cast<std::size_t>(mdp.n_states()), 0.0);
      for (const auto& succ : mdp.successors(s, a)) row[static_cast<std::size_t>(succ.state)] = succ.prob;
      per_action.push_back(row);
    }
    trans.push_back(per_action);
  }
  json term = json::array();
  for (int s = 0; s < mdp.n_states(); ++s) term.push_back(mdp.is_terminal(s));
  return {{"n_states", mdp.n_states()},
          {"n_actions", mdp.n_actions()},
          {"transition", trans},
          {"terminal", term},
          {"gamma", mdp.gamma()}};
}

inline TabularMdp mdp_from_json(const json& j) {
  const int n = detail::number<int>(detail::field(j, "n_states"), "n_states");
  const int na = detail::number<int>(detail::field(j, "n_actions"), "n_actions");
  if (n < 1) throw FormatError("field 'n_states' must be >= 1");
  if (na < 1) throw FormatError("field 'n_actions' must be >= 1");
  const json& trans = detail::field(j, "transition");
  if (!trans.is_array() || static_cast<int>(trans.size()) != n)
    throw FormatError("field 'transition' must be an array of " + std::to_string(n) + " states");

  std::vector<std::vector<Successor>> rows;
  rows.reserve(static_cast<std::size_t>(n) * na);
  for (int s = 0; s < n; ++s) {
    const json& per_action = trans[static_cast<std::size_t>(s)];
    const std::string ps = "transition[" + std::to_string(s) + "]";
    if (!per_action.is_array() || static_cast<int>(per_action.size()) != na)
      throw FormatError("field '" + ps + "' must hold " + std::to_string(na) + " action rows");
    for (int a = 0; a < na; ++a) {
      const json& row = per_action[static_cast<std::size_t>(a)];
      const std::string pa = ps + "[" + std::to_string(a) + "]";
      if (!row.is_array() || static_cast<int>(row.size()) != n)
        throw FormatError("field '" + pa + "' must hold " + std::to_string(n) + " probabilities");
      std::vector<Successor> succ;
      double sum = 0.0;
      for (int t = 0; t < n; ++t) {
        const double p = detail::number<double>(row[static_cast<std::size_t>(t)], pa + "[" + std::to_string(t) + "]");
        if (!(p >= 0.0) || !std::isfinite(p))
          throw FormatError("field '" + pa + "[" + std::to_string(t) + "]' is not a probability");
        sum += p;
        if (p > 0.0) succ.push_back({t, p});
      }
      if (std::abs(sum - 1.0) > kStochasticTol)
        throw FormatError("field '" + pa + "' sums to " + format_double(sum) + ", expected 1");
      rows.push_back(std::move(succ));
    }
  }

  std::vector<bool> terminal(static_cast<std::size_t>(n), false);
  if (auto it = j.find("terminal"); it != j.end()) {
    if (!it->is_array() || static_cast<int>(it->size()) != n)
      throw FormatError("field 'terminal' must be an array of " + std::to_string(n) + " booleans");
    for (int s = 0; s < n; ++s) {
      const json& t = (*it)[static_cast<std::size_t>(s)];
      if (!t.is_boolean()) throw FormatError("field 'terminal[" + std::to_string(s) + "]' must be a boolean");
      terminal[static_cast<std::size_t>(s)] = t.get<bool>();
    }
  }
  const double gamma = detail::number<double>(detail::field(j, "gamma"), "gamma");
  try {
    return TabularMdp(n, na, std::move(rows), std::move(terminal), gamma);
  } catch (const Error& e) {
    throw FormatError(std::string("invalid MDP: ") + e.what());
  }
}

inline TabularMdp load_mdp(const std::string& text) {
  return mdp_from_json(detail::parse_with_line(text, "MDP document"));
}

// ---------------------------------------------------------------- spectral

/// `state,e1..ek`, one row per state.
inline std::string basis_csv(const SpectralBasis& basis, int k, std::uint64_t seed) {
  if (k < 1 || k > basis.width()) throw DomainError("k outside basis width");
  std::vector<std::string> header{"state"};
  for (int i = 1; i <= k; ++i) header.push_back("e" + std::to_string(i));
  CsvWriter csv(header);
  for (int s = 0; s < basis.n_states; ++s) {
    std::vector<std::string> row{std::to_string(s)};
    for (int i = 0; i < k; ++i) row.push_back(format_double(basis.eigenvectors(s, i)));
    csv.row(row);
  }
  return csv.str(seed);
}

/// Eigenvalues with the graph norm of each eigenvector (sqrt(lambda_i)).
inline json eigenvalues_json(const SpectralBasis& basis, int k, const TransitionMatrix& chain,
                             std::uint64_t seed) {
  json vals = json::array(), norms = json::array();
  for (int i = 0; i < k; ++i) {
    vals.push_back(basis.eigenvalues(i));
    norms.push_back(graph_norm(chain, basis.eigenvectors.col(i)).norm);
  }
  return {{"n_states", basis.n_states}, {"k", k}, {"eigenvalues", vals}, {"graph_norms", norms},
          {"metadata", metadata(seed)}};
}

// ---------------------------------------------------------------- planning

struct LabeledBound {
  std::string reward_id;
  BoundReport report;
};

inline std::string bound_csv(const std::vector<LabeledBound>& rows, std::uint64_t seed) {
  CsvWriter csv({"reward_id", "k", "value_error", "bound_tight", "bound_loose", "graph_norm"});
  for (const auto& r : rows)
    csv.row({r.reward_id, std::to_string(r.report.k), format_double(r.report.value_error),
             format_double(r.report.bound_tight), format_double(r.report.bound_loose),
             format_double(r.report.graph_norm)});
  return csv.str(seed);
}

// ---------------------------------------------------------------- usfa / keyboard

inline json option_json(const SuccessorFeatures& sf, int start_state) {
  if (start_state < 0 || start_state >= sf.n_states) throw DomainError("start state out of range");
  const Matrix q = sf.q();
  return {{"w", std::vector<double>(sf.conditioned_on.w.data(),
                                    sf.conditioned_on.w.data() + sf.conditioned_on.w.size())},
          {"policy", sf.actions},
          {"start_state", start_state},
          {"value_at_start", q(start_state, sf.actions[static_cast<std::size_t>(start_state)])}};
}

inline std::string curve_csv(const std::vector<CurvePoint>& curve, std::uint64_t seed) {
  CsvWriter csv({"episode", "greedy_return", "epsilon"});
  for (const auto& p : curve)
    csv.row({std::to_string(p.episode), format_double(p.greedy_return), format_double(p.epsilon)});
  return csv.str(seed);
}

inline json library_json(const OptionLibrary& lib) {
  json opts = json::array();
  for (int o = 0; o < lib.size(); ++o) {
    const auto& w = lib.options[static_cast<std::size_t>(o)].w;
    opts.push_back({{"label", lib.labels[static_cast<std::size_t>(o)]},
                    {"w", std::vector<double>(w.data(), w.data() + w.size())}});
  }
  return {{"t_term", lib.t_term}, {"options", opts}};
}

inline json agent_json(const MetaAgent& agent, const OptionLibrary& lib) {
  json q = json::array();
  for (Eigen::Index s = 0; s < agent.q.rows(); ++s) {
    std::vector<double> row(static_cast<std::size_t>(agent.q.cols()));
    for (Eigen::Index o = 0; o < agent.q.cols(); ++o) row[static_cast<std::size_t>(o)] = agent.q(s, o);
    q.push_back(row);
  }
  return {{"alpha", agent.alpha},     {"epsilon", agent.epsilon}, {"epsilon_final", agent.epsilon_final},
          {"gamma", agent.gamma},     {"rng_seed", agent.rng_seed}, {"library", library_json(lib)},
          {"q_meta", q}};
}

// ---------------------------------------------------------------- allo

inline json allo_json(const AlloReport& rep, std::uint64_t seed) {
  return {{"measure", rep.measure},
          {"iterations", rep.iterations},
          {"converged", rep.converged},
          {"orthogonality_error", rep.orthogonality_error},
          {"cosine_alignment", rep.cosine_alignment},
          {"loss_trace", rep.loss_trace},
          {"metadata", metadata(seed)}};
}

// ---------------------------------------------------------------- layouts

inline json layout_json(const GridWorld& g) {
  json walls = json::array(), goals = json::array();
  for (const auto& w : g.spec.walls) walls.push_back({w.row, w.col});
  for (const auto& goal : g.spec.goals)
    goals.push_back({{"row", goal.cell.row}, {"col", goal.cell.col}, {"reward", goal.reward}});
  std::vector<std::string> rows;
  std::istringstream ascii(g.ascii());
  for (std::string line; std::getline(ascii, line);) rows.push_back(line);
  return {{"kind", "grid"},         {"width", g.spec.width}, {"height", g.spec.height},
          {"toroidal", g.spec.toroidal}, {"slip", g.spec.slip},   {"gamma", g.spec.gamma},
          {"walls", walls},         {"goals", goals},         {"n_states", g.n_states()},
          {"ascii", rows}};
}

inline GridSpec grid_spec_from_json(const json& j) {
  if (auto it = j.find("kind"); it != j.end() && *it != "grid")
    throw FormatError("layout kind must be 'grid'");
  GridSpec spec;
  spec.width = detail::number<int>(detail::field(j, "width"), "width");
  spec.height = detail::number<int>(detail::field(j, "height"), "height");
  if (auto it = j.find("toroidal"); it != j.end()) spec.toroidal = it->get<bool>();
  if (auto it = j.find("slip"); it != j.end()) spec.slip = detail::number<double>(*it, "slip");
  if (auto it = j.find("gamma"); it != j.end()) spec.gamma = detail::number<double>(*it, "gamma");
  if (auto it = j.find("walls"); it != j.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& w = (*it)[i];
      const std::string path = "walls[" + std::to_string(i) + "]";
      if (!w.is_array() || w.size() != 2) throw FormatError("field '" + path + "' must be [row, col]");
      spec.walls.push_back({detail::number<int>(w[0], path), detail::number<int>(w[1], path)});
    }
  }
  if (auto it = j.find("goals"); it != j.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& g = (*it)[i];
      const std::string path = "goals[" + std::to_string(i) + "]";
      GridGoal goal;
      goal.cell = {detail::number<int>(detail::field(g, "row"), path + ".row"),
                   detail::number<int>(detail::field(g, "col"), path + ".col")};
      if (auto r = g.find("reward"); r != g.end()) goal.reward = detail::number<double>(*r, path + ".reward");
      spec.goals.push_back(goal);
    }
  }
  return spec;
}

inline GridWorld load_layout(const std::string& text) {
  const json j = detail::parse_with_line(text, "layout document");
  try {
    return build_grid(grid_spec_from_json(j));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("invalid layout: ") + e.what());
  }
}

inline json layout_json(const ItemCollector& ic) {
  json items = json::array();
  for (std::size_t i = 0; i < ic.item_cells.size(); ++i)
    items.push_back({{"row", ic.item_cells[i] / ic.config.side},
                     {"col", ic.item_cells[i] % ic.config.side},
                     {"type", ic.item_types[i]}});
  std::vector<std::string> rows;
  std::istringstream ascii(ic.ascii());
  for (std::string line; std::getline(ascii, line);) rows.push_back(line);
  const int start = ic.cell_of(ic.start_state);
  return {{"kind", "item_collector"},
          {"side", ic.config.side},
          {"items_per_type", ic.config.items_per_type},
          {"horizon", ic.config.horizon},
          {"layout_seed", ic.config.layout_seed},
          {"reward_scheme", ic.config.scheme == ItemRewardScheme::kOrdered ? "ordered" : "any"},
          {"gamma", ic.config.gamma},
          {"start", {{"row", start / ic.config.side}, {"col", start % ic.config.side}}},
          {"items", items},
          {"n_states", ic.mdp.n_states()},
          {"ascii", rows}};
}

inline ItemRewardScheme parse_scheme(const std::string& s) {
  if (s == "ordered") return ItemRewardScheme::kOrdered;
  if (s == "any") return ItemRewardScheme::kAny;
  throw FormatError("unknown reward scheme '" + s + "' (expected 'ordered' or 'any')");
}

inline ItemCollectorConfig item_collector_config_from_json(const json& j) {
  if (auto it = j.find("kind"); it != j.end() && *it != "item_collector")
    throw FormatError("layout kind must be 'item_collector'");
  ItemCollectorConfig cfg;
  if (auto it = j.find("side"); it != j.end()) cfg.side = detail::number<int>(*it, "side");
  if (auto it = j.find("items_per_type"); it != j.end())
    cfg.items_per_type = detail::number<int>(*it, "items_per_type");
  if (auto it = j.find("horizon"); it != j.end()) cfg.horizon = detail::number<int>(*it, "horizon");
  if (auto it = j.find("layout_seed"); it != j.end())
    cfg.layout_seed = detail::number<std::uint64_t>(*it, "layout_seed");
  if (auto it = j.find("reward_scheme"); it != j.end()) {
    if (!it->is_string()) throw FormatError("field 'reward_scheme' must be a string");
    cfg.scheme = parse_scheme(it->get<std::string>());
  }
  if (auto it = j.find("gamma"); it != j.end()) cfg.gamma = detail::number<double>(*it, "gamma");
  return cfg;
}

/// Rebuilds an Item-Collector from its exported layout and checks the item
/// placement matches the recorded one.
inline ItemCollector load_item_collector(const std::string& text) {
  const json j = detail::parse_with_line(text, "layout document");
  ItemCollector ic = item_collector(item_collector_config_from_json(j));
  if (auto it = j.find("items"); it != j.end()) {
    if (it->size() != ic.item_cells.size()) throw FormatError("field 'items' has the wrong length");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& item = (*it)[i];
      const int cell = detail::number<int>(detail::field(item, "row"), "items.row") * ic.config.side +
                       detail::number<int>(detail::field(item, "col"), "items.col");
      if (cell != ic.item_cells[i] || detail::number<int>(detail::field(item, "type"), "items.type") !=
                                          ic.item_types[i])
        throw FormatError("field 'items[" + std::to_string(i) + "]' does not match layout_seed");
    }
  }
  return ic;
}

}  // namespace lapkey::io
