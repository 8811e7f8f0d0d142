#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "riftlab/tabular_mdp.hpp"

namespace riftlab {

// Grid cells: 'S' start, 'G' goal, 'X' hazard, '#' wall, '.' empty.
// Actions in fixed order: 0 up, 1 right, 2 down, 3 left. States are the
// non-wall cells in row-major order.
inline constexpr int kNumGridActions = 4;
inline constexpr int kGridRowDelta[kNumGridActions] = {-1, 0, 1, 0};
inline constexpr int kGridColDelta[kNumGridActions] = {0, 1, 0, -1};

struct GridworldSpec {
  std::vector<std::string> rows;
  double step_reward = -0.01;
  double goal_reward = 1.0;
  double hazard_reward = -1.0;
  double slip_prob = 0.0;
  double discount = 0.95;
};

struct Gridworld {
  TabularMdp mdp;
  int num_rows = 0;
  int num_cols = 0;
  std::vector<int> cell_to_state;                // row * num_cols + col, -1 for walls
  std::vector<std::pair<int, int>> state_to_cell;
  std::vector<int> start_states;
  std::vector<int> goal_states;
  std::vector<int> hazard_states;

  int state_at(int row, int col) const { return cell_to_state[row * num_cols + col]; }
};

inline std::vector<std::string> parse_grid_text(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  return rows;
}

inline std::vector<std::string> load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open grid file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_grid_text(buf.str());
}

// Builds the tabular MDP for a gridworld. Movement: the intended direction is
// taken with probability 1 - slip_prob, each perpendicular direction with
// slip_prob / 2; a move into a wall or off the grid keeps the position. The
// step reward is paid on every move from a non-terminal cell; entering the
// goal or a hazard additionally pays the entry reward, after which the cell
// is absorbing with reward 0. reward(s,a) folds the entry reward in
// expectation over slips; entry_bonus carries the per-landing-state split so
// simulators can realize it per episode.
inline Gridworld build_gridworld(const GridworldSpec& spec) {
  if (spec.rows.empty()) throw std::invalid_argument("grid is empty");
  if (!(spec.slip_prob >= 0.0 && spec.slip_prob <= 1.0))
    throw std::invalid_argument("slip_prob must lie in [0, 1]");

  Gridworld g;
  g.num_rows = static_cast<int>(spec.rows.size());
  g.num_cols = static_cast<int>(spec.rows[0].size());
  for (int r = 0; r < g.num_rows; ++r) {
    if (static_cast<int>(spec.rows[r].size()) != g.num_cols)
      throw std::invalid_argument("grid row " + std::to_string(r + 1) + " has length " +
                                  std::to_string(spec.rows[r].size()) + ", expected " +
                                  std::to_string(g.num_cols));
  }

  g.cell_to_state.assign(g.num_rows * g.num_cols, -1);
  for (int r = 0; r < g.num_rows; ++r) {
    for (int c = 0; c < g.num_cols; ++c) {
      const char ch = spec.rows[r][c];
      if (ch == '#') continue;
      if (ch != 'S' && ch != 'G' && ch != 'X' && ch != '.')
        throw std::invalid_argument(std::string("unknown grid character '") + ch + "' at row " +
                                    std::to_string(r + 1) + ", column " + std::to_string(c + 1));
      const int s = static_cast<int>(g.state_to_cell.size());
      g.cell_to_state[r * g.num_cols + c] = s;
      g.state_to_cell.emplace_back(r, c);
      if (ch == 'S') g.start_states.push_back(s);
      if (ch == 'G') g.goal_states.push_back(s);
      if (ch == 'X') g.hazard_states.push_back(s);
    }
  }
  if (g.start_states.empty()) throw std::invalid_argument("grid has no start cell");
  if (g.goal_states.empty()) throw std::invalid_argument("grid has no goal cell");

  const int num_states = static_cast<int>(g.state_to_cell.size());
  TabularMdp& mdp = g.mdp;
  mdp.num_states = num_states;
  mdp.num_actions = kNumGridActions;
  mdp.discount = spec.discount;
  mdp.transition = Mat::Zero(num_states * kNumGridActions, num_states);
  mdp.reward = Mat::Zero(num_states, kNumGridActions);
  mdp.entry_bonus = Vec::Zero(num_states);

  for (int s : g.goal_states) mdp.entry_bonus(s) = spec.goal_reward;
  for (int s : g.hazard_states) mdp.entry_bonus(s) = spec.hazard_reward;

  std::vector<bool> terminal(num_states, false);
  for (int s : g.goal_states) terminal[s] = true;
  for (int s : g.hazard_states) terminal[s] = true;

  auto landing = [&](int r, int c, int dir) {
    const int nr = r + kGridRowDelta[dir];
    const int nc = c + kGridColDelta[dir];
    if (nr < 0 || nr >= g.num_rows || nc < 0 || nc >= g.num_cols) return g.state_at(r, c);
    const int target = g.cell_to_state[nr * g.num_cols + nc];
    return target < 0 ? g.state_at(r, c) : target;
  };

  for (int s = 0; s < num_states; ++s) {
    const auto [r, c] = g.state_to_cell[s];
    for (int a = 0; a < kNumGridActions; ++a) {
      const int row_index = mdp.sa_index(s, a);
      if (terminal[s]) {
        mdp.transition(row_index, s) = 1.0;
        continue;
      }
      // Perpendicular directions of a are a+1 and a+3 (mod 4).
      mdp.transition(row_index, landing(r, c, a)) += 1.0 - spec.slip_prob;
      mdp.transition(row_index, landing(r, c, (a + 1) % 4)) += spec.slip_prob / 2.0;
      mdp.transition(row_index, landing(r, c, (a + 3) % 4)) += spec.slip_prob / 2.0;
      mdp.reward(s, a) =
          spec.step_reward + mdp.transition.row(row_index).dot(mdp.entry_bonus);
    }
  }

  mdp.initial_dist = Vec::Zero(num_states);
  for (int s : g.start_states) mdp.initial_dist(s) = 1.0 / g.start_states.size();

  mdp.validate();
  return g;
}

}  // namespace riftlab
