#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "polex/mdp.hpp"
#include "polex/rng.hpp"

namespace polex::domains {

// ---------------------------------------------------------------------------
// Taxi
//
//   +---------+
//   |R: | : :G|
//   | : | : : |
//   | : : : : |
//   | | : | : |
//   |Y| : |B: |
//   +---------+
//
// Features: taxi_row, taxi_col, passenger_location (0..3 = R,G,Y,B,
// 4 = in taxi), destination (0..3). States where the passenger already sits
// at the destination are the terminal states.
// ---------------------------------------------------------------------------

struct TaxiConfig {
  static constexpr int kRows = 5;
  static constexpr int kCols = 5;
  static constexpr int kInTaxi = 4;
  static constexpr std::array<std::array<int, 2>, 4> kLocations{{{0, 0}, {0, 4}, {4, 0}, {4, 3}}};
  static constexpr std::array<const char*, 4> kLocationNames{"R", "G", "Y", "B"};
  static constexpr std::array<WallSegment, 6> kWalls{{{0, 1, 0, 2},
                                                      {1, 1, 1, 2},
                                                      {3, 0, 3, 1},
                                                      {4, 0, 4, 1},
                                                      {3, 2, 3, 3},
                                                      {4, 2, 4, 3}}};
  double step_reward = -1.0;
  double completion_reward = 20.0;
  double illegal_reward = -1.0;
  double discount = 0.95;
};

enum TaxiAction : ActionId {
  kTaxiNorth = 0,
  kTaxiSouth = 1,
  kTaxiEast = 2,
  kTaxiWest = 3,
  kTaxiPickup = 4,
  kTaxiDropoff = 5
};

inline constexpr StateId taxi_state_id(int row, int col, int passenger, int destination) {
  return static_cast<StateId>(((row * TaxiConfig::kCols + col) * 5 + passenger) * 4 + destination);
}

namespace detail {

inline bool wall_between(std::span<const WallSegment> walls, int r0, int c0, int r1, int c1) {
  for (const auto& w : walls) {
    if ((w.row_a == r0 && w.col_a == c0 && w.row_b == r1 && w.col_b == c1) ||
        (w.row_a == r1 && w.col_a == c1 && w.row_b == r0 && w.col_b == c0))
      return true;
  }
  return false;
}

// Applies a compass move on a rows x cols grid. Returns the unchanged cell when
// the move leaves the grid or crosses a wall.
inline std::array<int, 2> move_cell(int row, int col, ActionId dir, int rows, int cols,
                                    std::span<const WallSegment> walls) {
  int r = row, c = col;
  switch (dir) {
    case 0: --r; break;
    case 1: ++r; break;
    case 2: ++c; break;
    case 3: --c; break;
    default: break;
  }
  if (r < 0 || r >= rows || c < 0 || c >= cols) return {row, col};
  if (wall_between(walls, row, col, r, c)) return {row, col};
  return {r, c};
}

inline const std::array<const char*, 4> kCompassLabels{"Move North", "Move South", "Move East",
                                                       "Move West"};

}  // namespace detail

inline DomainModel build_taxi(const TaxiConfig& cfg = {}) {
  DomainData d;
  d.name = "taxi";
  d.discount = cfg.discount;
  d.features = {{"taxi_row", 0, 4}, {"taxi_col", 0, 4}, {"passenger_location", 0, 4},
                {"destination", 0, 3}};
  const std::array<const char*, 6> labels{"Move North", "Move South", "Move East",
                                          "Move West",  "Pickup",     "Dropoff"};
  for (ActionId a = 0; a < labels.size(); ++a) d.actions.push_back({a, labels[a]});

  const std::size_t n_a = d.actions.size();
  Layout layout;
  layout.width = TaxiConfig::kCols;
  layout.height = TaxiConfig::kRows;
  layout.walls.assign(TaxiConfig::kWalls.begin(), TaxiConfig::kWalls.end());

  for (int row = 0; row < TaxiConfig::kRows; ++row)
    for (int col = 0; col < TaxiConfig::kCols; ++col)
      for (int pass = 0; pass < 5; ++pass)
        for (int dest = 0; dest < 4; ++dest) {
          const StateId id = taxi_state_id(row, col, pass, dest);
          const bool terminal = pass == dest;
          d.states.push_back({id,
                              {double(row), double(col), double(pass), double(dest)},
                              terminal});
          std::vector<Glyph> glyphs{{"taxi", row, col}};
          if (pass == TaxiConfig::kInTaxi)
            glyphs.push_back({"passenger_in_taxi", row, col});
          else
            glyphs.push_back(
                {"passenger", TaxiConfig::kLocations[pass][0], TaxiConfig::kLocations[pass][1]});
          glyphs.push_back(
              {"destination", TaxiConfig::kLocations[dest][0], TaxiConfig::kLocations[dest][1]});
          layout.glyphs.push_back(std::move(glyphs));
        }

  d.transitions.resize(d.states.size() * n_a);
  for (const auto& st : d.states) {
    if (st.terminal) continue;
    const int row = int(st.features[0]), col = int(st.features[1]);
    const int pass = int(st.features[2]), dest = int(st.features[3]);
    for (ActionId a = 0; a < n_a; ++a) {
      auto& out = d.transitions[st.id * n_a + a];
      if (a <= kTaxiWest) {
        const auto cell = detail::move_cell(row, col, a, TaxiConfig::kRows, TaxiConfig::kCols,
                                            TaxiConfig::kWalls);
        out.push_back({taxi_state_id(cell[0], cell[1], pass, dest), 1.0, cfg.step_reward});
      } else if (a == kTaxiPickup) {
        const bool legal = pass != TaxiConfig::kInTaxi &&
                           TaxiConfig::kLocations[pass] == std::array<int, 2>{row, col};
        if (legal)
          out.push_back({taxi_state_id(row, col, TaxiConfig::kInTaxi, dest), 1.0, cfg.step_reward});
        else
          out.push_back({st.id, 1.0, cfg.illegal_reward});
      } else {
        const bool legal = pass == TaxiConfig::kInTaxi &&
                           TaxiConfig::kLocations[dest] == std::array<int, 2>{row, col};
        if (legal)
          out.push_back({taxi_state_id(row, col, dest, dest), 1.0, cfg.completion_reward});
        else
          out.push_back({st.id, 1.0, cfg.illegal_reward});
      }
      d.subgoals[{st.id, a}] = pass == TaxiConfig::kInTaxi ? "drop off the passenger"
                                                           : "pick up the passenger";
    }
  }
  d.layout = std::move(layout);
  return DomainModel(std::move(d));
}

// ---------------------------------------------------------------------------
// StackBot
//
// 4x4 open grid, goal cell (3,3), two boxes, carrying capacity 2.
// Features: robot_row, robot_col, box1_position, box2_position,
// remaining_capacity. A box position is its cell index row*4+col (0..15),
// 16 while held, 17 once delivered.
// ---------------------------------------------------------------------------

struct StackBotConfig {
  static constexpr int kSize = 4;
  static constexpr int kGoalRow = 3;
  static constexpr int kGoalCol = 3;
  static constexpr int kHeld = 16;
  static constexpr int kDelivered = 17;
  static constexpr int kCapacity = 2;
  double step_reward = -1.0;
  double pickup_reward = 20.0;
  double dropoff_reward = 350.0;
  double final_bonus = 500.0;
  // Extra per-step cost for each held box beyond the first.
  double extra_hold_penalty = 0.0;
  double discount = 0.95;
  std::string name = "stackbot";
};

// Penalty of the cautious variant. The smallest whole penalty under which no
// state with a box already in hand prefers Pickup Box is 49 at discount
// 0.95 (see the domains test); 60 leaves margin.
inline constexpr double kCautiousHoldPenalty = 60.0;

inline StackBotConfig cautious_stackbot_config() {
  StackBotConfig cfg;
  cfg.extra_hold_penalty = kCautiousHoldPenalty;
  cfg.name = "stackbot-cautious";
  return cfg;
}

enum StackBotAction : ActionId {
  kBotNorth = 0,
  kBotSouth = 1,
  kBotEast = 2,
  kBotWest = 3,
  kBotPickup = 4,
  kBotDropoff = 5
};

inline constexpr StateId stackbot_state_id(int row, int col, int box1, int box2) {
  return static_cast<StateId>(((row * StackBotConfig::kSize + col) * 18 + box1) * 18 + box2);
}

inline DomainModel build_stackbot(const StackBotConfig& cfg = {}) {
  using C = StackBotConfig;
  DomainData d;
  d.name = cfg.name;
  d.discount = cfg.discount;
  d.features = {{"robot_row", 0, 3},
                {"robot_col", 0, 3},
                {"box1_position", 0, 17},
                {"box2_position", 0, 17},
                {"remaining_capacity", 0, 2}};
  const std::array<const char*, 6> labels{"Move North", "Move South", "Move East",
                                          "Move West",  "Pickup Box", "Dropoff"};
  for (ActionId a = 0; a < labels.size(); ++a) d.actions.push_back({a, labels[a]});
  const std::size_t n_a = d.actions.size();

  Layout layout;
  layout.width = C::kSize;
  layout.height = C::kSize;

  auto held_count = [](int b1, int b2) { return int(b1 == C::kHeld) + int(b2 == C::kHeld); };

  for (int row = 0; row < C::kSize; ++row)
    for (int col = 0; col < C::kSize; ++col)
      for (int b1 = 0; b1 < 18; ++b1)
        for (int b2 = 0; b2 < 18; ++b2) {
          const StateId id = stackbot_state_id(row, col, b1, b2);
          const int capacity = C::kCapacity - held_count(b1, b2);
          const bool terminal = b1 == C::kDelivered && b2 == C::kDelivered;
          d.states.push_back({id,
                              {double(row), double(col), double(b1), double(b2), double(capacity)},
                              terminal});
          std::vector<Glyph> glyphs{{"robot", row, col}, {"goal", C::kGoalRow, C::kGoalCol}};
          for (int b : {b1, b2}) {
            if (b < C::kHeld)
              glyphs.push_back({"box", b / C::kSize, b % C::kSize});
            else if (b == C::kHeld)
              glyphs.push_back({"box_held", row, col});
          }
          layout.glyphs.push_back(std::move(glyphs));
        }

  d.transitions.resize(d.states.size() * n_a);
  for (const auto& st : d.states) {
    if (st.terminal) continue;
    const int row = int(st.features[0]), col = int(st.features[1]);
    std::array<int, 2> boxes{int(st.features[2]), int(st.features[3])};
    const int held = held_count(boxes[0], boxes[1]);
    const double carry_cost = held > 1 ? -cfg.extra_hold_penalty * (held - 1) : 0.0;
    const int cell = row * C::kSize + col;

    for (ActionId a = 0; a < n_a; ++a) {
      auto& out = d.transitions[st.id * n_a + a];
      if (a <= kBotWest) {
        const auto next = detail::move_cell(row, col, a, C::kSize, C::kSize, {});
        out.push_back({stackbot_state_id(next[0], next[1], boxes[0], boxes[1]), 1.0,
                       cfg.step_reward + carry_cost});
        continue;
      }
      auto nb = boxes;
      double reward = cfg.step_reward;
      bool changed = false;
      if (a == kBotPickup) {
        if (held < C::kCapacity) {
          for (int& b : nb)
            if (b == cell) {
              b = C::kHeld;
              reward = cfg.pickup_reward;
              changed = true;
              break;
            }
        }
      } else if (row == C::kGoalRow && col == C::kGoalCol && held > 0) {
        for (int& b : nb)
          if (b == C::kHeld) {
            b = C::kDelivered;
            reward = cfg.dropoff_reward;
            if (nb[0] == C::kDelivered && nb[1] == C::kDelivered) reward += cfg.final_bonus;
            changed = true;
            break;
          }
      }
      out.push_back({changed ? stackbot_state_id(row, col, nb[0], nb[1]) : st.id, 1.0,
                     reward + carry_cost});
    }
  }
  d.layout = std::move(layout);
  return DomainModel(std::move(d));
}

// ---------------------------------------------------------------------------
// Small fixtures.
// ---------------------------------------------------------------------------

// s0 --advance (+10)--> s1 (terminal); "stay" keeps s0 with reward 0.
inline DomainModel build_two_state_chain(double discount = 0.9) {
  DomainData d;
  d.name = "chain";
  d.discount = discount;
  d.features = {{"position", 0, 1}};
  d.actions = {{0, "advance"}, {1, "stay"}};
  d.states = {{0, {0.0}, false}, {1, {1.0}, true}};
  d.transitions = {{{1, 1.0, 10.0}}, {{0, 1.0, 0.0}}, {}, {}};
  return DomainModel(std::move(d));
}

// One non-terminal state whose only action loops back with reward 1.
inline DomainModel build_self_loop(double discount = 0.5) {
  DomainData d;
  d.name = "self-loop";
  d.discount = discount;
  d.features = {{"x", 0, 0}};
  d.actions = {{0, "wait"}};
  d.states = {{0, {0.0}, false}};
  d.transitions = {{{0, 1.0, 1.0}}};
  return DomainModel(std::move(d));
}

// From s0 a single action reaches s1 or s2 with equal probability.
inline DomainModel build_coin_flip() {
  DomainData d;
  d.name = "coin-flip";
  d.discount = 0.9;
  d.features = {{"x", 0, 2}};
  d.actions = {{0, "flip"}};
  d.states = {{0, {0.0}, false}, {1, {1.0}, true}, {2, {2.0}, true}};
  d.transitions = {{{1, 0.5, 3.0}, {2, 0.5, -3.0}}, {}, {}};
  return DomainModel(std::move(d));
}

// A row of n cells with a single "step right" action; the last cell is terminal.
inline DomainModel build_single_action_line(std::size_t n = 5) {
  DomainData d;
  d.name = "line";
  d.discount = 0.9;
  d.features = {{"cell", 0, double(n - 1)}};
  d.actions = {{0, "step right"}};
  for (StateId s = 0; s < n; ++s) {
    d.states.push_back({s, {double(s)}, s + 1 == n});
    if (s + 1 == n)
      d.transitions.push_back({});
    else
      d.transitions.push_back({{s + 1, 1.0, -1.0}});
  }
  return DomainModel(std::move(d));
}

// ---------------------------------------------------------------------------
// Synthetic treatment domain shaped like the HIV benchmark: six real-valued
// patient markers and four drug choices. Dynamics are invented: each
// (state, drug) pair leads to one of two random states, and the reward is
// the health score of the successor minus the drug cost. It exists to
// exercise the generic file format and wide-range features.
// ---------------------------------------------------------------------------

inline DomainModel build_synthetic_treatment(std::size_t n_states = 2000, std::uint64_t seed = 11) {
  DomainData d;
  d.name = "treatment";
  d.discount = 0.98;
  d.features = {{"uninfected_cd4", 0, 1e6},      {"infected_cd4", 0, 1e5},
                {"uninfected_macrophages", 0, 1e4}, {"infected_macrophages", 0, 1e3},
                {"free_virus", 0, 1e6},         {"immune_response", 0, 1e3}};
  d.actions = {{0, "No Drugs"}, {1, "Only Protease"}, {2, "Only RT"}, {3, "Both Protease and RT"}};
  Rng rng(seed);
  const std::size_t n_terminal = std::max<std::size_t>(1, n_states / 50);
  for (StateId s = 0; s < n_states; ++s) {
    FeatureVector f;
    for (const auto& spec : d.features) f.push_back(std::round(rng.uniform(spec.min, spec.max)));
    d.states.push_back({s, std::move(f), s < n_terminal});
  }
  // Health score drives rewards: healthy cells and immunity up, virus down.
  auto health = [&](const FeatureVector& f) {
    return f[0] / 1e6 + f[5] / 1e3 - f[1] / 1e5 - f[4] / 1e6;
  };
  const std::array<double, 4> drug_cost{0.0, 0.2, 0.2, 0.5};
  d.transitions.resize(n_states * d.actions.size());
  for (const auto& st : d.states) {
    if (st.terminal) continue;
    for (ActionId a = 0; a < d.actions.size(); ++a) {
      const StateId s1 = static_cast<StateId>(rng.uniform_int(n_states));
      StateId s2 = static_cast<StateId>(rng.uniform_int(n_states));
      if (s2 == s1) s2 = static_cast<StateId>((s2 + 1) % n_states);
      const double p = std::round(rng.uniform(0.5, 0.9) * 1000.0) / 1000.0;
      auto reward = [&](StateId nx) {
        return std::round((health(d.states[nx].features) - drug_cost[a]) * 1000.0) / 1000.0;
      };
      d.transitions[st.id * d.actions.size() + a] = {{s1, p, reward(s1)},
                                                     {s2, 1.0 - p, reward(s2)}};
    }
  }
  return DomainModel(std::move(d));
}

}  // namespace polex::domains
