#pragma once

// Discrete-action two-sided games with exact, seeded dynamics. The agent
// and the (possibly joint) opponent act simultaneously; every game
// declares its reward structure and honors it on every step.

#include <algorithm>
#include <array>
#include <cstdio>
#include <memory>
#include <ostream>

#include "mbom/common.hpp"

namespace mbom::envs {

enum class RewardStructure { zero_sum, cooperative, general_sum };

struct GameSpec {
  std::string name;
  int state_dim = 0;
  int agent_actions = 0;
  int opponent_actions = 0;
  int episode_len = 0;
  RewardStructure reward_structure = RewardStructure::zero_sum;
};

struct GameState {
  Vec observation;
  int t = 0;
  bool done = false;
};

struct StepResult {
  GameState next_state;
  double r = 0.0;
  double r_o = 0.0;
  bool done = false;
};

// One experience tuple feeding model and policy training.
struct TransitionRecord {
  Vec s;
  int a = 0;
  int a_o = 0;
  Vec s_next;
  double r = 0.0;
  double r_o = 0.0;
};

class Env {
 public:
  virtual ~Env() = default;

  const GameSpec& spec() const { return spec_; }
  const GameState& state() const { return state_; }

  GameState reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    state_.t = 0;
    state_.done = false;
    do_reset();
    return state_;
  }

  StepResult step(int a, int a_o) {
    if (state_.done) throw UsageError(spec_.name + ": step after episode end");
    if (a < 0 || a >= spec_.agent_actions) throw UsageError(spec_.name + ": agent action out of range");
    if (a_o < 0 || a_o >= spec_.opponent_actions)
      throw UsageError(spec_.name + ": opponent action out of range");
    Inner in = do_step(a, a_o);
    state_.observation = std::move(in.obs);
    state_.t += 1;
    state_.done = in.terminal || state_.t >= spec_.episode_len;
    return StepResult{state_, in.r, in.r_o, state_.done};
  }

 protected:
  struct Inner {
    Vec obs;
    double r = 0.0;
    double r_o = 0.0;
    bool terminal = false;
  };

  virtual void do_reset() = 0;
  virtual Inner do_step(int a, int a_o) = 0;

  GameSpec spec_;
  GameState state_;
  Rng rng_{0};
};

// --- Triangle Game -----------------------------------------------------

// Landmarks sit at the vertices of an equilateral triangle with side 0.6
// centered in a square field of halfwidth 0.5. A player touches a
// landmark when strictly closer than 0.15.
namespace triangle {
inline constexpr double kFieldHalfwidth = 0.5;
inline constexpr double kSide = 0.6;
inline constexpr double kTouchRadius = 0.15;
inline constexpr double kMoveStep = 0.05;
inline constexpr int kDefaultEpisodeLen = 25;

inline const std::array<std::array<double, 2>, 3>& landmarks() {
  static const double r = kSide / std::sqrt(3.0);  // circumradius
  static const std::array<std::array<double, 2>, 3> pts = {{
      {0.0, r},
      {-kSide / 2.0, -r / 2.0},
      {kSide / 2.0, -r / 2.0},
  }};
  return pts;
}
}  // namespace triangle

// Touch state: 0 = F (none), 1..3 = landmark index. Touch regions are
// geometrically disjoint (landmark spacing 0.6 > 2 * 0.15); the lowest
// index wins if that ever changes.
inline int triangle_touch(double x, double y) {
  const auto& lm = triangle::landmarks();
  for (int i = 0; i < 3; ++i) {
    const double dx = x - lm[i][0];
    const double dy = y - lm[i][1];
    if (std::sqrt(dx * dx + dy * dy) < triangle::kTouchRadius) return i + 1;
  }
  return 0;
}

class TriangleGame final : public Env {
 public:
  explicit TriangleGame(int episode_len = triangle::kDefaultEpisodeLen) {
    spec_.name = "triangle";
    spec_.state_dim = 12;
    spec_.agent_actions = 5;
    spec_.opponent_actions = 5;
    spec_.episode_len = episode_len;
    spec_.reward_structure = RewardStructure::zero_sum;
  }

  // Opponent payoff (player 1), rows = opponent touch, cols = agent touch;
  // index 0 is F. The agent receives the negation.
  static double opponent_payoff(int opp_touch, int agent_touch) {
    static const double table[4][4] = {
        {0.0, -0.5, -0.5, -0.5},
        {0.5, 1.0, 1.0, -1.0},
        {0.5, -1.0, 1.0, 1.0},
        {0.5, 1.0, -1.0, 1.0},
    };
    return table[opp_touch][agent_touch];
  }

 protected:
  void do_reset() override {
    for (double& c : agent_pos_) c = rng_.uniform(-triangle::kFieldHalfwidth, triangle::kFieldHalfwidth);
    for (double& c : opp_pos_) c = rng_.uniform(-triangle::kFieldHalfwidth, triangle::kFieldHalfwidth);
    state_.observation = encode();
  }

  Inner do_step(int a, int a_o) override {
    move(agent_pos_, a);
    move(opp_pos_, a_o);
    const int at = triangle_touch(agent_pos_[0], agent_pos_[1]);
    const int ot = triangle_touch(opp_pos_[0], opp_pos_[1]);
    const double payoff = opponent_payoff(ot, at);
    return Inner{encode(), -payoff, payoff, false};
  }

 private:
  static void move(std::array<double, 2>& pos, int action) {
    switch (action) {
      case 1: pos[1] += triangle::kMoveStep; break;
      case 2: pos[1] -= triangle::kMoveStep; break;
      case 3: pos[0] -= triangle::kMoveStep; break;
      case 4: pos[0] += triangle::kMoveStep; break;
      default: break;  // stay
    }
    for (double& c : pos)
      c = std::clamp(c, -triangle::kFieldHalfwidth, triangle::kFieldHalfwidth);
  }

  Vec encode() const {
    Vec obs(12, 0.0);
    obs[0] = agent_pos_[0];
    obs[1] = agent_pos_[1];
    obs[2] = opp_pos_[0];
    obs[3] = opp_pos_[1];
    obs[4 + triangle_touch(agent_pos_[0], agent_pos_[1])] = 1.0;
    obs[8 + triangle_touch(opp_pos_[0], opp_pos_[1])] = 1.0;
    return obs;
  }

  std::array<double, 2> agent_pos_{};
  std::array<double, 2> opp_pos_{};
};

// --- Coin Game ----------------------------------------------------------

// 3x3 grid, two players (blue = agent, red = opponent), one coin of
// either color on the board at all times. Collecting any coin pays the
// collector +1; collecting the other player's color charges that player
// -2. Both players collect when they reach the coin on the same step.
// With joint_reward the game reports the summed reward to both sides
// (the cooperative formulation); otherwise individual rewards.
class CoinGame final : public Env {
 public:
  static constexpr int kGrid = 3;
  static constexpr int kDefaultEpisodeLen = 150;

  struct Stats {
    int coins_collected = 0;
    int mismatched_collections = 0;
  };

  explicit CoinGame(int episode_len = kDefaultEpisodeLen, bool joint_reward = false)
      : joint_reward_(joint_reward) {
    spec_.name = joint_reward ? "coingame_joint" : "coingame";
    spec_.state_dim = 29;
    spec_.agent_actions = 4;
    spec_.opponent_actions = 4;
    spec_.episode_len = episode_len;
    spec_.reward_structure =
        joint_reward ? RewardStructure::cooperative : RewardStructure::general_sum;
  }

  const Stats& stats() const { return stats_; }

 protected:
  void do_reset() override {
    stats_ = Stats{};
    blue_ = rng_.below(kGrid * kGrid);
    do {
      red_ = rng_.below(kGrid * kGrid);
    } while (red_ == blue_);
    spawn_coin();
    state_.observation = encode();
  }

  Inner do_step(int a, int a_o) override {
    blue_ = move(blue_, a);
    red_ = move(red_, a_o);
    double r_blue = 0.0, r_red = 0.0;
    const bool blue_on = blue_ == coin_pos_;
    const bool red_on = red_ == coin_pos_;
    if (blue_on || red_on) {
      // Simultaneous arrival: both players collect. The mismatched pickup
      // then cancels the matched one, so a shared pickup nets zero.
      for (int collector : {0, 1}) {  // 0 = red player, 1 = blue player
        if (collector == 1 ? !blue_on : !red_on) continue;
        (collector == 1 ? r_blue : r_red) += 1.0;
        stats_.coins_collected += 1;
        if (collector != coin_color_) {
          (collector == 1 ? r_red : r_blue) -= 2.0;
          stats_.mismatched_collections += 1;
        }
      }
      spawn_coin();
    }
    Inner in;
    in.obs = encode();
    if (joint_reward_) {
      in.r = in.r_o = r_blue + r_red;
    } else {
      in.r = r_blue;
      in.r_o = r_red;
    }
    return in;
  }

 private:
  static int move(int cell, int action) {
    int x = cell % kGrid, y = cell / kGrid;
    switch (action) {
      case 0: y = std::min(y + 1, kGrid - 1); break;
      case 1: y = std::max(y - 1, 0); break;
      case 2: x = std::max(x - 1, 0); break;
      case 3: x = std::min(x + 1, kGrid - 1); break;
      default: break;
    }
    return y * kGrid + x;
  }

  void spawn_coin() {
    do {
      coin_pos_ = rng_.below(kGrid * kGrid);
    } while (coin_pos_ == blue_ || coin_pos_ == red_);
    coin_color_ = rng_.below(2);  // 0 = red, 1 = blue
  }

  Vec encode() const {
    Vec obs(29, 0.0);
    obs[blue_] = 1.0;
    obs[9 + red_] = 1.0;
    obs[18 + coin_pos_] = 1.0;
    obs[27 + coin_color_] = 1.0;
    return obs;
  }

  bool joint_reward_;
  int blue_ = 0, red_ = 0, coin_pos_ = 0, coin_color_ = 0;
  Stats stats_;
};

// --- Grid Pursuit --------------------------------------------------------

// 7x7 grid; one prey (the agent) against three predators acting as a
// joint opponent with a 5^3 product action set. The prey loses one point
// per step in which any predator is within Manhattan distance 1.
class GridPursuit final : public Env {
 public:
  static constexpr int kGrid = 7;
  static constexpr int kPredators = 3;
  static constexpr int kDefaultEpisodeLen = 200;

  explicit GridPursuit(int episode_len = kDefaultEpisodeLen) {
    spec_.name = "pursuit";
    spec_.state_dim = 2 + 2 * kPredators;
    spec_.agent_actions = 5;
    spec_.opponent_actions = 125;
    spec_.episode_len = episode_len;
    spec_.reward_structure = RewardStructure::zero_sum;
  }

  int touch_count() const { return touches_; }

 protected:
  void do_reset() override {
    touches_ = 0;
    prey_ = {rng_.below(kGrid), rng_.below(kGrid)};
    for (auto& p : predators_) {
      do {
        p = {rng_.below(kGrid), rng_.below(kGrid)};
      } while (manhattan(p, prey_) <= 1);
    }
    state_.observation = encode();
  }

  Inner do_step(int a, int a_o) override {
    move(prey_, a);
    for (int i = 0; i < kPredators; ++i) {
      move(predators_[i], a_o % 5);
      a_o /= 5;
    }
    bool touched = false;
    for (const auto& p : predators_)
      if (manhattan(p, prey_) <= 1) touched = true;
    if (touched) touches_ += 1;
    const double r = touched ? -1.0 : 0.0;
    return Inner{encode(), r, -r, false};
  }

 private:
  using Cell = std::array<int, 2>;

  static int manhattan(const Cell& a, const Cell& b) {
    return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
  }

  static void move(Cell& c, int action) {
    switch (action) {
      case 1: c[1] = std::min(c[1] + 1, kGrid - 1); break;
      case 2: c[1] = std::max(c[1] - 1, 0); break;
      case 3: c[0] = std::max(c[0] - 1, 0); break;
      case 4: c[0] = std::min(c[0] + 1, kGrid - 1); break;
      default: break;
    }
  }

  Vec encode() const {
    Vec obs;
    obs.reserve(spec_.state_dim);
    const double scale = 1.0 / (kGrid - 1);
    obs.push_back(prey_[0] * scale);
    obs.push_back(prey_[1] * scale);
    for (const auto& p : predators_) {
      obs.push_back(p[0] * scale);
      obs.push_back(p[1] * scale);
    }
    return obs;
  }

  Cell prey_{};
  std::array<Cell, kPredators> predators_{};
  int touches_ = 0;
};

// --- Repeated matrix game -------------------------------------------------

// Stateless repeated zero-sum matrix game; the agent's per-step reward is
// payoff[a][a_o]. Exact dynamics are trivially available to oracles.
class MatrixGame final : public Env {
 public:
  MatrixGame(std::vector<Vec> payoff, int horizon) : payoff_(std::move(payoff)) {
    if (payoff_.empty() || payoff_[0].empty()) throw ConfigError("matrix game: empty payoff");
    for (const Vec& row : payoff_) {
      if (row.size() != payoff_[0].size()) throw ConfigError("matrix game: ragged payoff");
      if (!all_finite(row)) throw ConfigError("matrix game: non-finite payoff");
    }
    spec_.name = "matrix";
    spec_.state_dim = 1;
    spec_.agent_actions = static_cast<int>(payoff_.size());
    spec_.opponent_actions = static_cast<int>(payoff_[0].size());
    spec_.episode_len = horizon;
    spec_.reward_structure = RewardStructure::zero_sum;
  }

  const std::vector<Vec>& payoff() const { return payoff_; }

 protected:
  void do_reset() override { state_.observation = Vec{1.0}; }

  Inner do_step(int a, int a_o) override {
    const double r = payoff_[a][a_o];
    return Inner{Vec{1.0}, r, -r, false};
  }

 private:
  std::vector<Vec> payoff_;
};

inline std::unique_ptr<MatrixGame> tabular_game(std::vector<Vec> payoff, int horizon) {
  return std::make_unique<MatrixGame>(std::move(payoff), horizon);
}

// Config-facing factory; episode_len 0 keeps the game's default.
inline std::unique_ptr<Env> make_env(const std::string& name, int episode_len = 0) {
  if (name == "triangle")
    return std::make_unique<TriangleGame>(episode_len > 0 ? episode_len : triangle::kDefaultEpisodeLen);
  if (name == "coingame")
    return std::make_unique<CoinGame>(episode_len > 0 ? episode_len : CoinGame::kDefaultEpisodeLen, false);
  if (name == "coingame_joint")
    return std::make_unique<CoinGame>(episode_len > 0 ? episode_len : CoinGame::kDefaultEpisodeLen, true);
  if (name == "pursuit")
    return std::make_unique<GridPursuit>(episode_len > 0 ? episode_len : GridPursuit::kDefaultEpisodeLen);
  throw ConfigError("unknown game: " + name);
}

// Trajectory dump, one row per step: episode,t,s...,a,a_o,r,r_o.
inline void dump_trajectories_csv(std::ostream& os,
                                  const std::vector<std::vector<TransitionRecord>>& episodes) {
  if (episodes.empty() || episodes[0].empty()) throw UsageError("trajectory dump: no data");
  const std::size_t dim = episodes[0][0].s.size();
  os << "episode,t";
  for (std::size_t i = 0; i < dim; ++i) os << ",s" << i;
  os << ",a,a_o,r,r_o\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (std::size_t t = 0; t < episodes[e].size(); ++t) {
      const TransitionRecord& tr = episodes[e][t];
      os << e << ',' << t;
      for (double v : tr.s) {
        os << ',';
        num(v);
      }
      os << ',' << tr.a << ',' << tr.a_o << ',';
      num(tr.r);
      os << ',';
      num(tr.r_o);
      os << '\n';
    }
  }
}

}  // namespace mbom::envs
