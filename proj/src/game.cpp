#include "harl/game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace harl {

namespace {

int product(const std::vector<int>& v) {
  long long p = 1;
  for (int x : v) {
    p *= x;
    if (p > (1LL << 30)) fail(ErrorCode::invalid_argument, "joint action space too large");
  }
  return static_cast<int>(p);
}

void check_counts(int n_agents, int n_states, const std::vector<int>& n_actions) {
  require(n_agents >= 1, "n_agents must be positive");
  require(n_states >= 1, "n_states must be positive");
  require(static_cast<int>(n_actions.size()) == n_agents,
          "n_actions must list one count per agent");
  for (int a : n_actions) require(a >= 1, "every agent needs at least one action");
}

}  // namespace

CooperativeMarkovGame::CooperativeMarkovGame(
    int n_agents, int n_states, std::vector<int> n_actions, double gamma,
    const std::vector<std::vector<double>>& reward,
    const std::vector<std::vector<std::vector<double>>>& transition,
    std::vector<double> initial_dist)
    : n_agents_(n_agents),
      n_states_(n_states),
      n_actions_(std::move(n_actions)),
      gamma_(gamma),
      initial_dist_(std::move(initial_dist)) {
  check_counts(n_agents_, n_states_, n_actions_);
  n_joint_ = product(n_actions_);
  require(static_cast<int>(reward.size()) == n_states_, "reward must have one row per state");
  require(static_cast<int>(transition.size()) == n_states_,
          "transition must have one block per state");
  reward_.reserve(static_cast<std::size_t>(n_states_) * n_joint_);
  row_ptr_.push_back(0);
  for (int s = 0; s < n_states_; ++s) {
    require(static_cast<int>(reward[s].size()) == n_joint_,
            "reward row length must equal the joint action count");
    require(static_cast<int>(transition[s].size()) == n_joint_,
            "transition block must have one row per joint action");
    for (int a = 0; a < n_joint_; ++a) {
      reward_.push_back(reward[s][a]);
      const auto& row = transition[s][a];
      require(static_cast<int>(row.size()) == n_states_,
              "transition row length must equal n_states");
      for (int t = 0; t < n_states_; ++t) {
        if (row[t] != 0.0) {
          col_.push_back(t);
          val_.push_back(row[t]);
        }
      }
      row_ptr_.push_back(static_cast<std::int64_t>(col_.size()));
    }
  }
  finish_construction();
}

CooperativeMarkovGame::CooperativeMarkovGame(int n_agents, int n_states,
                                             std::vector<int> n_actions, double gamma,
                                             std::vector<double> reward,
                                             const std::vector<SparseRow>& rows,
                                             std::vector<double> initial_dist)
    : n_agents_(n_agents),
      n_states_(n_states),
      n_actions_(std::move(n_actions)),
      gamma_(gamma),
      reward_(std::move(reward)),
      initial_dist_(std::move(initial_dist)) {
  check_counts(n_agents_, n_states_, n_actions_);
  n_joint_ = product(n_actions_);
  const auto n_rows = static_cast<std::size_t>(n_states_) * n_joint_;
  require(reward_.size() == n_rows, "reward table has the wrong size");
  require(rows.size() == n_rows, "transition table has the wrong number of rows");
  row_ptr_.reserve(n_rows + 1);
  row_ptr_.push_back(0);
  for (const auto& row : rows) {
    require(row.next.size() == row.prob.size(), "sparse row next/prob length mismatch");
    for (std::size_t k = 0; k < row.next.size(); ++k) {
      require(row.next[k] >= 0 && row.next[k] < n_states_, "successor state out of range");
      if (row.prob[k] == 0.0) continue;
      col_.push_back(row.next[k]);
      val_.push_back(row.prob[k]);
    }
    row_ptr_.push_back(static_cast<std::int64_t>(col_.size()));
  }
  finish_construction();
}

void CooperativeMarkovGame::finish_construction() {
  stride_.assign(n_agents_, 1);
  for (int i = n_agents_ - 2; i >= 0; --i) stride_[i] = stride_[i + 1] * n_actions_[i + 1];
  validate();
  absorbing_.assign(n_states_, 0);
  for (int s = 0; s < n_states_; ++s) {
    bool absorbing = true;
    for (int a = 0; a < n_joint_ && absorbing; ++a) {
      if (reward(s, a) != 0.0) absorbing = false;
      auto next = next_states(s, a);
      if (next.size() != 1 || next[0] != s) absorbing = false;
    }
    absorbing_[s] = absorbing ? 1 : 0;
  }
}

std::span<const int> CooperativeMarkovGame::next_states(int s, int joint) const {
  auto row = static_cast<std::size_t>(s) * n_joint_ + joint;
  return {col_.data() + row_ptr_[row], static_cast<std::size_t>(row_ptr_[row + 1] - row_ptr_[row])};
}

std::span<const double> CooperativeMarkovGame::next_probs(int s, int joint) const {
  auto row = static_cast<std::size_t>(s) * n_joint_ + joint;
  return {val_.data() + row_ptr_[row], static_cast<std::size_t>(row_ptr_[row + 1] - row_ptr_[row])};
}

double CooperativeMarkovGame::transition(int s, int joint, int next) const {
  auto cols = next_states(s, joint);
  auto probs = next_probs(s, joint);
  for (std::size_t k = 0; k < cols.size(); ++k)
    if (cols[k] == next) return probs[k];
  return 0.0;
}

int CooperativeMarkovGame::joint_index(std::span<const int> actions) const {
  require(static_cast<int>(actions.size()) == n_agents_, "joint action has wrong arity");
  int idx = 0;
  for (int i = 0; i < n_agents_; ++i) {
    require(actions[i] >= 0 && actions[i] < n_actions_[i], "action out of range");
    idx += actions[i] * stride_[i];
  }
  return idx;
}

void CooperativeMarkovGame::decode_joint(int joint, std::span<int> actions) const {
  for (int i = 0; i < n_agents_; ++i) actions[i] = agent_action(joint, i);
}

std::vector<int> CooperativeMarkovGame::decode_joint(int joint) const {
  std::vector<int> out(n_agents_);
  decode_joint(joint, out);
  return out;
}

void CooperativeMarkovGame::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::invalid_argument, m); };
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) bad("gamma must lie in [0, 1)");
  if (static_cast<int>(initial_dist_.size()) != n_states_)
    bad("initial_dist must have one entry per state");
  double mass = 0.0;
  for (double d : initial_dist_) {
    if (!(d > 0.0)) bad("initial_dist must be strictly positive");
    mass += d;
  }
  if (std::abs(mass - 1.0) > 1e-12) bad("initial_dist must sum to 1");
  for (double r : reward_)
    if (!std::isfinite(r)) bad("reward table must be finite");
  const auto n_rows = static_cast<std::size_t>(n_states_) * n_joint_;
  for (std::size_t row = 0; row < n_rows; ++row) {
    double sum = 0.0;
    for (auto k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k) {
      if (!(val_[k] >= 0.0)) bad("transition probabilities must be nonnegative");
      sum += val_[k];
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "transition row " << row << " sums to " << sum;
      bad(os.str());
    }
  }
}

CooperativeMarkovGame make_matrix_game_example2() {
  // r(0,0)=0, r(0,1)=r(1,0)=2, r(1,1)=-1; gamma = 0 so Q coincides with r.
  std::vector<std::vector<double>> reward{{0.0, 2.0, 2.0, -1.0}};
  std::vector<std::vector<std::vector<double>>> transition{
      std::vector<std::vector<double>>(4, std::vector<double>{1.0})};
  CooperativeMarkovGame game(2, 1, {2, 2}, 0.0, reward, transition, {1.0});
  game.set_episode_limit(1);
  return game;
}

CooperativeMarkovGame make_xor_team_game(int n) {
  require(n >= 2 && n % 2 == 0, "xor team game needs an even number of agents >= 2");
  require(n <= 24, "xor team game limited to 24 agents");
  const int n_joint = 1 << n;
  std::vector<double> reward(n_joint, 0.0);
  // Agent 0 is the most significant bit: (0^{n/2}, 1^{n/2}) is the low half
  // of the bits set, (1^{n/2}, 0^{n/2}) the high half.
  const int low_half = (1 << (n / 2)) - 1;
  const int high_half = low_half << (n / 2);
  reward[low_half] = 1.0;
  reward[high_half] = 1.0;
  std::vector<CooperativeMarkovGame::SparseRow> rows(n_joint, {{0}, {1.0}});
  CooperativeMarkovGame game(n, 1, std::vector<int>(n, 2), 0.0, std::move(reward), rows, {1.0});
  game.set_episode_limit(1);
  return game;
}

CooperativeMarkovGame make_constant_game(int n, int n_actions, double value) {
  std::vector<int> counts(n, n_actions);
  int n_joint = product(counts);
  std::vector<double> reward(n_joint, value);
  std::vector<CooperativeMarkovGame::SparseRow> rows(n_joint, {{0}, {1.0}});
  CooperativeMarkovGame game(n, 1, counts, 0.0, std::move(reward), rows, {1.0});
  game.set_episode_limit(1);
  return game;
}

CooperativeMarkovGame make_random_game(int n, int n_states, const std::vector<int>& n_actions,
                                       double gamma, std::uint64_t seed) {
  check_counts(n, n_states, n_actions);
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  Rng rng(seed);
  const int n_joint = product(n_actions);
  const auto n_rows = static_cast<std::size_t>(n_states) * n_joint;
  std::vector<double> reward(n_rows);
  for (auto& r : reward) r = uniform01(rng);
  std::vector<CooperativeMarkovGame::SparseRow> rows(n_rows);
  for (auto& row : rows) {
    row.next.resize(n_states);
    row.prob.resize(n_states);
    double sum = 0.0;
    for (int t = 0; t < n_states; ++t) {
      row.next[t] = t;
      // (0, 1] keeps every entry strictly positive.
      row.prob[t] = 1.0 - uniform01(rng);
      sum += row.prob[t];
    }
    for (auto& p : row.prob) p /= sum;
    // Push the rounding residue onto the largest entry.
    double resid = 1.0 - std::accumulate(row.prob.begin(), row.prob.end(), 0.0);
    *std::max_element(row.prob.begin(), row.prob.end()) += resid;
  }
  std::vector<double> d(n_states, 1.0 / n_states);
  return CooperativeMarkovGame(n, n_states, n_actions, gamma, std::move(reward), rows, std::move(d));
}

CooperativeMarkovGame make_grid_rendezvous(const GridRendezvousOptions& o) {
  require(o.side >= 2, "grid side must be at least 2");
  require(o.n_agents == 2 || o.n_agents == 3, "grid rendezvous supports 2 or 3 agents");
  require(o.horizon >= 1, "horizon must be positive");
  require(o.gamma >= 0.0 && o.gamma < 1.0, "gamma must lie in [0, 1)");
  const int cells = o.side * o.side;
  long long n_states_ll = 1;
  for (int i = 0; i < o.n_agents; ++i) n_states_ll *= cells;
  if (n_states_ll > o.max_states) {
    std::ostringstream os;
    os << "grid rendezvous would have " << n_states_ll << " states, cap is " << o.max_states;
    fail(ErrorCode::invalid_argument, os.str());
  }
  const int n_states = static_cast<int>(n_states_ll);
  const int n = o.n_agents;
  const std::vector<int> counts(n, 5);
  const int n_joint = product(counts);

  auto decode_state = [&](int s) {
    std::vector<int> pos(n);
    for (int i = n - 1; i >= 0; --i) {
      pos[i] = s % cells;
      s /= cells;
    }
    return pos;
  };
  auto encode_state = [&](const std::vector<int>& pos) {
    int s = 0;
    for (int i = 0; i < n; ++i) s = s * cells + pos[i];
    return s;
  };
  auto distance_sum = [&](const std::vector<int>& pos) {
    int total = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        total += std::abs(pos[i] / o.side - pos[j] / o.side) +
                 std::abs(pos[i] % o.side - pos[j] % o.side);
    return total;
  };
  int normalizer = 0;
  for (int s = 0; s < n_states; ++s) normalizer = std::max(normalizer, distance_sum(decode_state(s)));

  auto allowed = [&](int agent, int move) {
    if (!o.asymmetric_roles || move == 0) return true;
    if (agent == 0) return move == 3 || move == 4;
    if (agent == 2) return move == 1 || move == 2;
    return true;
  };
  auto apply_move = [&](int agent, int cell, int move) {
    if (!allowed(agent, move)) return cell;
    int row = cell / o.side, col = cell % o.side;
    switch (move) {
      case 1: row = std::max(0, row - 1); break;
      case 2: row = std::min(o.side - 1, row + 1); break;
      case 3: col = std::min(o.side - 1, col + 1); break;
      case 4: col = std::max(0, col - 1); break;
      default: break;
    }
    return row * o.side + col;
  };

  std::vector<double> reward(static_cast<std::size_t>(n_states) * n_joint);
  std::vector<CooperativeMarkovGame::SparseRow> rows(reward.size());
  std::vector<int> moves(n);
  for (int s = 0; s < n_states; ++s) {
    auto pos = decode_state(s);
    int dist = distance_sum(pos);
    for (int a = 0; a < n_joint; ++a) {
      auto row = static_cast<std::size_t>(s) * n_joint + a;
      if (dist == 0) {
        reward[row] = 0.0;
        rows[row] = {{s}, {1.0}};
        continue;
      }
      reward[row] = -static_cast<double>(dist) / normalizer;
      int rem = a;
      for (int i = n - 1; i >= 0; --i) {
        moves[i] = rem % 5;
        rem /= 5;
      }
      std::vector<int> next(n);
      for (int i = 0; i < n; ++i) next[i] = apply_move(i, pos[i], moves[i]);
      rows[row] = {{encode_state(next)}, {1.0}};
    }
  }
  std::vector<double> d(n_states, 1.0 / n_states);
  CooperativeMarkovGame game(n, n_states, counts, o.gamma, std::move(reward), rows, std::move(d));
  game.set_episode_limit(o.horizon);
  return game;
}

ContinuousTwoAgentGame make_diff_game() {
  return {[](double a1, double a2) { return a1 * a2; }, 1};
}

double TargetMatchingGame::reward(int context, double a1, double a2) const {
  double miss = a1 + a2 - targets[context];
  double skew = a1 - a2;
  return -miss * miss - balance * skew * skew;
}

}  // namespace harl
