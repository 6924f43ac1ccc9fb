#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eabm/agents.hpp"
#include "eabm/book.hpp"
#include "eabm/params.hpp"
#include "eabm/rng.hpp"

namespace eabm::rl {

struct StateKey {
  int t = 1;  // remaining-time bucket
  int i = 1;  // remaining-inventory bucket
  int s = 1;  // spread state
  int v = 1;  // best-bid-volume state
  auto operator<=>(const StateKey&) const = default;
};

// Discretisation table for one state variable. State k covers
// (breakpoints[k-2], breakpoints[k-1]]; the last state is open above.
struct QuantileTable {
  int n_states = 0;
  std::vector<int64_t> breakpoints;      // n_states - 1, strictly increasing
  std::vector<double> probabilities;     // empirical mass per state

  int lookup(int64_t value) const {
    for (size_t k = 0; k < breakpoints.size(); ++k)
      if (value <= breakpoints[k]) return static_cast<int>(k) + 1;
    return n_states;
  }
};

namespace detail {

// Nearest-rank sample quantile on sorted data.
inline int64_t nearest_rank(const std::vector<int64_t>& sorted, double p) {
  size_t n = sorted.size();
  double r = std::ceil(p * static_cast<double>(n));
  size_t idx = r < 1.0 ? 0 : static_cast<size_t>(r) - 1;
  if (idx >= n) idx = n - 1;
  return sorted[idx];
}

inline std::vector<double> state_probabilities(const std::vector<int64_t>& sorted,
                                               const std::vector<int64_t>& breakpoints) {
  std::vector<double> probs(breakpoints.size() + 1, 0.0);
  for (int64_t x : sorted) {
    size_t k = breakpoints.size();
    for (size_t j = 0; j < breakpoints.size(); ++j)
      if (x <= breakpoints[j]) {
        k = j;
        break;
      }
    probs[k] += 1.0;
  }
  for (double& p : probs) p /= static_cast<double>(sorted.size());
  return probs;
}

}  // namespace detail

// Spread state 1 is pinned to a spread of one tick; the density above it is
// split into equally spaced probability quantiles, refining the split factor
// until exactly n_s distinct quantile values exist. The largest value becomes
// the open-ended top state.
inline QuantileTable build_spread_states(std::vector<int64_t> spreads, int n_s) {
  if (n_s < 2) throw std::invalid_argument("build_spread_states: n_s < 2");
  if (spreads.empty()) throw std::invalid_argument("build_spread_states: no data");
  std::sort(spreads.begin(), spreads.end());
  size_t n = spreads.size();
  size_t at_or_below_one = 0;
  while (at_or_below_one < n && spreads[at_or_below_one] <= 1) ++at_or_below_one;
  double f1 = static_cast<double>(at_or_below_one) / static_cast<double>(n);
  if (at_or_below_one == n)
    throw std::invalid_argument("build_spread_states: degenerate data, all spreads <= 1");

  for (int factor = n_s; factor <= n_s + 2000; ++factor) {
    std::set<int64_t> uniq{1};
    for (int j = 0; j < factor; ++j) {
      double p = f1 + (1.0 - f1) * static_cast<double>(j) / static_cast<double>(factor - 1);
      int64_t q = detail::nearest_rank(spreads, p);
      if (q > 1) uniq.insert(q);
    }
    if (static_cast<int>(uniq.size()) == n_s) {
      std::vector<int64_t> breaks(uniq.begin(), uniq.end());
      breaks.pop_back();  // top state is open-ended
      QuantileTable tbl;
      tbl.n_states = n_s;
      tbl.breakpoints = breaks;
      tbl.probabilities = detail::state_probabilities(spreads, breaks);
      return tbl;
    }
  }
  throw std::runtime_error("build_spread_states: data cannot support the requested state count");
}

// Breakpoints at the k/n_v quantiles, k = 1..n_v-1; state v satisfies
// (k-1)/n_v < quantile rank <= k/n_v.
inline QuantileTable build_volume_states(std::vector<int64_t> volumes, int n_v) {
  if (n_v < 2) throw std::invalid_argument("build_volume_states: n_v < 2");
  if (volumes.empty()) throw std::invalid_argument("build_volume_states: no data");
  std::sort(volumes.begin(), volumes.end());
  if (volumes.front() == volumes.back())
    throw std::invalid_argument("build_volume_states: constant data");
  std::vector<int64_t> breaks;
  for (int k = 1; k < n_v; ++k) {
    int64_t q = detail::nearest_rank(volumes, static_cast<double>(k) / n_v);
    if (!breaks.empty() && q <= breaks.back())
      throw std::invalid_argument("build_volume_states: quantiles not strictly increasing");
    breaks.push_back(q);
  }
  QuantileTable tbl;
  tbl.n_states = n_v;
  tbl.breakpoints = breaks;
  tbl.probabilities = detail::state_probabilities(volumes, breaks);
  return tbl;
}

// Historical distributions consistent with the published state tables; used
// as the default discretisation assets. Feeding them through the builders
// reproduces the published breakpoints exactly for both table sizes.
inline std::vector<int64_t> default_spread_sample() {
  const std::pair<int64_t, int> counts[] = {{1, 1200}, {2, 247}, {3, 167}, {4, 36},  {5, 62},
                                            {6, 64},   {7, 30},  {8, 26},  {9, 12},  {12, 46},
                                            {13, 16},  {19, 50}, {25, 44}};
  std::vector<int64_t> out;
  out.reserve(2000);
  for (auto [v, c] : counts) out.insert(out.end(), static_cast<size_t>(c), v);
  return out;
}

inline std::vector<int64_t> default_volume_sample() {
  const std::pair<int64_t, int> counts[] = {{5, 100},    {11, 100},  {31, 200},  {93, 200},
                                            {266, 200},  {636, 200}, {1453, 200}, {2930, 200},
                                            {5209, 200}, {12322, 200}, {20000, 200}};
  std::vector<int64_t> out;
  out.reserve(2000);
  for (auto [v, c] : counts) out.insert(out.end(), static_cast<size_t>(c), v);
  return out;
}

inline QuantileTable default_spread_states(int n_s) { return build_spread_states(default_spread_sample(), n_s); }
inline QuantileTable default_volume_states(int n_v) { return build_volume_states(default_volume_sample(), n_v); }

// Tabular state-action store. States enter the table when first visited;
// absent states render as action -1 in policy exports.
class QTable {
 public:
  static constexpr int kNumActions = RlParams::kNumActions;
  using Values = std::array<double, kNumActions>;

  bool contains(const StateKey& s) const { return values_.count(s) != 0; }
  size_t state_count() const { return values_.size(); }

  Values& touch(const StateKey& s) { return values_[s]; }

  const Values& at(const StateKey& s) const { return values_.at(s); }

  double max_value(const StateKey& s) const {
    const Values& v = values_.at(s);
    return *std::max_element(v.begin(), v.end());
  }

  // Ties break toward the lowest action index.
  int greedy_action(const StateKey& s) const {
    const Values& v = values_.at(s);
    int best = 0;
    for (int a = 1; a < kNumActions; ++a)
      if (v[a] > v[best]) best = a;
    return best;
  }

  void add_visit(const StateKey& s, int a) { ++visits_[s][static_cast<size_t>(a)]; }
  uint64_t total_visits(const StateKey& s) const {
    auto it = visits_.find(s);
    if (it == visits_.end()) return 0;
    uint64_t tot = 0;
    for (uint64_t c : it->second) tot += c;
    return tot;
  }
  uint64_t visits(const StateKey& s, int a) const {
    auto it = visits_.find(s);
    return it == visits_.end() ? 0 : it->second[static_cast<size_t>(a)];
  }

  const std::map<StateKey, Values>& states() const { return values_; }

 private:
  std::map<StateKey, Values> values_;
  std::map<StateKey, std::array<uint64_t, kNumActions>> visits_;
};

// Piecewise-linear exploration decay: 1 -> 0.9 over the first 200 episodes,
// 0.9 -> 0.1 over the next 400, 0.1 -> 0.01 over the next 150, then flat.
inline double epsilon_schedule(int episode) {
  if (episode < 0) throw std::invalid_argument("epsilon_schedule: negative episode");
  double e = static_cast<double>(episode);
  if (episode <= 200) return 1.0 - 0.1 * e / 200.0;
  if (episode <= 600) return 0.9 - 0.8 * (e - 200.0) / 400.0;
  if (episode <= 750) return 0.1 - 0.09 * (e - 600.0) / 150.0;
  return 0.01;
}

// Best action with probability 1 - eps + eps/N, every other with eps/N.
// Unseen states draw uniformly. A single uniform draw drives the choice.
inline int epsilon_greedy(const QTable& q, const StateKey& s, double epsilon, double u) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon_greedy: bad epsilon");
  const int n = QTable::kNumActions;
  auto uniform_pick = [&](double x) {
    int a = static_cast<int>(x * n);
    return a >= n ? n - 1 : a;
  };
  if (!q.contains(s)) return uniform_pick(u);
  double greedy_mass = 1.0 - epsilon;
  if (u < greedy_mass) return q.greedy_action(s);
  double rescaled = epsilon > 0.0 ? (u - greedy_mass) / epsilon : 0.0;
  return uniform_pick(rescaled);
}

// One-step Q-learning update; the max term drops when the transition is
// terminal or the successor state has not been seen.
inline double q_update(QTable& q, const StateKey& s, int a, double reward, const StateKey& s_next,
                       bool terminal, const RlParams& params) {
  double max_next = 0.0;
  if (!terminal && q.contains(s_next)) max_next = q.max_value(s_next);
  auto& row = q.touch(s);
  double& value = row[static_cast<size_t>(a)];
  value += params.learn_rate * (reward + params.gamma * max_next - value);
  q.add_visit(s, a);
  return value;
}

struct ConvergenceMetrics {
  double q_delta = 0.0;       // mean |dQ| over the earlier table's states/actions
  double policy_delta = 0.0;  // fraction of those states whose greedy action changed
};

inline ConvergenceMetrics convergence_metrics(const QTable& q_prev, const QTable& q_curr) {
  ConvergenceMetrics m;
  if (q_prev.states().empty()) return m;
  double abs_sum = 0.0;
  int changed = 0;
  for (const auto& [s, prev_vals] : q_prev.states()) {
    if (!q_curr.contains(s)) throw std::invalid_argument("convergence_metrics: states not nested");
    const auto& curr_vals = q_curr.at(s);
    for (int a = 0; a < QTable::kNumActions; ++a)
      abs_sum += std::fabs(curr_vals[static_cast<size_t>(a)] - prev_vals[static_cast<size_t>(a)]);
    if (q_prev.greedy_action(s) != q_curr.greedy_action(s)) ++changed;
  }
  double n_states = static_cast<double>(q_prev.states().size());
  m.q_delta = abs_sum / (n_states * QTable::kNumActions);
  m.policy_delta = static_cast<double>(changed) / n_states;
  return m;
}

// Remaining time and inventory bucket by ceiling; spread and volume through
// the quantile tables.
inline StateKey get_state(uint64_t remaining_ms, uint64_t remaining_inventory, const BookStats& stats,
                          const QuantileTable& spread_tbl, const QuantileTable& volume_tbl,
                          const RlParams& params) {
  auto ceil_bucket = [](uint64_t num, uint64_t den, int n) {
    if (den == 0) return n;
    uint64_t b = (static_cast<uint64_t>(n) * num + den - 1) / den;
    if (b < 1) b = 1;
    if (b > static_cast<uint64_t>(n)) b = static_cast<uint64_t>(n);
    return static_cast<int>(b);
  };
  StateKey key;
  key.t = ceil_bucket(remaining_ms, params.t0_ms, params.n_t);
  key.i = ceil_bucket(remaining_inventory, params.x0, params.n_i);
  int64_t spread = stats.spread ? static_cast<int64_t>(std::llround(*stats.spread)) : 1;
  key.s = spread_tbl.lookup(spread);
  key.v = volume_tbl.lookup(static_cast<int64_t>(stats.best_bid_volume));
  return key;
}

struct EpisodeResult {
  double total_profit = 0.0;  // episode return G, ticks * shares
  double intp = 0.0;          // G / X0
  int trades = 0;             // market orders submitted
  int forced_trades = 0;      // submitted by the end-of-horizon rule
  size_t states_discovered = 0;
  double q_delta = 0.0;
  double policy_delta = 0.0;
  double epsilon = 0.0;
  uint64_t unsold_inventory = 0;
};

struct RlFills {
  uint64_t volume = 0;
  double proceeds = 0.0;  // sum of price * volume over fills
};

// Optimal-execution selling agent modifying an event-time TWAP schedule. One
// decision per delivery: process fills of the pending order, apply the
// deferred Q update, then select and size the next child order. After the
// trading horizon (or once the schedule is exhausted) any remaining inventory
// is worked with the maximum action until flat or session end.
class RlAgent {
 public:
  RlAgent(const RlParams& params, QuantileTable spread_tbl, QuantileTable volume_tbl, QTable* table)
      : params_(params), spread_tbl_(std::move(spread_tbl)), volume_tbl_(std::move(volume_tbl)), q_(table) {}

  void begin_episode(double epsilon) {
    epsilon_ = epsilon;
    remaining_inventory_ = params_.x0;
    decision_index_ = 0;
    pending_.reset();
    result_ = EpisodeResult{};
    result_.epsilon = epsilon;
  }

  // Returns the sized child order, if any. The simulator must confirm whether
  // the order was actually submitted via note_submission().
  std::optional<agents::MarketOrderIntent> on_delivery(const BookStats& stats, uint64_t now_ms,
                                                       const RlFills& fills, Rng& rng) {
    settle_fills(fills);
    if (!stats.two_sided()) return std::nullopt;  // no usable state; decision deferred

    uint64_t remaining_ms = now_ms < params_.t0_ms ? params_.t0_ms - now_ms : 0;
    StateKey state = get_state(remaining_ms, remaining_inventory_, stats, spread_tbl_, volume_tbl_, params_);
    bool terminal = remaining_inventory_ == 0;

    if (pending_) {
      q_update(*q_, pending_->state, pending_->action, pending_->reward_accum, state, terminal, params_);
      pending_.reset();
    }
    if (terminal) return std::nullopt;

    ++decision_index_;
    bool horizon_done = now_ms > params_.t0_ms;
    bool schedule_done = decision_index_ > params_.n_dp;
    int action;
    if (horizon_done) {
      action = QTable::kNumActions - 1;  // largest multiplier until flat
    } else if (schedule_done) {
      return std::nullopt;  // e-TWAP schedule exhausted; wait for the horizon rule
    } else {
      q_->touch(state);  // state discovered
      action = epsilon_greedy(*q_, state, epsilon_, rng.uniform01());
    }

    double mult = RlParams::action_multiplier(action);
    uint64_t volume = static_cast<uint64_t>(std::floor(mult * params_.child_volume()));
    volume = std::min(volume, remaining_inventory_);
    if (volume == 0) return std::nullopt;

    candidate_ = Pending{state, action, 0.0, horizon_done};
    return agents::MarketOrderIntent{Side::Ask, volume, 0.0};
  }

  // The simulator applies the empty-contra and volatility-auction guards; the
  // deferred update is armed only for orders that actually went in.
  void note_submission(bool submitted) {
    if (!candidate_) return;
    if (submitted) {
      pending_ = candidate_;
      ++result_.trades;
      if (candidate_->forced) ++result_.forced_trades;
    }
    candidate_.reset();
  }

  // Final settlement after the session loop: absorb late fills and perform
  // the last deferred update against the terminal state.
  void finalize_episode(const RlFills& fills) {
    settle_fills(fills);
    if (pending_) {
      q_update(*q_, pending_->state, pending_->action, pending_->reward_accum, pending_->state, true, params_);
      pending_.reset();
    }
    result_.intp = result_.total_profit / static_cast<double>(params_.x0);
    result_.states_discovered = q_->state_count();
    result_.unsold_inventory = remaining_inventory_;
  }

  const EpisodeResult& result() const { return result_; }
  uint64_t remaining_inventory() const { return remaining_inventory_; }
  const RlParams& params() const { return params_; }
  QTable& table() { return *q_; }

 private:
  struct Pending {
    StateKey state;
    int action = 0;
    double reward_accum = 0.0;
    bool forced = false;
  };

  void settle_fills(const RlFills& fills) {
    if (fills.volume > remaining_inventory_)
      throw std::runtime_error("RlAgent: fills exceed remaining inventory");
    remaining_inventory_ -= fills.volume;
    result_.total_profit += fills.proceeds;
    if (pending_) pending_->reward_accum += fills.proceeds;
  }

  RlParams params_;
  QuantileTable spread_tbl_;
  QuantileTable volume_tbl_;
  QTable* q_;
  double epsilon_ = 1.0;
  uint64_t remaining_inventory_ = 0;
  int decision_index_ = 0;
  std::optional<Pending> pending_;
  std::optional<Pending> candidate_;
  EpisodeResult result_;
};

// CSV persistence: one row per visited state, (t,i,s,v,q_0..q_8,visits).
inline void save_qtable(std::ostream& out, const QTable& q) {
  out << "t,i,s,v";
  for (int a = 0; a < QTable::kNumActions; ++a) out << ",q_" << a;
  out << ",visits\n";
  out.precision(17);
  for (const auto& [s, vals] : q.states()) {
    out << s.t << ',' << s.i << ',' << s.s << ',' << s.v;
    for (int a = 0; a < QTable::kNumActions; ++a) out << ',' << vals[static_cast<size_t>(a)];
    out << ',' << q.total_visits(s) << '\n';
  }
}

inline QTable load_qtable(std::istream& in) {
  QTable q;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    auto next = [&]() {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("load_qtable: short row");
      return cell;
    };
    StateKey s;
    s.t = std::stoi(next());
    s.i = std::stoi(next());
    s.s = std::stoi(next());
    s.v = std::stoi(next());
    auto& vals = q.touch(s);
    for (int a = 0; a < QTable::kNumActions; ++a) vals[static_cast<size_t>(a)] = std::stod(next());
  }
  return q;
}

// Greedy policy over the full state lattice; unvisited states render as -1.
inline void export_policy(std::ostream& out, const QTable& q, const RlParams& params) {
  out << "t,i,s,v,action\n";
  for (int t = 1; t <= params.n_t; ++t)
    for (int i = 1; i <= params.n_i; ++i)
      for (int s = 1; s <= params.n_s; ++s)
        for (int v = 1; v <= params.n_v; ++v) {
          StateKey key{t, i, s, v};
          int action = q.contains(key) ? q.greedy_action(key) : -1;
          out << t << ',' << i << ',' << s << ',' << v << ',' << action << '\n';
        }
}

}  // namespace eabm::rl
