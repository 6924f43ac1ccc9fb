#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "eabm/rl.hpp"
#include "eabm/rng.hpp"

namespace {

using namespace eabm;
using namespace eabm::rl;

std::vector<int64_t> as_vec(std::initializer_list<int64_t> v) { return std::vector<int64_t>(v); }

TEST(SpreadStates, PaperTableSmall) {
  auto t = build_spread_states(default_spread_sample(), 5);
  EXPECT_EQ(t.breakpoints, as_vec({1, 2, 3, 7}));
  ASSERT_EQ(t.probabilities.size(), 5u);
  EXPECT_DOUBLE_EQ(t.probabilities[0], 0.6);
  // the published columns are approximate (and mutually inconsistent with the
  // published breakpoints); match them loosely
  EXPECT_NEAR(t.probabilities[1], 0.123, 0.04);
  EXPECT_NEAR(t.probabilities[2], 0.062, 0.04);
  EXPECT_NEAR(t.probabilities[3], 0.091, 0.04);
  EXPECT_NEAR(t.probabilities[4], 0.124, 0.04);
}

TEST(SpreadStates, PaperTableLarge) {
  auto t = build_spread_states(default_spread_sample(), 10);
  EXPECT_EQ(t.breakpoints, as_vec({1, 2, 3, 4, 5, 6, 8, 12, 19}));
  EXPECT_DOUBLE_EQ(t.probabilities[0], 0.6);
}

TEST(SpreadStates, UniformTailOracle) {
  // 60% ones plus uniform mass on {2..101}
  std::vector<int64_t> data(1200, 1);
  for (int v = 2; v <= 101; ++v)
    for (int c = 0; c < 8; ++c) data.push_back(v);
  auto t = build_spread_states(data, 5);
  ASSERT_EQ(t.breakpoints.size(), 4u);
  EXPECT_EQ(t.breakpoints[0], 1);
  for (size_t i = 1; i < t.breakpoints.size(); ++i) EXPECT_GT(t.breakpoints[i], t.breakpoints[i - 1]);
  EXPECT_LT(t.breakpoints.back(), 101);  // top state open-ended over the support
  // brute-force check: every observation lands in a state, states partition (0, inf)
  for (int64_t v = 1; v <= 101; ++v) {
    int s = t.lookup(v);
    EXPECT_GE(s, 1);
    EXPECT_LE(s, 5);
  }
  EXPECT_EQ(t.lookup(1), 1);
  EXPECT_EQ(t.lookup(100000), 5);
  EXPECT_DOUBLE_EQ(t.probabilities[0], 0.6);
}

TEST(SpreadStates, DegenerateDataErrors) {
  EXPECT_THROW(build_spread_states(std::vector<int64_t>(100, 1), 5), std::invalid_argument);
  EXPECT_THROW(build_spread_states({}, 5), std::invalid_argument);
}

TEST(VolumeStates, PaperTableSmall) {
  auto t = build_volume_states(default_volume_sample(), 5);
  EXPECT_EQ(t.breakpoints, as_vec({31, 266, 1453, 5209}));
  for (double p : t.probabilities) EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(VolumeStates, PaperTableLarge) {
  auto t = build_volume_states(default_volume_sample(), 10);
  EXPECT_EQ(t.breakpoints, as_vec({11, 31, 93, 266, 636, 1453, 2930, 5209, 12322}));
  for (double p : t.probabilities) EXPECT_DOUBLE_EQ(p, 0.1);
}

TEST(VolumeStates, LookupExample) {
  auto t = build_volume_states(default_volume_sample(), 5);
  EXPECT_EQ(t.lookup(100), 2);  // 31 < 100 <= 266
  EXPECT_EQ(t.lookup(31), 1);
  EXPECT_EQ(t.lookup(6000), 5);
}

TEST(VolumeStates, ConstantDataErrors) {
  EXPECT_THROW(build_volume_states(std::vector<int64_t>(100, 7), 5), std::invalid_argument);
}

TEST(GetState, FullRemainingBoundary) {
  RlParams p;
  BookStats s;
  s.best_bid = 9980;
  s.best_ask = 10020;
  s.best_bid_volume = 100;
  s.best_ask_volume = 100;
  s.mid = 10000;
  s.spread = 40;
  auto spread_tbl = default_spread_states(p.n_s);
  auto vol_tbl = default_volume_states(p.n_v);
  auto key = get_state(p.t0_ms, p.x0, s, spread_tbl, vol_tbl, p);
  EXPECT_EQ(key.t, p.n_t);
  EXPECT_EQ(key.i, p.n_i);
}

TEST(GetState, SpreadOneMapsToStateOneForBothSizes) {
  BookStats s;
  s.best_bid = 10000;
  s.best_ask = 10001;
  s.best_bid_volume = 50;
  s.best_ask_volume = 50;
  s.spread = 1;
  for (int n : {5, 10}) {
    RlParams p;
    p.n_s = n;
    p.n_v = n;
    auto key = get_state(p.t0_ms, p.x0, s, default_spread_states(n), default_volume_states(n), p);
    EXPECT_EQ(key.s, 1);
  }
}

TEST(GetState, CeilingBucketArithmetic) {
  RlParams p;  // n_t = 5
  BookStats s;
  s.spread = 1;
  s.best_bid_volume = 1;
  auto spread_tbl = default_spread_states(p.n_s);
  auto vol_tbl = default_volume_states(p.n_v);
  uint64_t remaining = static_cast<uint64_t>(0.3 * static_cast<double>(p.t0_ms));
  auto key = get_state(remaining, p.x0, s, spread_tbl, vol_tbl, p);
  EXPECT_EQ(key.t, 2);  // ceil(5 * 0.3) = 2
  auto zero = get_state(0, 0, s, spread_tbl, vol_tbl, p);
  EXPECT_EQ(zero.t, 1);
  EXPECT_EQ(zero.i, 1);
}

TEST(EpsilonSchedule, PaperDecayPoints) {
  EXPECT_DOUBLE_EQ(epsilon_schedule(0), 1.0);
  EXPECT_DOUBLE_EQ(epsilon_schedule(200), 0.9);
  EXPECT_DOUBLE_EQ(epsilon_schedule(400), 0.5);
  EXPECT_DOUBLE_EQ(epsilon_schedule(600), 0.1);
  EXPECT_DOUBLE_EQ(epsilon_schedule(750), 0.01);
  EXPECT_DOUBLE_EQ(epsilon_schedule(999), 0.01);
  EXPECT_NEAR(epsilon_schedule(100), 0.95, 1e-12);
}

TEST(EpsilonGreedy, ZeroEpsilonIsGreedy) {
  QTable q;
  StateKey s{1, 1, 1, 1};
  auto& row = q.touch(s);
  row[3] = 1.0;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(epsilon_greedy(q, s, 0.0, rng.uniform01()), 3);
}

TEST(EpsilonGreedy, TieBreaksTowardLowestIndex) {
  QTable q;
  StateKey s{1, 1, 1, 1};
  auto& row = q.touch(s);
  row[2] = 5.0;
  row[6] = 5.0;
  EXPECT_EQ(q.greedy_action(s), 2);
}

TEST(EpsilonGreedy, FullExplorationIsUniform) {
  QTable q;
  StateKey s{1, 1, 1, 1};
  q.touch(s)[0] = 3.0;
  Rng rng(11);
  std::array<int, QTable::kNumActions> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(epsilon_greedy(q, s, 1.0, rng.uniform01()))];
  double expected = static_cast<double>(n) / QTable::kNumActions;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 20.09);  // chi-square df=8 critical value at p=0.01
}

TEST(EpsilonGreedy, BestActionFrequencyAtHalfEpsilon) {
  QTable q;
  StateKey s{1, 1, 1, 1};
  q.touch(s)[4] = 2.0;
  Rng rng(13);
  int best = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    if (epsilon_greedy(q, s, 0.5, rng.uniform01()) == 4) ++best;
  EXPECT_NEAR(static_cast<double>(best) / n, 0.5 + 0.5 / 9.0, 0.01);
}

TEST(QUpdate, HandComputedValues) {
  RlParams p;
  p.learn_rate = 0.1;
  p.gamma = 1.0;
  QTable q;
  StateKey s{1, 1, 1, 1}, s2{2, 1, 1, 1};
  EXPECT_NEAR(q_update(q, s, 0, 10.0, s2, false, p), 1.0, 1e-12);  // max over unseen s2 is 0

  RlParams frozen = p;
  frozen.learn_rate = 0.0;
  QTable q2;
  q2.touch(s)[1] = 7.0;
  EXPECT_NEAR(q_update(q2, s, 1, 100.0, s2, false, frozen), 7.0, 1e-12);

  QTable q3;
  q3.touch(s)[2] = 5.0;
  EXPECT_NEAR(q_update(q3, s, 2, 3.0, s2, true, p), 4.8, 1e-12);  // 5 + 0.1*(3 - 5)
}

TEST(QUpdate, UsesMaxOverNextState) {
  RlParams p;
  p.learn_rate = 1.0;
  p.gamma = 0.5;
  QTable q;
  StateKey s{1, 1, 1, 1}, s2{2, 1, 1, 1};
  auto& row2 = q.touch(s2);
  row2[0] = 1.0;
  row2[5] = 4.0;
  EXPECT_NEAR(q_update(q, s, 0, 2.0, s2, false, p), 2.0 + 0.5 * 4.0, 1e-12);
}

TEST(ConvergenceMetrics, IdenticalTablesAreZero) {
  QTable a;
  a.touch(StateKey{1, 1, 1, 1})[0] = 1.0;
  QTable b = a;
  auto m = convergence_metrics(a, b);
  EXPECT_DOUBLE_EQ(m.q_delta, 0.0);
  EXPECT_DOUBLE_EQ(m.policy_delta, 0.0);
}

TEST(ConvergenceMetrics, AveragingArithmetic) {
  QTable a, b;
  StateKey s{1, 1, 1, 1};
  a.touch(s);
  b.touch(s)[4] = 0.9;  // one action changed by 0.9 over 9 actions
  auto m = convergence_metrics(a, b);
  EXPECT_NEAR(m.q_delta, 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(m.policy_delta, 1.0);  // greedy flipped from 0 to 4
}

TEST(ConvergenceMetrics, PolicyFlipCounting) {
  QTable a, b;
  for (int t = 1; t <= 4; ++t) {
    StateKey s{t, 1, 1, 1};
    a.touch(s)[0] = 1.0;
    b.touch(s)[0] = 1.0;
  }
  b.touch(StateKey{1, 1, 1, 1})[3] = 2.0;
  b.touch(StateKey{2, 1, 1, 1})[5] = 2.0;
  auto m = convergence_metrics(a, b);
  EXPECT_DOUBLE_EQ(m.policy_delta, 0.5);  // 2 of 4 states flipped
}

// Watkins convergence on a 3-state deterministic chain with visit-count
// decaying step sizes: the table must reach the dynamic-programming optimum.
TEST(QLearning, ToyMdpConvergesToDynamicProgrammingOptimum) {
  RlParams p;
  p.gamma = 1.0;
  const StateKey s1{1, 1, 1, 1}, s2{2, 1, 1, 1}, s3{3, 1, 1, 1};
  auto reward1 = [](int a) { return 1.0 + 0.25 * a; };          // best action 8 -> 3.0
  auto reward2 = [](int a) { return 5.0 - 0.5 * std::abs(a - 2); };  // best action 2 -> 5.0
  // DP optimum: Q*(s2,a) = r2(a); Q*(s1,a) = r1(a) + max_a r2 = r1(a) + 5
  Rng rng(101);
  QTable q;
  for (int ep = 0; ep < 10000; ++ep) {
    int a1 = static_cast<int>(rng.uniform_int(QTable::kNumActions));
    RlParams step = p;
    step.learn_rate = 1.0 / (1.0 + static_cast<double>(q.visits(s1, a1)));
    q_update(q, s1, a1, reward1(a1), s2, false, step);
    int a2 = static_cast<int>(rng.uniform_int(QTable::kNumActions));
    step.learn_rate = 1.0 / (1.0 + static_cast<double>(q.visits(s2, a2)));
    q_update(q, s2, a2, reward2(a2), s3, true, step);
  }
  for (int a = 0; a < QTable::kNumActions; ++a) {
    EXPECT_NEAR(q.at(s2)[static_cast<size_t>(a)], reward2(a), 1e-6);
    EXPECT_NEAR(q.at(s1)[static_cast<size_t>(a)], reward1(a) + 5.0, 1e-6);
  }
  EXPECT_EQ(q.greedy_action(s2), 2);
  EXPECT_EQ(q.greedy_action(s1), 8);
}

BookStats rl_stats(int64_t bid = 9980, int64_t ask = 10020, uint64_t bbv = 100, uint64_t bav = 100) {
  BookStats s;
  s.best_bid = bid;
  s.best_ask = ask;
  s.best_bid_volume = bbv;
  s.best_ask_volume = bav;
  s.bid_depth = bbv;
  s.ask_depth = bav;
  s.mid = 0.5 * static_cast<double>(bid + ask);
  s.spread = static_cast<double>(ask - bid);
  s.imbalance = 0.0;
  return s;
}

TEST(RlAgent, FlatInventoryMeansNoOrder) {
  RlParams p;
  p.x0 = 200;
  p.n_dp = 2;
  QTable q;
  RlAgent agent(p, default_spread_states(p.n_s), default_volume_states(p.n_v), &q);
  agent.begin_episode(0.0);
  Rng rng(1);
  auto first = agent.on_delivery(rl_stats(), 50, RlFills{}, rng);
  ASSERT_TRUE(first.has_value());
  agent.note_submission(true);
  // the whole parent order fills at 9980
  auto second = agent.on_delivery(rl_stats(), 100, RlFills{200, 200 * 9980.0}, rng);
  EXPECT_FALSE(second.has_value());
  agent.note_submission(false);
  EXPECT_EQ(agent.remaining_inventory(), 0u);
}

TEST(RlAgent, ActionMultiplierSizesTheChildOrder) {
  RlParams p;  // x0 = 43000, n_dp = 430 -> child 100
  QTable q;
  // make action 6 (multiplier 1.5) greedy in every visited state
  for (int t = 1; t <= p.n_t; ++t)
    for (int i = 1; i <= p.n_i; ++i)
      for (int s = 1; s <= p.n_s; ++s)
        for (int v = 1; v <= p.n_v; ++v) q.touch(StateKey{t, i, s, v})[6] = 1.0;
  RlAgent agent(p, default_spread_states(p.n_s), default_volume_states(p.n_v), &q);
  agent.begin_episode(0.0);
  Rng rng(2);
  auto intent = agent.on_delivery(rl_stats(), 50, RlFills{}, rng);
  ASSERT_TRUE(intent.has_value());
  EXPECT_EQ(intent->side, Side::Ask);
  EXPECT_EQ(intent->volume, 150u);  // 1.5 * 100
  agent.note_submission(true);
}

TEST(RlAgent, HorizonRuleForcesMaximumCappedByInventory) {
  RlParams p;  // child 100, max action volume 200
  QTable q;
  RlAgent agent(p, default_spread_states(p.n_s), default_volume_states(p.n_v), &q);
  agent.begin_episode(0.0);
  Rng rng(3);
  // one scheduled decision, then sell down to 120 remaining
  auto first = agent.on_delivery(rl_stats(), 50, RlFills{}, rng);
  ASSERT_TRUE(first.has_value());
  agent.note_submission(true);
  uint64_t sold = p.x0 - 120;
  auto after = agent.on_delivery(rl_stats(), p.t0_ms + 50, RlFills{sold, sold * 9980.0}, rng);
  ASSERT_TRUE(after.has_value());
  EXPECT_EQ(after->volume, 120u);  // min(2 * 100, 120)
  agent.note_submission(true);
}

TEST(RlAgent, SuppressedOrdersLeaveNoPendingUpdate) {
  RlParams p;
  QTable q;
  RlAgent agent(p, default_spread_states(p.n_s), default_volume_states(p.n_v), &q);
  agent.begin_episode(1.0);
  Rng rng(4);
  auto intent = agent.on_delivery(rl_stats(), 50, RlFills{}, rng);
  if (intent) agent.note_submission(false);  // guard suppressed the order
  size_t states_before = q.state_count();
  // next delivery: no pending, so no q-update beyond state discovery
  auto next = agent.on_delivery(rl_stats(), 100, RlFills{}, rng);
  (void)next;
  agent.note_submission(false);
  for (const auto& [key, vals] : q.states())
    for (double v : vals) EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_GE(q.state_count(), states_before);
}

TEST(QTableIo, CsvRoundTrip) {
  QTable q;
  auto& r1 = q.touch(StateKey{1, 2, 3, 4});
  r1[0] = 1.5;
  r1[8] = -2.25;
  q.add_visit(StateKey{1, 2, 3, 4}, 0);
  q.touch(StateKey{5, 1, 1, 2})[3] = 0.125;
  std::ostringstream os;
  save_qtable(os, q);
  std::istringstream is(os.str());
  QTable loaded = load_qtable(is);
  ASSERT_EQ(loaded.state_count(), 2u);
  EXPECT_DOUBLE_EQ(loaded.at(StateKey{1, 2, 3, 4})[0], 1.5);
  EXPECT_DOUBLE_EQ(loaded.at(StateKey{1, 2, 3, 4})[8], -2.25);
  EXPECT_DOUBLE_EQ(loaded.at(StateKey{5, 1, 1, 2})[3], 0.125);
}

TEST(QTableIo, PolicyExportRendersUnvisitedAsMinusOne) {
  RlParams p;
  p.n_t = p.n_i = p.n_s = p.n_v = 2;
  QTable q;
  q.touch(StateKey{1, 1, 1, 1})[4] = 1.0;
  std::ostringstream os;
  export_policy(os, q, p);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  int rows = 0, minus_ones = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.size() >= 2 && line.substr(line.size() - 2) == "-1") ++minus_ones;
  }
  EXPECT_EQ(rows, 16);
  EXPECT_EQ(minus_ones, 15);
  EXPECT_NE(os.str().find("1,1,1,1,4"), std::string::npos);
}

}  // namespace
