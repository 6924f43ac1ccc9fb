#include <gtest/gtest.h>

#include <map>

#include "eabm/book.hpp"
#include "eabm/rng.hpp"
#include "eabm/sim.hpp"
#include "reference_book.hpp"

namespace {

using namespace eabm;

Order limit(uint64_t id, Side side, int64_t price, uint64_t vol, uint64_t t = 0, uint32_t agent = 1) {
  return Order{id, agent, side, OrderKind::Limit, price, vol, t};
}
Order market(uint64_t id, Side side, uint64_t vol, uint64_t t = 0, uint32_t agent = 1) {
  return Order{id, agent, side, OrderKind::Market, 0, vol, t};
}

TEST(Book, EmptyBookLimitRests) {
  Book b;
  auto res = b.submit_limit(limit(1, Side::Bid, 9980, 10));
  ASSERT_FALSE(res.rejected);
  ASSERT_EQ(res.events.size(), 1u);
  EXPECT_EQ(res.events[0].kind, EventKind::NewLimit);
  EXPECT_EQ(res.events[0].price, 9980);
  EXPECT_EQ(b.stats().best_bid, 9980);
}

TEST(Book, CrossingLimitWalksLevelsAndLeavesNothing) {
  Book b;
  b.submit_limit(limit(1, Side::Ask, 10020, 50));
  b.submit_limit(limit(2, Side::Ask, 10030, 50));
  auto res = b.submit_limit(limit(3, Side::Bid, 10030, 80));
  ASSERT_EQ(res.events.size(), 2u);
  EXPECT_EQ(res.events[0].kind, EventKind::Trade);
  EXPECT_EQ(res.events[0].price, 10020);
  EXPECT_EQ(res.events[0].volume, 50u);
  EXPECT_EQ(res.events[1].price, 10030);
  EXPECT_EQ(res.events[1].volume, 30u);
  EXPECT_FALSE(b.has_order(3));  // fully executed, nothing rests
  EXPECT_EQ(b.stats().best_ask, 10030);
  EXPECT_EQ(b.stats().best_ask_volume, 20u);
}

TEST(Book, FifoWithinLevel) {
  Book b;
  b.submit_limit(limit(1, Side::Ask, 10020, 50));  // A
  b.submit_limit(limit(2, Side::Ask, 10020, 50));  // B
  auto res = b.submit_limit(limit(3, Side::Bid, 10020, 30));
  ASSERT_EQ(res.events.size(), 1u);
  EXPECT_EQ(res.events[0].order_id, 1u);  // A fills first
  EXPECT_EQ(res.events[0].remaining_volume, 20u);
}

TEST(Book, DuplicateIdRejected) {
  Book b;
  b.submit_limit(limit(1, Side::Bid, 9980, 10));
  auto res = b.submit_limit(limit(1, Side::Bid, 9981, 10));
  EXPECT_TRUE(res.rejected);
  auto res2 = b.submit_market(market(1, Side::Ask, 5));
  EXPECT_TRUE(res2.rejected);
}

TEST(Book, MarketAgainstEmptyContraRejected) {
  Book b;
  auto res = b.submit_market(market(1, Side::Ask, 10));
  EXPECT_TRUE(res.rejected);
  EXPECT_TRUE(res.events.empty());
}

TEST(Book, MarketResidueDiscarded) {
  Book b;
  b.submit_limit(limit(1, Side::Bid, 10000, 100));
  auto res = b.submit_market(market(2, Side::Ask, 150));
  ASSERT_EQ(res.events.size(), 1u);
  EXPECT_EQ(res.events[0].price, 10000);
  EXPECT_EQ(res.events[0].volume, 100u);
  EXPECT_TRUE(b.side_empty(Side::Bid));
  EXPECT_FALSE(b.has_order(2));
}

TEST(Book, ZeroVolumeMarketRejected) {
  Book b;
  b.submit_limit(limit(1, Side::Bid, 10000, 100));
  EXPECT_TRUE(b.submit_market(market(2, Side::Ask, 0)).rejected);
}

TEST(Book, CancelUnknownIdIsSilent) {
  Book b;
  EXPECT_FALSE(b.cancel(42, 0).has_value());
}

TEST(Book, CancelRestingRemovesLevel) {
  Book b;
  b.submit_limit(limit(1, Side::Ask, 10020, 50));
  auto ev = b.cancel(1, 5);
  ASSERT_TRUE(ev.has_value());
  EXPECT_EQ(ev->kind, EventKind::Cancel);
  EXPECT_EQ(ev->volume, 50u);
  EXPECT_EQ(ev->remaining_volume, 50u);
  EXPECT_TRUE(b.side_empty(Side::Ask));
}

TEST(Book, CancelPartiallyFilledReportsRemainder) {
  Book b;
  b.submit_limit(limit(1, Side::Ask, 10020, 50));
  b.submit_market(market(2, Side::Bid, 30));
  auto ev = b.cancel(1, 5);
  ASSERT_TRUE(ev.has_value());
  EXPECT_EQ(ev->volume, 50u);
  EXPECT_EQ(ev->remaining_volume, 20u);
}

TEST(Book, StatsSymmetryMicroEqualsMid) {
  Book b;
  b.submit_limit(limit(1, Side::Bid, 10000, 70));
  b.submit_limit(limit(2, Side::Ask, 10040, 70));
  auto s = b.stats();
  EXPECT_DOUBLE_EQ(*s.imbalance, 0.0);
  EXPECT_DOUBLE_EQ(*s.micro, *s.mid);
}

TEST(Book, StatsMicroPriceFootnoteExample) {
  Book b;
  b.submit_limit(limit(1, Side::Bid, 10000, 100));
  b.submit_limit(limit(2, Side::Ask, 10040, 300));
  auto s = b.stats();
  EXPECT_DOUBLE_EQ(*s.micro, 0.75 * 10040 + 0.25 * 10000);  // 10030
  EXPECT_DOUBLE_EQ(*s.imbalance, 0.5);
  EXPECT_DOUBLE_EQ(*s.mid, 10020.0);
  EXPECT_DOUBLE_EQ(*s.spread, 40.0);
}

TEST(Book, StatsOneSidedImbalanceBoundary) {
  Book b;
  b.submit_limit(limit(1, Side::Ask, 10040, 10));
  auto s = b.stats();
  EXPECT_DOUBLE_EQ(*s.imbalance, 1.0);
  EXPECT_FALSE(s.mid.has_value());
  EXPECT_FALSE(s.micro.has_value());
}

TEST(Book, DepthSnapshotEmptyAllZero) {
  Book b;
  auto d = b.depth_snapshot(7);
  for (auto v : d.bid) EXPECT_EQ(v, 0u);
  for (auto v : d.ask) EXPECT_EQ(v, 0u);
}

TEST(Book, DepthSnapshotPartialLevels) {
  Book b;
  b.submit_limit(limit(1, Side::Bid, 9990, 5));
  b.submit_limit(limit(2, Side::Bid, 9980, 6));
  b.submit_limit(limit(3, Side::Bid, 9970, 7));
  auto d = b.depth_snapshot(7);
  EXPECT_EQ(d.bid[0], 5u);
  EXPECT_EQ(d.bid[1], 6u);
  EXPECT_EQ(d.bid[2], 7u);
  for (size_t i = 3; i < 7; ++i) EXPECT_EQ(d.bid[i], 0u);
}

TEST(Book, DepthSnapshotOrderedFromBest) {
  Book b;
  b.submit_limit(limit(1, Side::Ask, 10020, 50));
  b.submit_limit(limit(2, Side::Ask, 10021, 20));
  auto d = b.depth_snapshot(2);
  EXPECT_EQ(d.ask[0], 50u);
  EXPECT_EQ(d.ask[1], 20u);
}

// Randomized operation stream checked against the naive reference
// implementation, plus the conservation and ordering invariants. The full
// 10^5-operation run lives in the acceptance suite.
TEST(Book, MatchesReferenceBookOnRandomOperations) {
  Rng rng(2024);
  for (int seq = 0; seq < 20; ++seq) {
    Book engine(10000);
    testref::ReferenceBook ref(10000);
    uint64_t next_id = 1;
    std::vector<uint64_t> known_ids;
    // accounting: resting[s] == limit volume submitted on s, minus trade
    // volume touching s (as maker, or as a crossing limit's executed part),
    // minus cancelled remainders
    std::map<Side, uint64_t> submitted, traded, cancelled;
    for (int op = 0; op < 500; ++op) {
      double u = rng.uniform01();
      if (u < 0.45) {
        Side side = rng.uniform01() < 0.5 ? Side::Bid : Side::Ask;
        int64_t price = 10000 + static_cast<int64_t>(std::llround(rng.normal(0, 30))) +
                        (side == Side::Bid ? -5 : 5);
        if (price < 1) price = 1;
        uint64_t vol = 1 + rng.uniform_int(200);
        Order o = limit(next_id++, side, price, vol, static_cast<uint64_t>(op));
        auto a = engine.submit_limit(o);
        auto b = ref.submit_limit(o);
        ASSERT_EQ(a.rejected, b.rejected);
        ASSERT_EQ(a.events, b.events);
        if (!a.rejected) {
          submitted[side] += vol;
          for (const auto& e : a.events)
            if (e.kind == EventKind::Trade) {
              traded[contra(e.side)] += e.volume;  // maker depletion
              traded[e.side] += e.volume;          // crossing limit's executed part
            }
          known_ids.push_back(o.id);
        }
      } else if (u < 0.70) {
        Side side = rng.uniform01() < 0.5 ? Side::Bid : Side::Ask;
        uint64_t vol = 1 + rng.uniform_int(300);
        Order o = market(next_id++, side, vol, static_cast<uint64_t>(op));
        auto a = engine.submit_market(o);
        auto b = ref.submit_market(o);
        ASSERT_EQ(a.rejected, b.rejected);
        ASSERT_EQ(a.events, b.events);
        if (!a.rejected) {
          int64_t last_price = 0;
          for (const auto& e : a.events) {
            traded[contra(e.side)] += e.volume;  // market volume never rests
            // aggressor prices must be monotone non-improving
            if (last_price != 0) {
              if (o.side == Side::Bid) ASSERT_GE(e.price, last_price);
              else ASSERT_LE(e.price, last_price);
            }
            last_price = e.price;
          }
        }
      } else {
        uint64_t id = known_ids.empty() || rng.uniform01() < 0.2
                          ? next_id + 1000000
                          : known_ids[rng.uniform_int(known_ids.size())];
        auto a = engine.cancel(id, static_cast<uint64_t>(op));
        auto b = ref.cancel(id, static_cast<uint64_t>(op));
        ASSERT_EQ(a.has_value(), b.has_value());
        if (a) {
          ASSERT_EQ(*a, *b);
          cancelled[a->side] += a->remaining_volume;
        }
      }
      for (Side s : {Side::Bid, Side::Ask}) {
        uint64_t resting = s == Side::Bid ? engine.stats().bid_depth : engine.stats().ask_depth;
        ASSERT_EQ(resting, submitted[s] - traded[s] - cancelled[s]);
        ASSERT_EQ(resting, ref.total_volume(s));
      }
      auto st = engine.stats();
      if (st.two_sided()) {
        ASSERT_LT(*st.best_bid, *st.best_ask);
        ASSERT_GE(*st.micro, static_cast<double>(*st.best_bid));
        ASSERT_LE(*st.micro, static_cast<double>(*st.best_ask));
      }
    }
  }
}

// Replaying the emitted stream against a fresh shadow book reconstructs the
// engine state exactly.
TEST(Book, ReplayReconstructsBook) {
  Rng rng(99);
  Book engine(10000);
  std::vector<MarketEvent> events;
  uint64_t next_id = 1;
  std::vector<uint64_t> ids;
  for (int op = 0; op < 2000; ++op) {
    double u = rng.uniform01();
    if (u < 0.5) {
      Side side = rng.uniform01() < 0.5 ? Side::Bid : Side::Ask;
      int64_t price = 10000 + static_cast<int64_t>(std::llround(rng.normal(0, 25)));
      if (price < 1) price = 1;
      auto res = engine.submit_limit(limit(next_id, side, price, 1 + rng.uniform_int(50),
                                           static_cast<uint64_t>(op)));
      if (!res.rejected) ids.push_back(next_id);
      ++next_id;
      for (auto& e : res.events) events.push_back(e);
    } else if (u < 0.75) {
      Side side = rng.uniform01() < 0.5 ? Side::Bid : Side::Ask;
      auto res = engine.submit_market(market(next_id++, side, 1 + rng.uniform_int(80),
                                             static_cast<uint64_t>(op)));
      for (auto& e : res.events) events.push_back(e);
    } else if (!ids.empty()) {
      auto ev = engine.cancel(ids[rng.uniform_int(ids.size())], static_cast<uint64_t>(op));
      if (ev) events.push_back(*ev);
    }
  }
  Book shadow = sim::replay_events(events, 10000);
  EXPECT_TRUE(shadow.same_resting_state(engine));
}

}  // namespace
