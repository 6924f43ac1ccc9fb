#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "eabm/order.hpp"

namespace eabm {

struct BookStats {
  std::optional<int64_t> best_bid;
  std::optional<int64_t> best_ask;
  uint64_t best_bid_volume = 0;
  uint64_t best_ask_volume = 0;
  uint64_t bid_depth = 0;  // total resting volume, bid side
  uint64_t ask_depth = 0;
  std::optional<double> mid;
  std::optional<double> micro;   // best-volume weighted, ask weighted by ask volume
  std::optional<double> spread;
  std::optional<double> imbalance;  // (ask_depth - bid_depth) / (ask_depth + bid_depth)

  bool two_sided() const { return best_bid.has_value() && best_ask.has_value(); }
};

struct DepthSnapshot {
  std::vector<uint64_t> bid;  // volume at the first n occupied levels, best outward
  std::vector<uint64_t> ask;
};

struct SubmitResult {
  std::vector<MarketEvent> events;
  bool rejected = false;
  std::string reason;
};

// Price-time-priority limit order book. Prices are integer ticks and volumes
// integer shares. The same class serves as the matching engine (submit_*,
// stamping seq/timestamp on emitted events) and as a shadow book rebuilt from
// the event stream (apply_event).
class Book {
 public:
  struct RestingOrder {
    uint64_t id;
    uint32_t agent_id;
    int64_t price;
    uint64_t volume;           // remaining
    uint64_t original_volume;  // as submitted
    uint64_t placed_at;

    bool operator==(const RestingOrder&) const = default;
  };

  using BidLevels = std::map<int64_t, std::deque<RestingOrder>, std::greater<int64_t>>;
  using AskLevels = std::map<int64_t, std::deque<RestingOrder>>;

  explicit Book(int64_t reference_price = 10000) : dynamic_reference_price_(reference_price) {}

  // Crossing limit orders execute against the contra side in price-time
  // priority; any residue rests and is announced as a NewLimit event.
  SubmitResult submit_limit(const Order& order) {
    SubmitResult res;
    if (order.kind != OrderKind::Limit) return reject(res, "not a limit order");
    if (order.volume < 1) return reject(res, "zero volume");
    if (order.price < 1) return reject(res, "price below one tick");
    if (index_.count(order.id)) return reject(res, "duplicate order id");

    uint64_t remaining = order.volume;
    if (order.side == Side::Bid) {
      remaining = match_against(asks_, order, remaining, res.events,
                                [&](int64_t level) { return level <= order.price; });
    } else {
      remaining = match_against(bids_, order, remaining, res.events,
                                [&](int64_t level) { return level >= order.price; });
    }
    if (remaining > 0) {
      RestingOrder ro{order.id, order.agent_id, order.price, remaining, order.volume, order.placed_at};
      rest(order.side, ro);
      res.events.push_back(stamp({0, order.placed_at, EventKind::NewLimit, order.id, order.agent_id,
                                  order.side, order.price, remaining, remaining, 0}));
    }
    return res;
  }

  // Walks the contra side best-first; unfilled residue is discarded.
  SubmitResult submit_market(const Order& order) {
    SubmitResult res;
    if (order.kind != OrderKind::Market) return reject(res, "not a market order");
    if (order.volume < 1) return reject(res, "zero volume");
    if (index_.count(order.id)) return reject(res, "duplicate order id");
    Side contra_side = contra(order.side);
    if (side_empty(contra_side)) return reject(res, "empty contra side");

    if (order.side == Side::Bid) {
      match_against(asks_, order, order.volume, res.events, [](int64_t) { return true; });
    } else {
      match_against(bids_, order, order.volume, res.events, [](int64_t) { return true; });
    }
    return res;
  }

  // Idempotent: unknown or already-filled ids produce no event.
  std::optional<MarketEvent> cancel(uint64_t order_id, uint64_t now_ms) {
    auto it = index_.find(order_id);
    if (it == index_.end()) return std::nullopt;
    auto [side, price] = it->second;
    auto& queue = level_queue(side, price);
    for (auto qit = queue.begin(); qit != queue.end(); ++qit) {
      if (qit->id != order_id) continue;
      MarketEvent ev = stamp({0, now_ms, EventKind::Cancel, order_id, qit->agent_id, side, price,
                              qit->original_volume, qit->volume, 0});
      queue.erase(qit);
      if (queue.empty()) erase_level(side, price);
      index_.erase(it);
      return ev;
    }
    return std::nullopt;  // index said present but queue disagreed; unreachable
  }

  BookStats stats() const {
    BookStats s;
    if (!bids_.empty()) {
      s.best_bid = bids_.begin()->first;
      for (const auto& o : bids_.begin()->second) s.best_bid_volume += o.volume;
    }
    if (!asks_.empty()) {
      s.best_ask = asks_.begin()->first;
      for (const auto& o : asks_.begin()->second) s.best_ask_volume += o.volume;
    }
    for (const auto& [p, q] : bids_)
      for (const auto& o : q) s.bid_depth += o.volume;
    for (const auto& [p, q] : asks_)
      for (const auto& o : q) s.ask_depth += o.volume;
    if (s.best_bid && s.best_ask) {
      double b = static_cast<double>(*s.best_bid);
      double a = static_cast<double>(*s.best_ask);
      s.mid = 0.5 * (a + b);
      s.spread = a - b;
      double va = static_cast<double>(s.best_ask_volume);
      double vb = static_cast<double>(s.best_bid_volume);
      s.micro = va / (va + vb) * a + vb / (va + vb) * b;
    }
    if (s.bid_depth + s.ask_depth > 0) {
      s.imbalance = (static_cast<double>(s.ask_depth) - static_cast<double>(s.bid_depth)) /
                    (static_cast<double>(s.ask_depth) + static_cast<double>(s.bid_depth));
    }
    return s;
  }

  // Per-side volumes at the first `levels` occupied price levels, best
  // outward; missing levels report zero.
  DepthSnapshot depth_snapshot(int levels) const {
    if (levels < 1) throw std::invalid_argument("depth_snapshot: levels < 1");
    DepthSnapshot d;
    d.bid.assign(static_cast<size_t>(levels), 0);
    d.ask.assign(static_cast<size_t>(levels), 0);
    int i = 0;
    for (auto it = bids_.begin(); it != bids_.end() && i < levels; ++it, ++i)
      for (const auto& o : it->second) d.bid[static_cast<size_t>(i)] += o.volume;
    i = 0;
    for (auto it = asks_.begin(); it != asks_.end() && i < levels; ++it, ++i)
      for (const auto& o : it->second) d.ask[static_cast<size_t>(i)] += o.volume;
    return d;
  }

  // Rebuild-from-feed path used by shadow books; does not emit events.
  void apply_event(const MarketEvent& e) {
    switch (e.kind) {
      case EventKind::NewLimit: {
        RestingOrder ro{e.order_id, e.agent_id, e.price, e.volume, e.volume, e.timestamp};
        rest(e.side, ro);
        break;
      }
      case EventKind::Trade: {
        Side maker_side = contra(e.side);
        auto it = index_.find(e.order_id);
        if (it == index_.end()) throw std::runtime_error("apply_event: trade against unknown order");
        auto& queue = level_queue(maker_side, it->second.second);
        for (auto qit = queue.begin(); qit != queue.end(); ++qit) {
          if (qit->id != e.order_id) continue;
          if (qit->volume < e.volume) throw std::runtime_error("apply_event: overfill");
          qit->volume -= e.volume;
          if (qit->volume == 0) {
            queue.erase(qit);
            if (queue.empty()) erase_level(maker_side, it->second.second);
            index_.erase(it);
          }
          break;
        }
        last_trade_price_ = e.price;
        dynamic_reference_price_ = e.price;
        break;
      }
      case EventKind::Cancel: {
        auto it = index_.find(e.order_id);
        if (it == index_.end()) throw std::runtime_error("apply_event: cancel of unknown order");
        auto [side, price] = it->second;
        auto& queue = level_queue(side, price);
        for (auto qit = queue.begin(); qit != queue.end(); ++qit) {
          if (qit->id != e.order_id) continue;
          queue.erase(qit);
          break;
        }
        if (queue.empty()) erase_level(side, price);
        index_.erase(it);
        break;
      }
    }
  }

  bool side_empty(Side s) const { return s == Side::Bid ? bids_.empty() : asks_.empty(); }
  bool has_order(uint64_t id) const { return index_.count(id) != 0; }
  std::optional<int64_t> best(Side s) const {
    if (s == Side::Bid) return bids_.empty() ? std::nullopt : std::optional<int64_t>(bids_.begin()->first);
    return asks_.empty() ? std::nullopt : std::optional<int64_t>(asks_.begin()->first);
  }
  std::optional<int64_t> last_trade_price() const { return last_trade_price_; }
  int64_t dynamic_reference_price() const { return dynamic_reference_price_; }
  uint64_t next_seq() const { return next_seq_; }
  const BidLevels& bids() const { return bids_; }
  const AskLevels& asks() const { return asks_; }

  void clear() {
    bids_.clear();
    asks_.clear();
    index_.clear();
  }

  // Resting-state equality; used by the feed-replay self-consistency check.
  bool same_resting_state(const Book& other) const {
    return bids_ == other.bids_ && asks_ == other.asks_ &&
           last_trade_price_ == other.last_trade_price_ &&
           dynamic_reference_price_ == other.dynamic_reference_price_;
  }

 private:
  template <typename Levels, typename Crosses>
  uint64_t match_against(Levels& levels, const Order& taker, uint64_t remaining,
                         std::vector<MarketEvent>& events, Crosses crosses) {
    while (remaining > 0 && !levels.empty()) {
      auto lit = levels.begin();
      if (!crosses(lit->first)) break;
      auto& queue = lit->second;
      while (remaining > 0 && !queue.empty()) {
        RestingOrder& maker = queue.front();
        uint64_t fill = std::min(remaining, maker.volume);
        maker.volume -= fill;
        remaining -= fill;
        events.push_back(stamp({0, taker.placed_at, EventKind::Trade, maker.id, maker.agent_id,
                                taker.side, maker.price, fill, maker.volume, taker.id}));
        last_trade_price_ = maker.price;
        dynamic_reference_price_ = maker.price;  // deepest level of this transaction wins
        if (maker.volume == 0) {
          index_.erase(maker.id);
          queue.pop_front();
        }
      }
      if (queue.empty()) levels.erase(lit);
    }
    return remaining;
  }

  void rest(Side side, const RestingOrder& ro) {
    if (side == Side::Bid)
      bids_[ro.price].push_back(ro);
    else
      asks_[ro.price].push_back(ro);
    index_[ro.id] = {side, ro.price};
  }

  std::deque<RestingOrder>& level_queue(Side side, int64_t price) {
    if (side == Side::Bid) return bids_.at(price);
    return asks_.at(price);
  }

  void erase_level(Side side, int64_t price) {
    if (side == Side::Bid)
      bids_.erase(price);
    else
      asks_.erase(price);
  }

  MarketEvent stamp(MarketEvent e) {
    e.seq = next_seq_++;
    return e;
  }

  static SubmitResult& reject(SubmitResult& res, const char* why) {
    res.rejected = true;
    res.reason = why;
    return res;
  }

  BidLevels bids_;
  AskLevels asks_;
  std::unordered_map<uint64_t, std::pair<Side, int64_t>> index_;
  std::optional<int64_t> last_trade_price_;
  int64_t dynamic_reference_price_;
  uint64_t next_seq_ = 1;
};

}  // namespace eabm
