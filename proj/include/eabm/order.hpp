#pragma once

#include <cstdint>
#include <string>

namespace eabm {

enum class Side : uint8_t { Bid = 0, Ask = 1 };
enum class OrderKind : uint8_t { Limit = 0, Market = 1 };
enum class EventKind : uint8_t { NewLimit = 0, Trade = 1, Cancel = 2 };

inline Side contra(Side s) { return s == Side::Bid ? Side::Ask : Side::Bid; }

inline const char* to_string(Side s) { return s == Side::Bid ? "bid" : "ask"; }
inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::NewLimit: return "new_limit";
    case EventKind::Trade: return "trade";
    default: return "cancel";
  }
}

struct Order {
  uint64_t id = 0;
  uint32_t agent_id = 0;
  Side side = Side::Bid;
  OrderKind kind = OrderKind::Limit;
  int64_t price = 0;    // ticks; meaningful for limit orders only
  uint64_t volume = 0;  // shares, >= 1
  uint64_t placed_at = 0;  // virtual-clock ms
};

// One matching-engine output message. Field conventions:
//  - NewLimit: order_id/agent_id/side/price of the order now resting;
//    volume == remaining_volume == resting volume (the residue, for a limit
//    that partially executed on entry).
//  - Trade: order_id/agent_id identify the resting (maker) order, price is the
//    maker price, side is the AGGRESSOR side, volume is the fill,
//    remaining_volume is the maker's volume left after the fill and
//    aggressor_order_id is the taker order.
//  - Cancel: volume is the order's original size, remaining_volume is the
//    amount removed from the book.
struct MarketEvent {
  uint64_t seq = 0;        // strictly increasing within a session
  uint64_t timestamp = 0;  // virtual ms
  EventKind kind = EventKind::NewLimit;
  uint64_t order_id = 0;
  uint32_t agent_id = 0;
  Side side = Side::Bid;
  int64_t price = 0;
  uint64_t volume = 0;
  uint64_t remaining_volume = 0;
  uint64_t aggressor_order_id = 0;  // Trade only, else 0

  bool operator==(const MarketEvent&) const = default;
};

}  // namespace eabm
