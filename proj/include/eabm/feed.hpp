#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <deque>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "eabm/order.hpp"

namespace eabm::feed {

// Fixed little-endian record, 58 bytes:
//   offset  0: seq        u64
//   offset  8: timestamp  u64
//   offset 16: kind       u8   (0 new_limit, 1 trade, 2 cancel)
//   offset 17: side       u8   (0 bid, 1 ask)
//   offset 18: order_id   u64
//   offset 26: agent_id   u32
//   offset 30: price      i32
//   offset 34: volume     u64
//   offset 42: remaining  u64
//   offset 50: aggressor  u64
inline constexpr size_t kRecordLength = 58;

using EncodedEvent = std::array<uint8_t, kRecordLength>;

class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void put_le(uint8_t* p, T value) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<uint8_t>(u >> (8 * i));
}

template <typename T>
T get_le(const uint8_t* p) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  return static_cast<T>(u);
}

}  // namespace detail

inline EncodedEvent encode(const MarketEvent& e) {
  if (e.price > std::numeric_limits<int32_t>::max() || e.price < std::numeric_limits<int32_t>::min())
    throw std::range_error("encode: price out of i32 range");
  EncodedEvent out{};
  detail::put_le<uint64_t>(out.data() + 0, e.seq);
  detail::put_le<uint64_t>(out.data() + 8, e.timestamp);
  out[16] = static_cast<uint8_t>(e.kind);
  out[17] = static_cast<uint8_t>(e.side);
  detail::put_le<uint64_t>(out.data() + 18, e.order_id);
  detail::put_le<uint32_t>(out.data() + 26, e.agent_id);
  detail::put_le<int32_t>(out.data() + 30, static_cast<int32_t>(e.price));
  detail::put_le<uint64_t>(out.data() + 34, e.volume);
  detail::put_le<uint64_t>(out.data() + 42, e.remaining_volume);
  detail::put_le<uint64_t>(out.data() + 50, e.aggressor_order_id);
  return out;
}

inline MarketEvent decode(const uint8_t* data, size_t length) {
  if (length != kRecordLength) throw FramingError("decode: expected 58-byte record");
  if (data[16] > 2) throw DecodeError("decode: unknown event kind code");
  if (data[17] > 1) throw DecodeError("decode: unknown side code");
  MarketEvent e;
  e.seq = detail::get_le<uint64_t>(data + 0);
  e.timestamp = detail::get_le<uint64_t>(data + 8);
  e.kind = static_cast<EventKind>(data[16]);
  e.side = static_cast<Side>(data[17]);
  e.order_id = detail::get_le<uint64_t>(data + 18);
  e.agent_id = detail::get_le<uint32_t>(data + 26);
  e.price = detail::get_le<int32_t>(data + 30);
  e.volume = detail::get_le<uint64_t>(data + 34);
  e.remaining_volume = detail::get_le<uint64_t>(data + 42);
  e.aggressor_order_id = detail::get_le<uint64_t>(data + 50);
  return e;
}

inline MarketEvent decode(const EncodedEvent& rec) { return decode(rec.data(), rec.size()); }
inline MarketEvent decode(const std::vector<uint8_t>& buf) { return decode(buf.data(), buf.size()); }

// Bounded FIFO between the matching engine and the event processor. Safe for
// one producer and one consumer; the deterministic simulator drives it from a
// single thread. When full, new events are dropped and counted, never
// silently lost.
class EventChannel {
 public:
  explicit EventChannel(size_t capacity = 65536) : capacity_(capacity) {}

  bool push(const MarketEvent& e) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (queue_.size() >= capacity_) {
      ++dropped_;
      return false;
    }
    queue_.push_back(e);
    return true;
  }

  std::vector<MarketEvent> drain() {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<MarketEvent> out(queue_.begin(), queue_.end());
    queue_.clear();
    return out;
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return queue_.size();
  }
  uint64_t dropped() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return dropped_;
  }
  size_t capacity() const { return capacity_; }

 private:
  mutable std::mutex mutex_;
  std::deque<MarketEvent> queue_;
  size_t capacity_;
  uint64_t dropped_ = 0;
};

}  // namespace eabm::feed
