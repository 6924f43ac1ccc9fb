#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eabm/sim.hpp"

namespace eabm::io {

inline constexpr const char* kVersion = "0.1.0";

// Stable floating-point formatting so repeated runs are byte-identical.
inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline uint64_t fnv1a64(const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fnv1a64_file: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string s = buf.str();
  return fnv1a64(s.data(), s.size());
}

inline std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Event-log persistence: one CSV row per market event.
inline void write_events_csv(std::ostream& out, const std::vector<MarketEvent>& events) {
  out << "seq,timestamp_ms,kind,order_id,agent_id,side,price,volume,remaining_volume,aggressor_id\n";
  for (const auto& e : events) {
    out << e.seq << ',' << e.timestamp << ',' << to_string(e.kind) << ',' << e.order_id << ','
        << e.agent_id << ',' << to_string(e.side) << ',' << e.price << ',' << e.volume << ','
        << e.remaining_volume << ',' << e.aggressor_order_id << '\n';
  }
}

inline void write_stats_csv(std::ostream& out, const std::vector<sim::StatsSample>& stats) {
  out << "seq,timestamp_ms,best_bid,best_ask,best_bid_volume,best_ask_volume,mid,micro,spread,imbalance\n";
  for (const auto& s : stats) {
    out << s.seq << ',' << s.timestamp << ',' << fmt(s.best_bid) << ',' << fmt(s.best_ask) << ','
        << s.best_bid_volume << ',' << s.best_ask_volume << ',' << fmt(s.mid) << ',' << fmt(s.micro)
        << ',' << fmt(s.spread) << ',' << fmt(s.imbalance) << '\n';
  }
}

inline void write_transactions_csv(std::ostream& out, const std::vector<sim::TransactionRecord>& txns) {
  out << "timestamp_ms,aggressor_side,volume,vwap,mid_before,mid_after,aggressor_agent_id,value\n";
  for (const auto& t : txns) {
    out << t.timestamp << ',' << to_string(t.aggressor_side) << ',' << t.volume << ',' << fmt(t.vwap)
        << ',' << fmt(t.mid_before) << ',' << fmt(t.mid_after) << ',' << t.aggressor_agent_id << ','
        << fmt(t.value) << '\n';
  }
}

inline void write_depth_csv(std::ostream& out, const std::vector<sim::DepthSample>& depth) {
  out << "timestamp_ms";
  for (int i = 1; i <= sim::kDepthLevels; ++i) out << ",bid_" << i;
  for (int i = 1; i <= sim::kDepthLevels; ++i) out << ",ask_" << i;
  out << '\n';
  for (const auto& d : depth) {
    out << d.timestamp;
    for (auto v : d.bid) out << ',' << v;
    for (auto v : d.ask) out << ',' << v;
    out << '\n';
  }
}

inline void write_episodes_csv(std::ostream& out, const std::vector<rl::EpisodeResult>& eps) {
  out << "episode,intp,total_profit,trades,forced_trades,states,q_delta,policy_delta,epsilon,unsold\n";
  for (size_t i = 0; i < eps.size(); ++i) {
    const auto& e = eps[i];
    out << i << ',' << fmt(e.intp) << ',' << fmt(e.total_profit) << ',' << e.trades << ','
        << e.forced_trades << ',' << e.states_discovered << ',' << fmt(e.q_delta) << ','
        << fmt(e.policy_delta) << ',' << fmt(e.epsilon) << ',' << e.unsold_inventory << '\n';
  }
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_file: cannot open " + path.string());
  out << contents;
}

}  // namespace eabm::io
