#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eabm::ingest {

enum class TaqKind { Trade, Quote };

struct RawTaqRecord {
  uint64_t timestamp_ms = 0;
  TaqKind kind = TaqKind::Trade;
  std::string trade_type;  // e.g. AT, LT, LC, IP
  double price = 0.0;
  double volume = 0.0;
  double bid = 0.0;
  double ask = 0.0;
  double bid_vol = 0.0;
  double ask_vol = 0.0;
};

struct FilterReport {
  std::vector<RawTaqRecord> records;
  size_t dropped_window = 0;
  size_t dropped_type = 0;
  bool empty_result_warning = false;
};

// Keeps continuous-session records in [start + drop_first_minutes, end];
// trades restricted to the allowed type codes (quotes pass on time alone).
inline FilterReport filter_window(const std::vector<RawTaqRecord>& records, uint64_t session_start_ms,
                                  uint64_t session_end_ms, int drop_first_minutes,
                                  const std::set<std::string>& allowed_trade_types) {
  FilterReport out;
  uint64_t open = session_start_ms + static_cast<uint64_t>(drop_first_minutes) * 60000ULL;
  for (const auto& r : records) {
    if (r.timestamp_ms < open || r.timestamp_ms > session_end_ms) {
      ++out.dropped_window;
      continue;
    }
    if (r.kind == TaqKind::Trade && !allowed_trade_types.count(r.trade_type)) {
      ++out.dropped_type;
      continue;
    }
    out.records.push_back(r);
  }
  out.empty_result_warning = out.records.empty();
  return out;
}

// One quote per timestamp: the most recent in the sequence wins.
inline std::vector<RawTaqRecord> compact_quotes(const std::vector<RawTaqRecord>& records) {
  std::vector<RawTaqRecord> out;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.kind != TaqKind::Quote) {
      out.push_back(r);
      continue;
    }
    bool superseded = false;
    for (size_t j = i + 1; j < records.size() && records[j].timestamp_ms == r.timestamp_ms; ++j) {
      if (records[j].kind == TaqKind::Quote) {
        superseded = true;
        break;
      }
    }
    if (!superseded) out.push_back(r);
  }
  return out;
}

struct CompactTradesReport {
  std::vector<RawTaqRecord> records;
  size_t dropped_zero_volume_groups = 0;
};

// Same-timestamp same-type trades merge into one: volume summed, price the
// volume-weighted average.
inline CompactTradesReport compact_trades(const std::vector<RawTaqRecord>& records) {
  CompactTradesReport out;
  size_t i = 0;
  while (i < records.size()) {
    const auto& r = records[i];
    if (r.kind != TaqKind::Trade) {
      out.records.push_back(r);
      ++i;
      continue;
    }
    double vol = r.volume;
    double pv = r.price * r.volume;
    size_t j = i + 1;
    while (j < records.size() && records[j].timestamp_ms == r.timestamp_ms &&
           records[j].kind == TaqKind::Trade && records[j].trade_type == r.trade_type) {
      vol += records[j].volume;
      pv += records[j].price * records[j].volume;
      ++j;
    }
    if (vol > 0.0) {
      RawTaqRecord merged = r;
      merged.volume = vol;
      merged.price = pv / vol;
      out.records.push_back(merged);
    } else {
      ++out.dropped_zero_volume_groups;
    }
    i = j;
  }
  return out;
}

// Column-name mapping for user-supplied delimited files; the vendor schema is
// proprietary so names are configurable.
struct TaqColumnMap {
  std::string timestamp = "timestamp_ms";
  std::string kind = "kind";          // values "trade" / "quote"
  std::string trade_type = "trade_type";
  std::string price = "price";
  std::string volume = "volume";
  std::string bid = "bid";
  std::string ask = "ask";
  std::string bid_vol = "bid_vol";
  std::string ask_vol = "ask_vol";
};

inline std::vector<RawTaqRecord> parse_taq_csv(std::istream& in, const TaqColumnMap& map) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse_taq_csv: empty input");
  std::map<std::string, size_t> col;
  {
    std::istringstream header(line);
    std::string name;
    size_t idx = 0;
    while (std::getline(header, name, ',')) col[name] = idx++;
  }
  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw std::runtime_error("parse_taq_csv: missing column " + name);
    return it->second;
  };
  size_t c_ts = require(map.timestamp), c_kind = require(map.kind);
  auto optional_col = [&](const std::string& name) -> std::optional<size_t> {
    auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };
  auto c_type = optional_col(map.trade_type);
  auto c_price = optional_col(map.price);
  auto c_volume = optional_col(map.volume);
  auto c_bid = optional_col(map.bid);
  auto c_ask = optional_col(map.ask);
  auto c_bid_vol = optional_col(map.bid_vol);
  auto c_ask_vol = optional_col(map.ask_vol);

  std::vector<RawTaqRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    auto get = [&](std::optional<size_t> c) -> std::string {
      if (!c || *c >= cells.size()) return "";
      return cells[*c];
    };
    RawTaqRecord r;
    r.timestamp_ms = std::stoull(cells.at(c_ts));
    std::string kind = cells.at(c_kind);
    r.kind = (kind == "quote" || kind == "Quote" || kind == "QUOTE") ? TaqKind::Quote : TaqKind::Trade;
    r.trade_type = get(c_type);
    auto num = [&](std::optional<size_t> c) {
      std::string s = get(c);
      return s.empty() ? 0.0 : std::stod(s);
    };
    r.price = num(c_price);
    r.volume = num(c_volume);
    r.bid = num(c_bid);
    r.ask = num(c_ask);
    r.bid_vol = num(c_bid_vol);
    r.ask_vol = num(c_ask_vol);
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RawTaqRecord& a, const RawTaqRecord& b) { return a.timestamp_ms < b.timestamp_ms; });
  return out;
}

}  // namespace eabm::ingest
