#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eabm/agents.hpp"
#include "eabm/book.hpp"
#include "eabm/feed.hpp"
#include "eabm/params.hpp"
#include "eabm/rl.hpp"
#include "eabm/rng.hpp"

namespace eabm::sim {

struct Clock {
  uint64_t now_ms = 0;
  uint64_t tick_ms = 50;
  void advance() { now_ms += tick_ms; }
};

struct SessionConfig {
  AbmParams abm;
  std::optional<RlParams> rl;
  rl::QuantileTable spread_states;  // required when rl is present
  rl::QuantileTable volume_states;
  double rl_epsilon = 1.0;
  rl::QTable* qtable = nullptr;  // shared across episodes during training; may be null
  bool record_events = true;

  static SessionConfig with_defaults(AbmParams p, std::optional<RlParams> r = std::nullopt) {
    SessionConfig cfg;
    cfg.abm = p;
    cfg.rl = r;
    if (r) {
      cfg.spread_states = rl::default_spread_states(r->n_s);
      cfg.volume_states = rl::default_volume_states(r->n_v);
    }
    return cfg;
  }
};

struct StatsSample {
  uint64_t seq = 0;
  uint64_t timestamp = 0;
  double best_bid = std::numeric_limits<double>::quiet_NaN();
  double best_ask = std::numeric_limits<double>::quiet_NaN();
  uint64_t best_bid_volume = 0;
  uint64_t best_ask_volume = 0;
  double mid = std::numeric_limits<double>::quiet_NaN();
  double micro = std::numeric_limits<double>::quiet_NaN();
  double spread = std::numeric_limits<double>::quiet_NaN();
  double imbalance = std::numeric_limits<double>::quiet_NaN();
};

// One aggressor transaction: the consecutive trades a single market order
// produced, with the mid-price context around it.
struct TransactionRecord {
  uint64_t timestamp = 0;
  Side aggressor_side = Side::Bid;
  uint32_t aggressor_agent_id = 0;
  uint64_t volume = 0;
  double value = 0.0;  // sum of price * volume over the fills
  double vwap = 0.0;
  double mid_before = std::numeric_limits<double>::quiet_NaN();
  double mid_after = std::numeric_limits<double>::quiet_NaN();
};

struct DepthSample {
  uint64_t timestamp = 0;
  std::vector<uint64_t> bid;
  std::vector<uint64_t> ask;
};

inline constexpr int kDepthLevels = 7;

struct SessionLog {
  std::vector<MarketEvent> events;
  std::vector<StatsSample> stats;
  std::vector<TransactionRecord> transactions;
  std::vector<DepthSample> depth;
  bool liquidity_crash = false;
  uint64_t suppressed_market_orders = 0;
  uint64_t suppressed_init_orders = 0;
  uint64_t engine_rejections = 0;
  uint64_t channel_drops = 0;
  std::optional<rl::EpisodeResult> rl;

  // Micro-price path (two-sided samples only), the series the moments run on.
  std::vector<double> micro_series() const {
    std::vector<double> out;
    out.reserve(stats.size());
    for (const auto& s : stats)
      if (!std::isnan(s.micro)) out.push_back(s.micro);
    return out;
  }
};

// True iff the first crossed contra best deviates from the dynamic reference
// price by strictly more than 10%. Exact integer arithmetic.
inline bool would_trigger_volatility_auction(const Book& book, const Order& order) {
  auto best = book.best(contra(order.side));
  if (!best) throw std::invalid_argument("would_trigger_volatility_auction: empty contra side");
  int64_t ref = book.dynamic_reference_price();
  int64_t dev = *best > ref ? *best - ref : ref - *best;
  return 10 * dev > ref;
}

namespace detail {

struct LpSlot {
  agents::LpState state;
};

struct SessionState {
  Book engine;
  Book shadow;
  feed::EventChannel channel{65536};
  uint64_t next_order_id = 1;
  std::vector<agents::FundamentalistState> fundamentalists;
  std::vector<agents::ChartistState> chartists;
  std::vector<LpSlot> lps;
  std::unordered_map<uint64_t, size_t> lp_by_order;  // resting order id -> lp index
  std::unordered_map<uint64_t, uint32_t> market_agent;  // market order id -> agent
  std::unordered_set<uint64_t> rl_order_ids;

  SessionState(int64_t m0) : engine(m0), shadow(m0) {}
};

inline BookStats stats_of(const Book& b) { return b.stats(); }

inline StatsSample sample_from(const BookStats& s, uint64_t seq, uint64_t ts) {
  StatsSample out;
  out.seq = seq;
  out.timestamp = ts;
  if (s.best_bid) out.best_bid = static_cast<double>(*s.best_bid);
  if (s.best_ask) out.best_ask = static_cast<double>(*s.best_ask);
  out.best_bid_volume = s.best_bid_volume;
  out.best_ask_volume = s.best_ask_volume;
  if (s.mid) out.mid = *s.mid;
  if (s.micro) out.micro = *s.micro;
  if (s.spread) out.spread = *s.spread;
  if (s.imbalance) out.imbalance = *s.imbalance;
  return out;
}

// Submits up to init_order_count provider limit orders around the initial
// spread; in-spread placements are suppressed so the opening spread holds.
inline uint64_t initialize_lob(SessionState& st, const AbmParams& p, Rng& rng, uint64_t& suppressed) {
  const int64_t init_bid = p.m0 - p.s0 / 2;
  const int64_t init_ask = p.m0 + p.s0 / 2;
  uint64_t submitted = 0;
  for (int j = 0; j < p.init_order_count; ++j) {
    size_t lp_idx = static_cast<size_t>(j) % st.lps.size();
    BookStats bs = st.engine.stats();
    if (!bs.two_sided()) {
      // anchor an empty or one-sided book at the configured opening quotes
      if (!bs.best_bid) bs.best_bid = init_bid;
      if (!bs.best_ask) bs.best_ask = init_ask;
      bs.mid = 0.5 * static_cast<double>(*bs.best_bid + *bs.best_ask);
      bs.spread = static_cast<double>(*bs.best_ask - *bs.best_bid);
    }
    double u_side = rng.uniform01();
    auto gamma_draw = [&rng](double shape, double rate) { return rng.gamma(shape, rate); };
    double u_vol = rng.uniform01();
    auto intent = agents::lp_action(bs, p, agents::LpPhase::Init, init_bid, init_ask, u_side,
                                    gamma_draw, u_vol);
    if (!intent) {
      ++suppressed;
      continue;
    }
    Order o{st.next_order_id++, static_cast<uint32_t>(lp_idx), intent->side, OrderKind::Limit,
            intent->price, intent->volume, 0};
    auto res = st.engine.submit_limit(o);
    if (res.rejected) continue;
    for (const auto& e : res.events) st.channel.push(e);
    st.lps[lp_idx].state.open_orders[o.id] = 0;
    st.lp_by_order[o.id] = lp_idx;
    ++submitted;
  }
  return submitted;
}

}  // namespace detail

// Standalone initialisation per the session rules: providers place limit
// orders around (m0, s0) with in-spread placements suppressed, redrawing a
// bounded number of times if either side comes up empty.
inline Book initialize_book(const SessionConfig& config, Rng& rng) {
  const AbmParams& p = config.abm;
  p.validate();
  for (int attempt = 0; attempt < 10; ++attempt) {
    detail::SessionState st(p.m0);
    st.lps.resize(static_cast<size_t>(p.n_lp));
    uint64_t suppressed = 0;
    detail::initialize_lob(st, p, rng, suppressed);
    if (!st.engine.side_empty(Side::Bid) && !st.engine.side_empty(Side::Ask)) return std::move(st.engine);
  }
  throw std::runtime_error("initialize_book: one-sided book after bounded retries");
}

// Deterministic event-loop session. Events generated within one iteration are
// applied to the agents' book at the start of the next; agents receive the
// updated state in a fresh uniformly random order each iteration.
inline SessionLog run_session(const SessionConfig& config, uint64_t seed) {
  const AbmParams& p = config.abm;
  p.validate();
  if (config.rl) config.rl->validate();

  Rng rng(seed);
  SessionLog log;

  detail::SessionState st(p.m0);
  st.lps.resize(static_cast<size_t>(p.n_lp));

  // per-session draws: fundamental prices first, then forgetting factors
  st.fundamentalists.resize(static_cast<size_t>(p.n_fundamentalists));
  for (auto& f : st.fundamentalists)
    f.fundamental_price = static_cast<double>(p.m0) * std::exp(rng.normal(0.0, p.sigma_f));
  st.chartists.resize(static_cast<size_t>(p.n_chartists));
  for (auto& c : st.chartists) {
    c.lambda = rng.uniform(p.lambda_min, p.lambda_max);
    c.ewma = static_cast<double>(p.m0);
  }

  // initialisation with bounded redraws
  bool initialized = false;
  for (int attempt = 0; attempt < 10 && !initialized; ++attempt) {
    uint64_t suppressed = 0;
    detail::initialize_lob(st, p, rng, suppressed);
    if (!st.engine.side_empty(Side::Bid) && !st.engine.side_empty(Side::Ask)) {
      log.suppressed_init_orders = suppressed;
      initialized = true;
    } else {
      st.engine = Book(p.m0);
      (void)st.channel.drain();  // discard the failed attempt's events
      for (auto& lp : st.lps) lp.state.open_orders.clear();
      st.lp_by_order.clear();
    }
  }
  if (!initialized) throw std::runtime_error("run_session: initialisation failed after bounded retries");

  rl::QTable local_q;
  std::optional<rl::RlAgent> rl_agent;
  uint32_t rl_agent_id = 0;
  if (config.rl) {
    rl::QTable* q = config.qtable ? config.qtable : &local_q;
    rl_agent.emplace(*config.rl, config.spread_states, config.volume_states, q);
    rl_agent->begin_episode(config.rl_epsilon);
  }

  // agent delivery roster: LPs, chartists, fundamentalists, learning agent
  struct Slot {
    enum Kind { Lp, Chartist, Fundamentalist, Learner } kind;
    size_t index;
    uint32_t agent_id;
  };
  std::vector<Slot> roster;
  uint32_t agent_id = 0;
  for (size_t i = 0; i < st.lps.size(); ++i) roster.push_back({Slot::Lp, i, agent_id++});
  for (size_t i = 0; i < st.chartists.size(); ++i) roster.push_back({Slot::Chartist, i, agent_id++});
  for (size_t i = 0; i < st.fundamentalists.size(); ++i) roster.push_back({Slot::Fundamentalist, i, agent_id++});
  if (rl_agent) {
    rl_agent_id = agent_id;
    roster.push_back({Slot::Learner, 0, agent_id++});
  }
  std::vector<size_t> order(roster.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  Clock clock{0, p.tick_ms};
  rl::RlFills rl_fills;

  auto apply_drained = [&](const std::vector<MarketEvent>& batch) {
    double last_mid = std::numeric_limits<double>::quiet_NaN();
    {
      auto s0 = st.shadow.stats();
      if (s0.mid) last_mid = *s0.mid;
    }
    std::optional<TransactionRecord> open_txn;
    uint64_t open_aggr = 0;
    auto close_txn = [&]() {
      if (!open_txn) return;
      open_txn->mid_after = last_mid;
      open_txn->vwap = open_txn->value / static_cast<double>(open_txn->volume);
      log.transactions.push_back(*open_txn);
      open_txn.reset();
    };
    for (const auto& e : batch) {
      if (e.kind == EventKind::Trade) {
        if (open_txn && open_aggr != e.aggressor_order_id) close_txn();
        if (!open_txn) {
          open_txn = TransactionRecord{};
          open_txn->timestamp = e.timestamp;
          open_txn->aggressor_side = e.side;
          auto ait = st.market_agent.find(e.aggressor_order_id);
          if (ait != st.market_agent.end()) open_txn->aggressor_agent_id = ait->second;
          open_txn->mid_before = last_mid;
          open_aggr = e.aggressor_order_id;
        }
        open_txn->volume += e.volume;
        open_txn->value += static_cast<double>(e.price) * static_cast<double>(e.volume);
        if (st.rl_order_ids.count(e.aggressor_order_id)) {
          rl_fills.volume += e.volume;
          rl_fills.proceeds += static_cast<double>(e.price) * static_cast<double>(e.volume);
        }
        // maker bookkeeping: a fully filled provider order leaves its open set
        if (e.remaining_volume == 0) {
          auto it = st.lp_by_order.find(e.order_id);
          if (it != st.lp_by_order.end()) {
            st.lps[it->second].state.open_orders.erase(e.order_id);
            st.lp_by_order.erase(it);
          }
        }
      } else {
        close_txn();
        if (e.kind == EventKind::Cancel) {
          auto it = st.lp_by_order.find(e.order_id);
          if (it != st.lp_by_order.end()) {
            st.lps[it->second].state.open_orders.erase(e.order_id);
            st.lp_by_order.erase(it);
          }
        }
      }
      st.shadow.apply_event(e);
      auto s = st.shadow.stats();
      if (s.mid) last_mid = *s.mid;
      log.stats.push_back(detail::sample_from(s, e.seq, e.timestamp));
      if (config.record_events) log.events.push_back(e);
    }
    close_txn();
  };

  auto submit_market = [&](uint32_t aid, const agents::MarketOrderIntent& intent,
                           bool from_learner) -> bool {
    Order o{st.next_order_id, aid, intent.side, OrderKind::Market, 0, intent.volume, clock.now_ms};
    if (st.engine.side_empty(contra(o.side)) || would_trigger_volatility_auction(st.engine, o)) {
      ++log.suppressed_market_orders;
      return false;
    }
    ++st.next_order_id;
    auto res = st.engine.submit_market(o);
    if (res.rejected) {
      ++log.engine_rejections;
      return false;
    }
    if (from_learner) st.rl_order_ids.insert(o.id);
    st.market_agent[o.id] = aid;
    for (const auto& e : res.events) st.channel.push(e);
    return true;
  };

  while (clock.now_ms < p.session_ms) {
    apply_drained(st.channel.drain());
    clock.advance();

    if (st.engine.side_empty(Side::Bid) && st.engine.side_empty(Side::Ask)) {
      log.liquidity_crash = true;
      break;
    }

    auto ds = st.engine.depth_snapshot(kDepthLevels);
    log.depth.push_back(DepthSample{clock.now_ms, ds.bid, ds.ask});

    BookStats stats = st.shadow.stats();
    rng.shuffle(order);
    for (size_t pos : order) {
      const Slot& slot = roster[pos];
      switch (slot.kind) {
        case Slot::Lp: {
          auto& lp = st.lps[slot.index];
          for (uint64_t id : agents::cancel_stale(lp.state, clock.now_ms, p.phi_ms)) {
            st.lp_by_order.erase(id);
            if (auto ev = st.engine.cancel(id, clock.now_ms)) st.channel.push(*ev);
          }
          double u_side = rng.uniform01();
          auto gamma_draw = [&rng](double shape, double rate) { return rng.gamma(shape, rate); };
          double u_vol = rng.uniform01();
          auto intent = agents::lp_action(stats, p, agents::LpPhase::Live, 0, 0, u_side, gamma_draw, u_vol);
          if (!intent) break;
          Order o{st.next_order_id++, slot.agent_id, intent->side, OrderKind::Limit, intent->price,
                  intent->volume, clock.now_ms};
          auto res = st.engine.submit_limit(o);
          if (res.rejected) {
            ++log.engine_rejections;
            break;
          }
          for (const auto& e : res.events) st.channel.push(e);
          if (st.engine.has_order(o.id)) {
            lp.state.open_orders[o.id] = clock.now_ms;
            st.lp_by_order[o.id] = slot.index;
          }
          break;
        }
        case Slot::Chartist: {
          if (!stats.two_sided()) break;
          auto intent = agents::chartist_action(st.chartists[slot.index], stats, p, rng.uniform01());
          if (intent) submit_market(slot.agent_id, *intent, false);
          break;
        }
        case Slot::Fundamentalist: {
          if (!stats.two_sided()) break;
          auto intent = agents::fundamentalist_action(st.fundamentalists[slot.index], stats, p,
                                                      rng.uniform01());
          if (intent) submit_market(slot.agent_id, *intent, false);
          break;
        }
        case Slot::Learner: {
          rl::RlFills fills = rl_fills;
          rl_fills = rl::RlFills{};
          auto intent = rl_agent->on_delivery(stats, clock.now_ms, fills, rng);
          if (intent) {
            bool ok = submit_market(rl_agent_id, *intent, true);
            rl_agent->note_submission(ok);
          } else {
            rl_agent->note_submission(false);
          }
          break;
        }
      }
    }
  }

  // settlement drain: absorb the final iteration's events so late fills reach
  // the learner's terminal update and the feed log is complete
  apply_drained(st.channel.drain());
  if (rl_agent) {
    rl::RlFills fills = rl_fills;
    rl_fills = rl::RlFills{};
    rl_agent->finalize_episode(fills);
    log.rl = rl_agent->result();
  }
  log.channel_drops = st.channel.dropped();
  return log;
}

// Rebuilds a book from an event stream; the feed's self-consistency oracle.
inline Book replay_events(const std::vector<MarketEvent>& events, int64_t m0 = 10000) {
  Book b(m0);
  for (const auto& e : events) b.apply_event(e);
  return b;
}

struct TrainResult {
  std::vector<rl::EpisodeResult> episodes;
  rl::QTable qtable;
  std::map<int, SessionLog> retained_logs;  // every 100th episode plus first and last
  bool aborted = false;
  std::string error;
};

// Q-learning training lifecycle: the table persists across episodes, epsilon
// follows the decay schedule, and full logs are retained on the 100-episode
// grid for stylised-fact dynamics.
inline TrainResult train_rl(const SessionConfig& base_config, int episodes) {
  if (!base_config.rl) throw std::invalid_argument("train_rl: RL parameters required");
  TrainResult out;
  SessionConfig cfg = base_config;
  cfg.qtable = &out.qtable;
  for (int ep = 0; ep < episodes; ++ep) {
    cfg.rl_epsilon = rl::epsilon_schedule(ep);
    rl::QTable before = out.qtable;
    bool retain = (ep % 100 == 0) || (ep == episodes - 1);
    cfg.record_events = retain && base_config.record_events;
    try {
      SessionLog log = run_session(cfg, base_config.abm.seed + static_cast<uint64_t>(ep));
      rl::EpisodeResult res = log.rl.value();
      auto metrics = rl::convergence_metrics(before, out.qtable);
      res.q_delta = metrics.q_delta;
      res.policy_delta = metrics.policy_delta;
      out.episodes.push_back(res);
      if (retain) out.retained_logs.emplace(ep, std::move(log));
    } catch (const std::exception& ex) {
      out.aborted = true;
      out.error = ex.what();
      break;
    }
  }
  return out;
}

}  // namespace eabm::sim
