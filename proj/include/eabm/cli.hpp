#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eabm/calibrate.hpp"
#include "eabm/facts.hpp"
#include "eabm/feed.hpp"
#include "eabm/feed_udp.hpp"
#include "eabm/grid.hpp"
#include "eabm/ingest.hpp"
#include "eabm/io.hpp"
#include "eabm/manifest.hpp"
#include "eabm/moments.hpp"
#include "eabm/sim.hpp"

namespace eabm::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitBadConfig = 2;

namespace detail {

inline fs::path default_out_root() {
  const char* env = std::getenv("ABM_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

inline fs::path resolve_out(const std::string& out) {
  fs::path p = out.empty() ? default_out_root() : fs::path(out);
  fs::create_directories(p);
  return p;
}

struct LoadedConfig {
  AbmParams abm;
  std::optional<RlParams> rl;
  config::KvMap kv;
};

inline LoadedConfig load_config(const std::string& path) {
  LoadedConfig out;
  if (path.empty()) return out;  // calibrated defaults
  out.kv = config::parse_kv_file(path);
  out.abm = config::abm_from_kv(out.kv);
  out.rl = config::rl_from_kv(out.kv);
  return out;
}

inline std::vector<double> read_returns(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open returns file: " + path.string());
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!line.empty() && (std::isalpha(line[0]) || line[0] == '#')) continue;  // header/comment
    out.push_back(std::stod(line));
  }
  if (out.empty()) throw std::runtime_error("returns file is empty: " + path.string());
  return out;
}

inline void write_returns(const fs::path& path, const std::vector<double>& r) {
  std::ostringstream os;
  os << "return\n";
  for (double v : r) os << io::fmt(v) << '\n';
  io::write_file(path, os.str());
}

inline void write_moments_csv(const fs::path& path, const moments::MomentVector& mv) {
  std::ostringstream os;
  os << "moment,value\n";
  auto arr = mv.as_array();
  for (size_t i = 0; i < arr.size(); ++i)
    os << moments::MomentVector::names()[i] << ',' << io::fmt(arr[i]) << '\n';
  io::write_file(path, os.str());
}

inline void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) os << (c ? "," : "") << io::fmt(m(r, c));
    os << '\n';
  }
  io::write_file(path, os.str());
}

inline void write_session_outputs(const fs::path& out, const sim::SessionLog& log, bool binary_feed) {
  {
    std::ostringstream os;
    io::write_events_csv(os, log.events);
    io::write_file(out / "events.csv", os.str());
  }
  {
    std::ostringstream os;
    io::write_stats_csv(os, log.stats);
    io::write_file(out / "stats.csv", os.str());
  }
  {
    std::ostringstream os;
    io::write_transactions_csv(os, log.transactions);
    io::write_file(out / "transactions.csv", os.str());
  }
  {
    std::ostringstream os;
    io::write_depth_csv(os, log.depth);
    io::write_file(out / "depth.csv", os.str());
  }
  if (binary_feed) {
    std::string buf;
    buf.reserve(log.events.size() * feed::kRecordLength);
    for (const auto& e : log.events) {
      auto rec = feed::encode(e);
      buf.append(reinterpret_cast<const char*>(rec.data()), rec.size());
    }
    io::write_file(out / "events.bin", buf);
  }
}

inline manifest::RunManifest make_manifest(const std::string& command, const AbmParams& abm,
                                           const std::optional<RlParams>& rl,
                                           std::vector<uint64_t> seeds) {
  manifest::RunManifest m;
  m.command = command;
  std::istringstream kv(config::to_kv(abm, rl));
  for (const auto& [k, v] : config::parse_kv(kv)) m.config[k] = v;
  m.seeds = std::move(seeds);
  m.git_describe = manifest::git_describe();
  m.clock["tick_ms"] = std::to_string(abm.tick_ms);
  m.clock["session_ms"] = std::to_string(abm.session_ms);
  return m;
}

}  // namespace detail

// ---- subcommand implementations ----

inline constexpr uint64_t kSeedUnset = ~0ULL;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = kSeedUnset;  // unset = take the config seed
  int jobs = 1;
  uint64_t tick_ms = 0;  // 0 = keep config value
};

namespace detail {
inline uint64_t resolve_seed(const CommonOpts& c, const LoadedConfig& cfg) {
  return c.seed == kSeedUnset ? cfg.abm.seed : c.seed;
}
}  // namespace detail

inline int cmd_simulate(const CommonOpts& c, bool binary_feed, const std::string& feed_host,
                        uint16_t feed_port) {
  auto loaded = detail::load_config(c.config_path);
  AbmParams p = loaded.abm;
  uint64_t seed = detail::resolve_seed(c, loaded);
  p.seed = seed;
  if (c.tick_ms) p.tick_ms = c.tick_ms;
  auto cfg = sim::SessionConfig::with_defaults(p, loaded.rl);
  sim::SessionLog log = sim::run_session(cfg, seed);

  fs::path out = detail::resolve_out(c.out_dir);
  detail::write_session_outputs(out, log, binary_feed);
  if (!feed_host.empty()) {
    feed::UdpPublisher pub(feed_host, feed_port);
    for (const auto& e : log.events) pub.publish(e);
  }
  if (log.rl) {
    std::ostringstream os;
    io::write_episodes_csv(os, {*log.rl});
    io::write_file(out / "episodes.csv", os.str());
  }
  auto m = detail::make_manifest("simulate", p, loaded.rl, {seed});
  m.add_output(out, "events.csv");
  m.add_output(out, "stats.csv");
  m.add_output(out, "transactions.csv");
  m.add_output(out, "depth.csv");
  if (binary_feed) m.add_output(out, "events.bin");
  if (log.rl) m.add_output(out, "episodes.csv");
  m.write(out);
  std::cout << "simulate: " << log.events.size() << " events, "
            << (log.liquidity_crash ? "liquidity crash" : "clean session") << "\n";
  return kExitOk;
}

inline int cmd_train_rl(const CommonOpts& c, int episodes) {
  auto loaded = detail::load_config(c.config_path);
  AbmParams p = loaded.abm;
  uint64_t seed = detail::resolve_seed(c, loaded);
  p.seed = seed;
  if (c.tick_ms) p.tick_ms = c.tick_ms;
  RlParams rl = loaded.rl.value_or(RlParams{});
  if (episodes > 0) rl.episodes = episodes;
  auto cfg = sim::SessionConfig::with_defaults(p, rl);
  sim::TrainResult res = sim::train_rl(cfg, rl.episodes);

  fs::path out = detail::resolve_out(c.out_dir);
  {
    std::ostringstream os;
    io::write_episodes_csv(os, res.episodes);
    io::write_file(out / "episodes.csv", os.str());
  }
  {
    std::ostringstream os;
    rl::save_qtable(os, res.qtable);
    io::write_file(out / "qtable.csv", os.str());
  }
  {
    std::ostringstream os;
    rl::export_policy(os, res.qtable, rl);
    io::write_file(out / "policy.csv", os.str());
  }
  auto m = detail::make_manifest("train-rl", p, rl, {seed});
  for (const auto& [ep, log] : res.retained_logs) {
    std::string name = "events_ep" + std::to_string(ep) + ".csv";
    std::ostringstream os;
    io::write_events_csv(os, log.events);
    io::write_file(out / name, os.str());
    m.add_output(out, name);
  }
  m.add_output(out, "episodes.csv");
  m.add_output(out, "qtable.csv");
  m.add_output(out, "policy.csv");
  m.write(out);
  if (res.aborted) {
    std::cerr << "train-rl: aborted after " << res.episodes.size() << " episodes: " << res.error
              << " (partial results saved)\n";
    return kExitFailure;
  }
  std::cout << "train-rl: " << res.episodes.size() << " episodes, "
            << res.qtable.state_count() << " states discovered\n";
  return kExitOk;
}

inline int cmd_calibrate(const CommonOpts& c, const std::string& data_path, int iters, double xi,
                         size_t bootstrap_window, size_t bootstrap_samples, int replications) {
  auto loaded = detail::load_config(c.config_path);
  AbmParams base = loaded.abm;
  uint64_t seed = detail::resolve_seed(c, loaded);
  if (c.tick_ms) base.tick_ms = c.tick_ms;
  std::vector<double> empirical = detail::read_returns(data_path);

  auto wm = moments::moving_block_bootstrap_cov(empirical, bootstrap_window, bootstrap_samples, seed);
  moments::MomentVector me = moments::estimate_moments(empirical, empirical);
  auto me_arr = me.as_array();

  auto simulate_fn = [&](const std::array<double, 6>& theta,
                         uint64_t rep_seed) -> std::optional<moments::MomentVector> {
    AbmParams p = grid::apply_theta(base, theta);
    p.validate();
    auto cfg = sim::SessionConfig::with_defaults(p);
    cfg.record_events = false;
    sim::SessionLog log = sim::run_session(cfg, rep_seed);
    if (log.liquidity_crash) return std::nullopt;
    auto r = moments::micro_log_returns(log.micro_series());
    if (r.size() < 100) return std::nullopt;
    return moments::estimate_moments(r, empirical);
  };
  calibrate::Objective objective = [&](const std::vector<double>& x) {
    std::array<double, 6> theta;
    std::copy_n(x.begin(), 6, theta.begin());
    return moments::smd_objective(theta, me_arr, wm.W, replications, simulate_fn);
  };

  auto bounds = calibrate::Bounds::model_defaults();
  auto result = calibrate::nmta_run(objective, bounds, iters, xi, std::nullopt, seed);

  fs::path out = detail::resolve_out(c.out_dir);
  {
    std::ostringstream os;
    os << "iteration,step,tau,best_f,simplex_spread";
    for (size_t v = 0; v < 7; ++v)
      for (size_t d = 0; d < 6; ++d) os << ",v" << v << "_p" << d;
    os << '\n';
    for (const auto& tp : result.trace) {
      os << tp.iteration << ',' << calibrate::to_string(tp.kind) << ',' << io::fmt(tp.tau) << ','
         << io::fmt(tp.best_f) << ',' << io::fmt(tp.spread);
      for (const auto& v : tp.vertices)
        for (double x : v) os << ',' << io::fmt(x);
      os << '\n';
    }
    io::write_file(out / "trace.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "parameter,value\n";
    const char* names[6] = {"n_chartists", "n_fundamentalists", "delta", "kappa", "nu", "sigma_f"};
    for (size_t i = 0; i < 6; ++i) os << names[i] << ',' << io::fmt(result.best_x[i]) << '\n';
    os << "objective," << io::fmt(result.best_f) << '\n';
    io::write_file(out / "theta.csv", os.str());
  }
  detail::write_matrix_csv(out / "weights.csv", wm.W);
  detail::write_matrix_csv(out / "moment_cov.csv", wm.cov);
  auto m = detail::make_manifest("calibrate", base, std::nullopt, {seed});
  m.config["condition_number"] = io::fmt(wm.condition_number);
  m.add_output(out, "trace.csv");
  m.add_output(out, "theta.csv");
  m.add_output(out, "weights.csv");
  m.add_output(out, "moment_cov.csv");
  m.write(out);
  std::cout << "calibrate: best objective " << result.best_f << "\n";
  return kExitOk;
}

inline std::array<std::vector<double>, 6> parse_grid_spec(const config::KvMap& kv) {
  auto spec = grid::GridSpec::default_spec().values;
  const char* keys[6] = {"n_chartists", "n_fundamentalists", "delta", "kappa", "nu", "sigma_f"};
  for (size_t i = 0; i < 6; ++i) {
    auto it = kv.find(keys[i]);
    if (it == kv.end()) continue;
    std::vector<double> vals;
    std::istringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (!vals.empty()) spec[i] = vals;
  }
  return spec;
}

inline int cmd_sensitivity(const CommonOpts& c, const std::string& grid_path,
                           const std::string& data_path) {
  auto loaded = detail::load_config(c.config_path);
  AbmParams base = loaded.abm;
  uint64_t seed = detail::resolve_seed(c, loaded);
  if (c.tick_ms) base.tick_ms = c.tick_ms;
  grid::GridSpec spec;
  spec.values = grid_path.empty() ? grid::GridSpec::default_spec().values
                                  : parse_grid_spec(config::parse_kv_file(grid_path));
  std::vector<double> empirical = detail::read_returns(data_path);

  auto result = grid::run_sensitivity_grid(base, spec, empirical, seed, c.jobs);

  fs::path out = detail::resolve_out(c.out_dir);
  {
    std::ostringstream os;
    os << "index,n_chartists,n_fundamentalists,delta,kappa,nu,sigma_f,ok";
    for (auto* n : moments::MomentVector::names()) os << ',' << n;
    os << ",error\n";
    for (size_t i = 0; i < result.rows.size(); ++i) {
      const auto& row = result.rows[i];
      os << i;
      for (double t : row.theta) os << ',' << io::fmt(t);
      os << ',' << (row.ok ? 1 : 0);
      auto arr = row.moments.as_array();
      for (double v : arr) os << ',' << io::fmt(row.ok ? v : std::numeric_limits<double>::quiet_NaN());
      os << ',' << row.error << '\n';
    }
    io::write_file(out / "grid.csv", os.str());
  }
  {
    auto marg = grid::marginals(result);
    std::ostringstream os;
    os << "parameter,value,count";
    for (auto* n : moments::MomentVector::names()) os << ",mean_" << n;
    os << '\n';
    const char* names[6] = {"n_chartists", "n_fundamentalists", "delta", "kappa", "nu", "sigma_f"};
    for (size_t pidx = 0; pidx < 6; ++pidx)
      for (const auto& cell : marg[pidx]) {
        os << names[pidx] << ',' << io::fmt(cell.value) << ',' << cell.count;
        for (double v : cell.mean_moments) os << ',' << io::fmt(v);
        os << '\n';
      }
    io::write_file(out / "marginals.csv", os.str());
  }
  auto m = detail::make_manifest("sensitivity", base, std::nullopt, {seed});
  m.add_output(out, "grid.csv");
  m.add_output(out, "marginals.csv");
  m.write(out);
  size_t failures = 0;
  for (const auto& r : result.rows)
    if (!r.ok) ++failures;
  std::cout << "sensitivity: " << result.rows.size() << " cells, " << failures << " failed\n";
  return kExitOk;
}

inline int cmd_moments(const CommonOpts& c, const std::string& sim_path, const std::string& data_path,
                       bool bootstrap, size_t window, size_t samples) {
  std::vector<double> sim_returns = detail::read_returns(sim_path);
  std::vector<double> empirical = detail::read_returns(data_path);
  auto mv = moments::estimate_moments(sim_returns, empirical);
  fs::path out = detail::resolve_out(c.out_dir);
  detail::write_moments_csv(out / "moments.csv", mv);
  uint64_t seed = c.seed == kSeedUnset ? 1 : c.seed;
  manifest::RunManifest m;
  m.command = "moments";
  m.seeds = {seed};
  m.git_describe = manifest::git_describe();
  if (bootstrap) {
    auto wm = moments::moving_block_bootstrap_cov(empirical, window, samples, seed);
    detail::write_matrix_csv(out / "weights.csv", wm.W);
    detail::write_matrix_csv(out / "moment_cov.csv", wm.cov);
    m.config["condition_number"] = io::fmt(wm.condition_number);
    m.add_output(out, "weights.csv");
    m.add_output(out, "moment_cov.csv");
  }
  m.add_output(out, "moments.csv");
  m.write(out);
  std::cout << "moments: written\n";
  return kExitOk;
}

inline int cmd_facts(const CommonOpts& c, const std::string& in_dir, size_t max_lag) {
  fs::path in(in_dir);
  // stats.csv supplies the micro path and quotes; transactions.csv the trades
  std::ifstream stats_in(in / "stats.csv");
  if (!stats_in) {
    std::cerr << "facts: cannot open " << (in / "stats.csv") << "\n";
    return kExitBadConfig;
  }
  std::vector<double> micro;
  std::vector<facts::QuoteTick> quotes;
  std::string line;
  std::getline(stats_in, line);
  while (std::getline(stats_in, line)) {
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    double bb = std::stod(cells[2]), ba = std::stod(cells[3]);
    double mc = std::stod(cells[7]);
    if (!std::isnan(mc)) micro.push_back(mc);
    // shift one tick so same-timestamp quotes count as post-trade
    if (!std::isnan(bb) && !std::isnan(ba))
      quotes.push_back(facts::QuoteTick{std::stoull(cells[1]) + 1, bb, ba});
  }
  std::vector<facts::TradeTick> trades;
  std::vector<facts::ImpactObservation> impacts;
  std::vector<int> true_signs;
  {
    std::ifstream txn_in(in / "transactions.csv");
    if (!txn_in) {
      std::cerr << "facts: cannot open " << (in / "transactions.csv") << "\n";
      return kExitBadConfig;
    }
    std::getline(txn_in, line);
    while (std::getline(txn_in, line)) {
      std::istringstream row(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(row, cell, ',')) cells.push_back(cell);
      facts::TradeTick t{std::stoull(cells[0]), std::stod(cells[3]), std::stod(cells[2])};
      trades.push_back(t);
      int sign = cells[1] == "bid" ? 1 : -1;
      true_signs.push_back(sign);
      impacts.push_back(facts::ImpactObservation{sign, t.volume, std::stod(cells[4]), std::stod(cells[5])});
    }
  }

  fs::path out = detail::resolve_out(c.out_dir);
  auto returns = moments::micro_log_returns(micro);
  size_t lag = std::min(max_lag, returns.size() / 2);
  auto r_acf = facts::acf(returns, lag);
  std::vector<double> abs_r(returns.size());
  for (size_t i = 0; i < returns.size(); ++i) abs_r[i] = std::fabs(returns[i]);
  auto a_acf = facts::acf(abs_r, lag);

  auto classified = facts::lee_ready_classify(trades, quotes);
  std::vector<double> signs(classified.trades.size());
  for (size_t i = 0; i < classified.trades.size(); ++i) signs[i] = classified.trades[i].sign;
  std::vector<double> s_acf;
  if (signs.size() > 2 * lag + 10) s_acf = facts::acf(signs, lag);

  {
    std::ostringstream os;
    os << "lag,returns_acf,abs_returns_acf,trade_sign_acf\n";
    for (size_t k = 0; k <= lag; ++k) {
      os << k << ',' << io::fmt(r_acf[k]) << ',' << io::fmt(a_acf[k]) << ','
         << (k < s_acf.size() ? io::fmt(s_acf[k]) : "nan") << '\n';
    }
    io::write_file(out / "acf.csv", os.str());
  }
  {
    auto curves = facts::price_impact_curves(impacts);
    std::ostringstream os;
    os << "side,bin,mean_volume,mean_impact,count\n";
    for (int side = 0; side < 2; ++side) {
      const auto& curve = side == 0 ? curves.buyer : curves.seller;
      for (size_t b = 0; b < curve.bins.size(); ++b)
        os << (side == 0 ? "buyer" : "seller") << ',' << b << ',' << io::fmt(curve.bins[b].mean_volume)
           << ',' << io::fmt(curve.bins[b].mean_impact) << ',' << curve.bins[b].count << '\n';
    }
    io::write_file(out / "impact.csv", os.str());
  }
  {
    std::ifstream depth_in(in / "depth.csv");
    std::vector<std::pair<std::vector<uint64_t>, std::vector<uint64_t>>> snaps;
    if (depth_in) {
      std::getline(depth_in, line);
      while (std::getline(depth_in, line)) {
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        std::vector<uint64_t> b, a;
        for (int i = 0; i < sim::kDepthLevels; ++i) b.push_back(std::stoull(cells[1 + i]));
        for (int i = 0; i < sim::kDepthLevels; ++i)
          a.push_back(std::stoull(cells[1 + sim::kDepthLevels + i]));
        snaps.emplace_back(b, a);
      }
    }
    if (!snaps.empty()) {
      auto [bid, ask] = facts::depth_profile_average(snaps);
      std::ostringstream os;
      os << "level,bid_mean_volume,ask_mean_volume\n";
      for (size_t i = 0; i < bid.size(); ++i)
        os << i + 1 << ',' << io::fmt(bid[i]) << ',' << io::fmt(ask[i]) << '\n';
      io::write_file(out / "depth_profile.csv", os.str());
    }
  }
  {
    auto tails = facts::extreme_tails(returns);
    std::ostringstream os;
    os << "tail,alpha,count\n";
    os << "upper," << io::fmt(tails.alpha_upper) << ',' << tails.upper.size() << '\n';
    os << "lower," << io::fmt(tails.alpha_lower) << ',' << tails.lower.size() << '\n';
    io::write_file(out / "tails.csv", os.str());
  }
  {
    size_t agree = 0;
    for (size_t j = 0; j < classified.trades.size(); ++j)
      if (classified.trades[j].sign == true_signs[classified.source_index[j]]) ++agree;
    std::ostringstream os;
    os << "classified,dropped,agree_with_aggressor\n";
    os << classified.trades.size() << ',' << classified.dropped << ',' << agree << '\n';
    io::write_file(out / "classification.csv", os.str());
  }
  manifest::RunManifest m;
  m.command = "facts";
  m.git_describe = manifest::git_describe();
  m.add_output(out, "acf.csv");
  m.add_output(out, "impact.csv");
  m.add_output(out, "tails.csv");
  m.add_output(out, "classification.csv");
  m.write(out);
  std::cout << "facts: written\n";
  return kExitOk;
}

inline int cmd_ingest(const CommonOpts& c, const std::string& in_path, const std::string& map_path,
                      const std::string& out_path) {
  ingest::TaqColumnMap map;
  uint64_t session_start = 9 * 3600000ULL, session_end = 16 * 3600000ULL + 50 * 60000ULL;
  int drop_first = 1;
  std::set<std::string> allowed = {"AT"};
  if (!map_path.empty()) {
    std::ifstream mf(map_path);
    if (!mf) {
      std::cerr << "ingest: cannot open mapping file " << map_path << "\n";
      return kExitBadConfig;
    }
    nlohmann::json j = nlohmann::json::parse(mf);
    if (j.contains("columns")) {
      auto& cols = j["columns"];
      auto pick = [&](const char* k, std::string& tgt) {
        if (cols.contains(k)) tgt = cols[k].get<std::string>();
      };
      pick("timestamp", map.timestamp);
      pick("kind", map.kind);
      pick("trade_type", map.trade_type);
      pick("price", map.price);
      pick("volume", map.volume);
      pick("bid", map.bid);
      pick("ask", map.ask);
      pick("bid_vol", map.bid_vol);
      pick("ask_vol", map.ask_vol);
    }
    if (j.contains("session_start_ms")) session_start = j["session_start_ms"].get<uint64_t>();
    if (j.contains("session_end_ms")) session_end = j["session_end_ms"].get<uint64_t>();
    if (j.contains("drop_first_minutes")) drop_first = j["drop_first_minutes"].get<int>();
    if (j.contains("allowed_trade_types")) {
      allowed.clear();
      for (const auto& t : j["allowed_trade_types"]) allowed.insert(t.get<std::string>());
    }
  }
  std::ifstream in(in_path);
  if (!in) {
    std::cerr << "ingest: cannot open input " << in_path << "\n";
    return kExitBadConfig;
  }
  auto records = ingest::parse_taq_csv(in, map);
  auto filtered = ingest::filter_window(records, session_start, session_end, drop_first, allowed);
  if (filtered.empty_result_warning) std::cerr << "ingest: warning, no records survived the window filter\n";
  auto quotes_done = ingest::compact_quotes(filtered.records);
  auto done = ingest::compact_trades(quotes_done);

  fs::path out_file(out_path);
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  {
    std::ostringstream os;
    os << "timestamp_ms,kind,trade_type,price,volume,bid,ask,bid_vol,ask_vol\n";
    for (const auto& r : done.records) {
      os << r.timestamp_ms << ',' << (r.kind == ingest::TaqKind::Trade ? "trade" : "quote") << ','
         << r.trade_type << ',' << io::fmt(r.price) << ',' << io::fmt(r.volume) << ','
         << io::fmt(r.bid) << ',' << io::fmt(r.ask) << ',' << io::fmt(r.bid_vol) << ','
         << io::fmt(r.ask_vol) << '\n';
    }
    io::write_file(out_file, os.str());
  }
  // micro-price log-returns from the cleaned quotes, for the moments pipeline
  std::vector<double> micro;
  for (const auto& r : done.records) {
    if (r.kind != ingest::TaqKind::Quote) continue;
    double va = r.ask_vol, vb = r.bid_vol;
    if (r.bid <= 0.0 || r.ask <= 0.0) continue;
    double m = va + vb > 0.0 ? (va * r.ask + vb * r.bid) / (va + vb) : 0.5 * (r.ask + r.bid);
    micro.push_back(m);
  }
  if (micro.size() >= 2) {
    auto returns = moments::micro_log_returns(micro);
    fs::path rp = out_file.parent_path() / (out_file.stem().string() + "_returns.csv");
    detail::write_returns(rp, returns);
  }
  std::cout << "ingest: " << done.records.size() << " records kept, " << filtered.dropped_window
            << " outside window, " << filtered.dropped_type << " wrong type\n";
  return kExitOk;
}

inline int cmd_quantiles(const CommonOpts& c, int runs) {
  auto loaded = detail::load_config(c.config_path);
  AbmParams p = loaded.abm;
  uint64_t seed = detail::resolve_seed(c, loaded);
  if (c.tick_ms) p.tick_ms = c.tick_ms;
  std::vector<int64_t> spreads, volumes;
  for (int r = 0; r < runs; ++r) {
    auto cfg = sim::SessionConfig::with_defaults(p);
    cfg.record_events = false;
    sim::SessionLog log = sim::run_session(cfg, seed + static_cast<uint64_t>(r));
    for (const auto& s : log.stats) {
      if (!std::isnan(s.spread)) spreads.push_back(static_cast<int64_t>(std::llround(s.spread)));
      if (s.best_bid_volume > 0) volumes.push_back(static_cast<int64_t>(s.best_bid_volume));
    }
  }
  fs::path out = detail::resolve_out(c.out_dir);
  auto write_table = [&](const std::string& name, const rl::QuantileTable& t) {
    std::ostringstream os;
    os << "state,upper_bound,probability\n";
    for (int k = 1; k <= t.n_states; ++k) {
      os << k << ',';
      if (k < t.n_states)
        os << t.breakpoints[static_cast<size_t>(k) - 1];
      else
        os << "inf";
      os << ',' << io::fmt(t.probabilities[static_cast<size_t>(k) - 1]) << '\n';
    }
    io::write_file(out / name, os.str());
  };
  manifest::RunManifest m = detail::make_manifest("quantiles", p, std::nullopt, {seed});
  m.config["runs"] = std::to_string(runs);
  for (int n : {5, 10}) {
    write_table("spread_states_" + std::to_string(n) + ".csv", rl::build_spread_states(spreads, n));
    write_table("volume_states_" + std::to_string(n) + ".csv", rl::build_volume_states(volumes, n));
    m.add_output(out, "spread_states_" + std::to_string(n) + ".csv");
    m.add_output(out, "volume_states_" + std::to_string(n) + ".csv");
  }
  m.write(out);
  std::cout << "quantiles: built from " << runs << " runs (" << spreads.size() << " spread samples)\n";
  return kExitOk;
}

// ---- dispatch ----

inline int dispatch(std::vector<std::string> args) {
  CLI::App app{"event-driven agent-based market simulator"};
  app.require_subcommand(1);

  CommonOpts opt;
  bool binary_feed = false;
  std::string feed_host;
  uint16_t feed_port = 9001;
  int episodes = 0;
  std::string data_path, grid_path, sim_path, in_path, map_path, out_file, in_dir;
  int iters = 100;
  double xi = 0.1;
  size_t window = 2000, samples = 1000, max_lag = 100;
  int replications = 5;
  bool bootstrap = false;
  int runs = 365;

  auto add_common = [&](CLI::App* c, bool with_config = true) {
    if (with_config) c->add_option("--config", opt.config_path, "key=value config file");
    c->add_option("--seed", opt.seed, "master seed");
    c->add_option("--out", opt.out_dir, "output directory (default ABM_OUT_DIR or .)");
    c->add_option("--jobs", opt.jobs, "worker threads for grid/replicate workloads");
    c->add_option("--tick-ms", opt.tick_ms, "virtual clock tick override");
  };

  auto* sim_cmd = app.add_subcommand("simulate", "run one session and write its logs");
  add_common(sim_cmd);
  sim_cmd->add_flag("--binary-feed", binary_feed, "also write the binary event feed");
  sim_cmd->add_option("--feed-host", feed_host, "publish encoded events over UDP to this host");
  sim_cmd->add_option("--feed-port", feed_port, "UDP feed port");

  auto* train_cmd = app.add_subcommand("train-rl", "train the execution agent across episodes");
  add_common(train_cmd);
  train_cmd->add_option("--episodes", episodes, "number of training episodes");

  auto* cal_cmd = app.add_subcommand("calibrate", "simulated minimum distance calibration");
  add_common(cal_cmd);
  cal_cmd->add_option("--data", data_path, "empirical returns file")->required();
  cal_cmd->add_option("--iters", iters, "optimizer iterations");
  cal_cmd->add_option("--xi", xi, "threshold-accepting step probability");
  cal_cmd->add_option("--window", window, "bootstrap window");
  cal_cmd->add_option("--samples", samples, "bootstrap samples");
  cal_cmd->add_option("--replications", replications, "objective Monte Carlo replications");

  auto* sens_cmd = app.add_subcommand("sensitivity", "parameter grid sweep");
  add_common(sens_cmd);
  sens_cmd->add_option("--grid", grid_path, "grid spec file (key=comma list)");
  sens_cmd->add_option("--data", data_path, "empirical returns file")->required();

  auto* mom_cmd = app.add_subcommand("moments", "estimate the moment vector of a return series");
  add_common(mom_cmd, false);
  mom_cmd->add_option("--sim", sim_path, "simulated returns file")->required();
  mom_cmd->add_option("--data", data_path, "empirical returns file")->required();
  mom_cmd->add_flag("--bootstrap", bootstrap, "also bootstrap the weight matrix");
  mom_cmd->add_option("--window", window, "bootstrap window");
  mom_cmd->add_option("--samples", samples, "bootstrap samples");

  auto* facts_cmd = app.add_subcommand("facts", "stylised-fact analytics over session logs");
  add_common(facts_cmd, false);
  facts_cmd->add_option("--in", in_dir, "simulate output directory")->required();
  facts_cmd->add_option("--max-lag", max_lag, "ACF maximum lag");

  auto* ingest_cmd = app.add_subcommand("ingest", "clean a user-supplied TAQ file");
  ingest_cmd->add_option("--in", in_path, "raw TAQ csv")->required();
  ingest_cmd->add_option("--map", map_path, "column mapping json");
  ingest_cmd->add_option("--out", out_file, "cleaned output csv")->required();

  auto* quant_cmd = app.add_subcommand("quantiles", "build RL state tables from model runs");
  add_common(quant_cmd);
  quant_cmd->add_option("--runs", runs, "number of calibrated-model runs");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!opt.config_path.empty() && !fs::exists(opt.config_path)) {
      std::cerr << "error: config file not found: " << opt.config_path << "\n";
      return kExitBadConfig;
    }
    if (sim_cmd->parsed()) return cmd_simulate(opt, binary_feed, feed_host, feed_port);
    if (train_cmd->parsed()) return cmd_train_rl(opt, episodes);
    if (cal_cmd->parsed()) return cmd_calibrate(opt, data_path, iters, xi, window, samples, replications);
    if (sens_cmd->parsed()) return cmd_sensitivity(opt, grid_path, data_path);
    if (mom_cmd->parsed()) return cmd_moments(opt, sim_path, data_path, bootstrap, window, samples);
    if (facts_cmd->parsed()) return cmd_facts(opt, in_dir, max_lag);
    if (ingest_cmd->parsed()) return cmd_ingest(opt, in_path, map_path, out_file);
    if (quant_cmd->parsed()) return cmd_quantiles(opt, runs);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace eabm::cli
