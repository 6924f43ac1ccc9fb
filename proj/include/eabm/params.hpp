#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace eabm {

// Full parameter vector of the agent-based model. Defaults are the calibrated
// values; fixed parameters carry the values they were fixed at.
struct AbmParams {
  int n_lp = 30;
  int n_chartists = 8;
  int n_fundamentalists = 6;
  double delta = 0.125;   // mid-price cut-off fraction selecting the minimum volume
  double kappa = 3.289;   // limit-order placement intensity
  double nu = 7.221;      // order-imbalance shape parameter, > 1
  double sigma_f = 0.041; // std of the log fundamental price
  double lambda_min = 0.0005;
  double lambda_max = 0.05;
  uint64_t phi_ms = 1000;      // resting-order age cutoff
  uint64_t session_ms = 25000; // trading time after initialisation
  int64_t m0 = 10000;
  int64_t s0 = 40;
  uint64_t seed = 1;
  uint64_t tick_ms = 50;        // virtual-clock advance per event-loop iteration
  int init_order_count = 1001;
  uint64_t volume_cap = 10000000;
  bool ewma_printed_form = false;  // fidelity flag: use the divergent EWMA update as printed

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("AbmParams: " + m); };
    // the 1..20 floor is the calibration bound; zero takers is a valid
    // diagnostic configuration (providers only)
    if (n_chartists < 0 || n_chartists > 20) fail("n_chartists outside [0,20]");
    if (n_fundamentalists < 0 || n_fundamentalists > 20) fail("n_fundamentalists outside [0,20]");
    if (delta < 0.0 || delta > 10.0) fail("delta outside [0,10]");
    if (kappa < 0.0) fail("kappa negative");
    if (nu < 1.5) fail("nu below 1.5");
    if (sigma_f < 0.0 || sigma_f > 0.05) fail("sigma_f outside [0,0.05]");
    if (n_lp < 1) fail("n_lp < 1");
    if (lambda_min <= 0.0 || lambda_max < lambda_min) fail("bad lambda range");
    if (tick_ms == 0 || session_ms == 0) fail("zero clock settings");
    if (init_order_count < 1) fail("init_order_count < 1");
    if (m0 < 1 || s0 < 2) fail("bad initial price settings");
  }
};

// Configuration of the optimal-execution learning agent.
struct RlParams {
  uint64_t x0 = 43000;   // parent order, shares
  int n_dp = 430;        // decision points in the schedule
  uint64_t t0_ms = 24500;
  int n_t = 5;
  int n_i = 5;
  int n_s = 5;
  int n_v = 5;
  double gamma = 1.0;
  double learn_rate = 0.1;
  int episodes = 1000;

  // Action multipliers are fixed at {0, 0.25, ..., 2.0}.
  static constexpr int kNumActions = 9;
  static double action_multiplier(int a) { return 0.25 * a; }
  double child_volume() const { return static_cast<double>(x0) / n_dp; }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("RlParams: " + m); };
    if (x0 == 0 || n_dp < 1) fail("bad parent order settings");
    if (n_t < 1 || n_i < 1 || n_s < 2 || n_v < 2) fail("bad state-space sizes");
    if (gamma < 0.0 || gamma > 1.0) fail("gamma outside [0,1]");
    if (learn_rate < 0.0 || learn_rate > 1.0) fail("learn_rate outside [0,1]");
    if (episodes < 1) fail("episodes < 1");
  }
};

namespace config {

using KvMap = std::map<std::string, std::string>;

inline KvMap parse_kv(std::istream& in) {
  KvMap kv;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

inline KvMap parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_kv(in);
}

namespace detail {

inline void set(const KvMap& kv, const char* key, double& out) {
  if (auto it = kv.find(key); it != kv.end()) out = std::stod(it->second);
}
inline void set(const KvMap& kv, const char* key, int& out) {
  if (auto it = kv.find(key); it != kv.end()) out = std::stoi(it->second);
}
inline void set(const KvMap& kv, const char* key, int64_t& out) {
  if (auto it = kv.find(key); it != kv.end()) out = std::stoll(it->second);
}
inline void set(const KvMap& kv, const char* key, uint64_t& out) {
  if (auto it = kv.find(key); it != kv.end()) out = std::stoull(it->second);
}
inline void set(const KvMap& kv, const char* key, bool& out) {
  if (auto it = kv.find(key); it != kv.end()) out = (it->second == "1" || it->second == "true");
}

}  // namespace detail

inline AbmParams abm_from_kv(const KvMap& kv) {
  AbmParams p;
  detail::set(kv, "n_lp", p.n_lp);
  detail::set(kv, "n_chartists", p.n_chartists);
  detail::set(kv, "n_fundamentalists", p.n_fundamentalists);
  detail::set(kv, "delta", p.delta);
  detail::set(kv, "kappa", p.kappa);
  detail::set(kv, "nu", p.nu);
  detail::set(kv, "sigma_f", p.sigma_f);
  detail::set(kv, "lambda_min", p.lambda_min);
  detail::set(kv, "lambda_max", p.lambda_max);
  detail::set(kv, "phi_ms", p.phi_ms);
  detail::set(kv, "session_ms", p.session_ms);
  detail::set(kv, "m0", p.m0);
  detail::set(kv, "s0", p.s0);
  detail::set(kv, "seed", p.seed);
  detail::set(kv, "tick_ms", p.tick_ms);
  detail::set(kv, "init_order_count", p.init_order_count);
  detail::set(kv, "volume_cap", p.volume_cap);
  detail::set(kv, "ewma_printed_form", p.ewma_printed_form);
  return p;
}

inline std::optional<RlParams> rl_from_kv(const KvMap& kv) {
  bool enabled = false;
  detail::set(kv, "rl_enabled", enabled);
  if (!enabled) return std::nullopt;
  RlParams r;
  detail::set(kv, "rl_x0", r.x0);
  detail::set(kv, "rl_n_dp", r.n_dp);
  detail::set(kv, "rl_t0_ms", r.t0_ms);
  detail::set(kv, "rl_n_t", r.n_t);
  detail::set(kv, "rl_n_i", r.n_i);
  detail::set(kv, "rl_n_s", r.n_s);
  detail::set(kv, "rl_n_v", r.n_v);
  detail::set(kv, "rl_gamma", r.gamma);
  detail::set(kv, "rl_learn_rate", r.learn_rate);
  detail::set(kv, "rl_episodes", r.episodes);
  return r;
}

inline std::string to_kv(const AbmParams& p, const std::optional<RlParams>& rl = std::nullopt) {
  std::ostringstream out;
  out.precision(17);
  out << "n_lp=" << p.n_lp << "\n"
      << "n_chartists=" << p.n_chartists << "\n"
      << "n_fundamentalists=" << p.n_fundamentalists << "\n"
      << "delta=" << p.delta << "\n"
      << "kappa=" << p.kappa << "\n"
      << "nu=" << p.nu << "\n"
      << "sigma_f=" << p.sigma_f << "\n"
      << "lambda_min=" << p.lambda_min << "\n"
      << "lambda_max=" << p.lambda_max << "\n"
      << "phi_ms=" << p.phi_ms << "\n"
      << "session_ms=" << p.session_ms << "\n"
      << "m0=" << p.m0 << "\n"
      << "s0=" << p.s0 << "\n"
      << "seed=" << p.seed << "\n"
      << "tick_ms=" << p.tick_ms << "\n"
      << "init_order_count=" << p.init_order_count << "\n"
      << "volume_cap=" << p.volume_cap << "\n"
      << "ewma_printed_form=" << (p.ewma_printed_form ? 1 : 0) << "\n";
  out << "rl_enabled=" << (rl ? 1 : 0) << "\n";
  if (rl) {
    out << "rl_x0=" << rl->x0 << "\n"
        << "rl_n_dp=" << rl->n_dp << "\n"
        << "rl_t0_ms=" << rl->t0_ms << "\n"
        << "rl_n_t=" << rl->n_t << "\n"
        << "rl_n_i=" << rl->n_i << "\n"
        << "rl_n_s=" << rl->n_s << "\n"
        << "rl_n_v=" << rl->n_v << "\n"
        << "rl_gamma=" << rl->gamma << "\n"
        << "rl_learn_rate=" << rl->learn_rate << "\n"
        << "rl_episodes=" << rl->episodes << "\n";
  }
  return out.str();
}

}  // namespace config
}  // namespace eabm
