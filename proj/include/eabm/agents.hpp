#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "eabm/book.hpp"
#include "eabm/params.hpp"
#include "eabm/rng.hpp"

namespace eabm::agents {

// Inverse-CDF draw from the Pareto density a*x_m^a / x^(a+1), x >= x_m,
// floored to integer shares and capped to guard the unbounded tail.
inline uint64_t sample_power_law(double x_m, double alpha, double u, uint64_t cap = 10000000) {
  if (x_m < 1.0) throw std::invalid_argument("sample_power_law: x_m < 1");
  if (alpha <= 0.0) throw std::invalid_argument("sample_power_law: alpha <= 0");
  if (u <= 0.0 || u >= 1.0) throw std::invalid_argument("sample_power_law: u outside (0,1)");
  double x = x_m * std::pow(u, -1.0 / alpha);
  double capped = std::min(x, static_cast<double>(cap));
  return static_cast<uint64_t>(std::floor(capped));
}

struct FundamentalistState {
  double fundamental_price = 0.0;  // m0 * exp(x), x ~ N(0, sigma_f^2); constant per session
};

struct ChartistState {
  double ewma = 0.0;    // moving average of the mid-price
  double lambda = 0.0;  // forgetting factor ~ U(lambda_min, lambda_max), per session
};

struct LpState {
  std::map<uint64_t, uint64_t> open_orders;  // order id -> placed_at ms
};

struct MarketOrderIntent {
  Side side;        // aggressor side: Bid buys, Ask sells
  uint64_t volume;
  double x_m;       // active branch of the minimum-volume rule (for diagnostics)
};

struct LimitOrderIntent {
  Side side;
  int64_t price;
  uint64_t volume;
};

namespace detail {

// Volume tail exponent under rho = (ask - bid)/total: a thicker contra side
// lowers alpha and fattens the volume tail (larger orders into the extra
// liquidity); a thicker same side raises it.
inline double lt_alpha(Side side, double rho, double nu) {
  return side == Side::Bid ? 1.0 - rho / nu : 1.0 + rho / nu;
}

}  // namespace detail

// Sell when the fundamental value sits below mid by more than half the
// spread, buy when above; the half-spread band keeps activation asynchronous
// and prevents trading through the fundamental value.
inline std::optional<MarketOrderIntent> fundamentalist_action(const FundamentalistState& state,
                                                              const BookStats& stats,
                                                              const AbmParams& params,
                                                              double u_volume) {
  if (!stats.two_sided()) return std::nullopt;
  double m = *stats.mid;
  double s = *stats.spread;
  Side side;
  if (state.fundamental_price < m - 0.5 * s)
    side = Side::Ask;
  else if (state.fundamental_price > m + 0.5 * s)
    side = Side::Bid;
  else
    return std::nullopt;
  double rho = stats.imbalance.value_or(0.0);
  double x_m = std::fabs(state.fundamental_price - m) <= params.delta * m ? 20.0 : 50.0;
  double alpha = detail::lt_alpha(side, rho, params.nu);
  uint64_t vol = sample_power_law(x_m, alpha, u_volume, params.volume_cap);
  return MarketOrderIntent{side, vol, x_m};
}

// The moving average is refreshed on every delivery before the decision. The
// printed update m += lambda*(m_bar - m_mid) diverges from the mid-price, so
// the convergent form is the default; the printed form stays available behind
// the fidelity flag.
inline void chartist_update_ewma(ChartistState& state, double mid, bool printed_form) {
  if (printed_form)
    state.ewma = state.ewma + state.lambda * (state.ewma - mid);
  else
    state.ewma = state.ewma + state.lambda * (mid - state.ewma);
}

inline std::optional<MarketOrderIntent> chartist_action(ChartistState& state,
                                                        const BookStats& stats,
                                                        const AbmParams& params,
                                                        double u_volume) {
  if (!stats.two_sided()) return std::nullopt;
  double m = *stats.mid;
  double s = *stats.spread;
  chartist_update_ewma(state, m, params.ewma_printed_form);
  Side side;
  if (state.ewma > m + 0.5 * s)
    side = Side::Ask;
  else if (state.ewma < m - 0.5 * s)
    side = Side::Bid;
  else
    return std::nullopt;
  double rho = stats.imbalance.value_or(0.0);
  double x_m = std::fabs(state.ewma - m) <= params.delta * m ? 20.0 : 50.0;
  double alpha = detail::lt_alpha(side, rho, params.nu);
  uint64_t vol = sample_power_law(x_m, alpha, u_volume, params.volume_cap);
  return MarketOrderIntent{side, vol, x_m};
}

enum class LpPhase { Init, Live };

// Liquidity-provider placement. With rho = (ask - bid)/total, the side draw
// favours the thin side: an ask lands with probability (1 - rho)/2, so on
// average liquidity goes where there is least. The price offset eta is Gamma
// with shape equal to the spread and rate chosen so the mean is
// s*exp(+rho/kappa) for bids and s*exp(-rho/kappa) for asks: bids move away
// from the best when the contra (ask) side is thicker (strategic effect) and
// asks move closer (competition effect). The volume exponent mirrors the
// taker rule. During initialisation, placements inside the initial spread
// are suppressed.
//
// GammaDraw: callable (shape, rate) -> eta sample.
//
// Each price formula needs only the contra best (asks anchor on the best bid
// and vice versa), and at rho = +-1 the side draw selects exactly the
// computable direction, so providers refill a one-sided book toward the
// surviving side with the degenerate spread treated as one tick.
template <typename GammaDraw>
std::optional<LimitOrderIntent> lp_action(const BookStats& stats, const AbmParams& params,
                                          LpPhase phase, int64_t init_bid, int64_t init_ask,
                                          double u_side, GammaDraw&& gamma_draw, double u_volume) {
  if (!stats.best_bid && !stats.best_ask) return std::nullopt;
  double rho = stats.imbalance.value_or(0.0);

  Side side = u_side < 0.5 * (1.0 - rho) ? Side::Ask : Side::Bid;
  if (side == Side::Ask && !stats.best_bid) return std::nullopt;
  if (side == Side::Bid && !stats.best_ask) return std::nullopt;

  double shape = stats.two_sided() ? static_cast<double>(*stats.best_ask - *stats.best_bid) : 1.0;
  if (shape <= 0.0) shape = 1.0;  // degenerate locked book guard
  double rate = side == Side::Bid ? std::exp(-rho / params.kappa) : std::exp(rho / params.kappa);
  double eta = gamma_draw(shape, rate);
  int64_t offset = static_cast<int64_t>(std::floor(eta));

  int64_t price;
  if (side == Side::Ask)
    price = *stats.best_bid + 1 + offset;
  else
    price = *stats.best_ask - 1 - offset;
  if (price < 1) price = 1;

  if (phase == LpPhase::Init && price > init_bid && price < init_ask) return std::nullopt;

  double alpha = side == Side::Bid ? 1.0 - rho / params.nu : 1.0 + rho / params.nu;
  uint64_t vol = sample_power_law(5.0, alpha, u_volume, params.volume_cap);
  return LimitOrderIntent{side, price, vol};
}

// Orders older than phi (strictly) are returned for cancellation and dropped
// from the open set. Map order keeps the cancellation sequence deterministic.
inline std::vector<uint64_t> cancel_stale(LpState& state, uint64_t now_ms, uint64_t phi_ms) {
  std::vector<uint64_t> stale;
  for (auto it = state.open_orders.begin(); it != state.open_orders.end();) {
    if (now_ms > it->second && now_ms - it->second > phi_ms) {
      stale.push_back(it->first);
      it = state.open_orders.erase(it);
    } else {
      ++it;
    }
  }
  return stale;
}

}  // namespace eabm::agents
