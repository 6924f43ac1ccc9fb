#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace eabm::facts {

struct TradeTick {
  uint64_t timestamp = 0;
  double price = 0.0;
  double volume = 0.0;
};

struct QuoteTick {
  uint64_t timestamp = 0;
  double bid = 0.0;
  double ask = 0.0;
};

struct ClassifiedTrade {
  uint64_t timestamp = 0;
  double price = 0.0;
  double volume = 0.0;
  int sign = 0;  // +1 buy, -1 sell
};

struct ClassificationResult {
  std::vector<ClassifiedTrade> trades;
  std::vector<size_t> source_index;  // position of each classified trade in the input
  size_t dropped = 0;                // no quote and no tick context
};

// Lee-Ready: quote rule against the prevailing mid, tick rule at the mid
// (previous trade price, then the last different price).
inline ClassificationResult lee_ready_classify(const std::vector<TradeTick>& trades,
                                               const std::vector<QuoteTick>& quotes) {
  ClassificationResult out;
  size_t qi = 0;
  std::optional<double> prevailing_mid;
  std::vector<double> history;
  for (size_t idx = 0; idx < trades.size(); ++idx) {
    const auto& t = trades[idx];
    while (qi < quotes.size() && quotes[qi].timestamp <= t.timestamp) {
      prevailing_mid = 0.5 * (quotes[qi].bid + quotes[qi].ask);
      ++qi;
    }
    int sign = 0;
    if (prevailing_mid) {
      if (t.price > *prevailing_mid)
        sign = 1;
      else if (t.price < *prevailing_mid)
        sign = -1;
    }
    if (sign == 0) {
      for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (*it == t.price) continue;  // walk to the last different price
        sign = t.price > *it ? 1 : -1;
        break;
      }
    }
    history.push_back(t.price);
    if (sign == 0) {
      ++out.dropped;
      continue;
    }
    out.trades.push_back(ClassifiedTrade{t.timestamp, t.price, t.volume, sign});
    out.source_index.push_back(idx);
  }
  return out;
}

// Biased sample autocorrelation, normalised by the lag-0 autocovariance.
inline std::vector<double> acf(const std::vector<double>& x, size_t max_lag) {
  const size_t n = x.size();
  if (n <= max_lag) throw std::invalid_argument("acf: series shorter than max_lag");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  if (c0 <= 0.0) throw std::invalid_argument("acf: constant series");
  std::vector<double> out(max_lag + 1);
  for (size_t k = 0; k <= max_lag; ++k) {
    double ck = 0.0;
    for (size_t t = k; t < n; ++t) ck += (x[t] - mean) * (x[t - k] - mean);
    out[k] = ck / c0;
  }
  return out;
}

// Closed-form Pareto density MLE: alpha = 1 + n / sum(ln(x_i / x_min)).
inline double tail_index_mle(const std::vector<double>& samples, double x_min) {
  if (samples.empty()) throw std::invalid_argument("tail_index_mle: empty sample");
  if (x_min <= 0.0) throw std::invalid_argument("tail_index_mle: x_min must be positive");
  double sum = 0.0;
  for (double x : samples) {
    if (x < x_min) throw std::invalid_argument("tail_index_mle: sample below x_min");
    sum += std::log(x / x_min);
  }
  if (sum <= 0.0) throw std::invalid_argument("tail_index_mle: degenerate sample (all at x_min)");
  return 1.0 + static_cast<double>(samples.size()) / sum;
}

struct ExtremeTails {
  std::vector<double> upper;  // values at or above the 95th percentile
  std::vector<double> lower;  // values at or below the 5th percentile
  double alpha_upper = 0.0;
  double alpha_lower = 0.0;
};

namespace detail {

// Nearest-rank percentile.
inline double percentile(std::vector<double> sorted, double p) {
  size_t n = sorted.size();
  size_t r = static_cast<size_t>(std::ceil(p * static_cast<double>(n)));
  if (r < 1) r = 1;
  if (r > n) r = n;
  return sorted[r - 1];
}

}  // namespace detail

inline ExtremeTails extreme_tails(const std::vector<double>& returns) {
  if (returns.size() < 100) throw std::invalid_argument("extreme_tails: series too short");
  std::vector<double> sorted(returns);
  std::sort(sorted.begin(), sorted.end());
  double q95 = detail::percentile(sorted, 0.95);
  double q05 = detail::percentile(sorted, 0.05);
  ExtremeTails out;
  for (double v : returns) {
    if (v >= q95) out.upper.push_back(v);
    if (v <= q05) out.lower.push_back(v);
  }
  out.alpha_upper = tail_index_mle(out.upper, *std::min_element(out.upper.begin(), out.upper.end()));
  std::vector<double> abs_lower;
  abs_lower.reserve(out.lower.size());
  for (double v : out.lower) abs_lower.push_back(std::fabs(v));
  out.alpha_lower = tail_index_mle(abs_lower, *std::min_element(abs_lower.begin(), abs_lower.end()));
  return out;
}

struct ImpactObservation {
  int sign = 0;          // +1 buyer-initiated, -1 seller-initiated
  double volume = 0.0;
  double mid_before = 0.0;
  double mid_after = 0.0;
};

struct ImpactBin {
  double mean_volume = 0.0;  // mean normalised volume in the bin
  double mean_impact = 0.0;  // mean (sign-adjusted) log mid change
  size_t count = 0;
};

struct ImpactCurve {
  std::array<ImpactBin, 20> bins{};
  size_t out_of_domain = 0;
};

struct ImpactCurves {
  ImpactCurve buyer;
  ImpactCurve seller;
  double mean_volume = 0.0;  // session normalisation
};

// Twenty logarithmically spaced normalised-volume bins on [1e-3, 10^0.5].
// Volumes normalise by the session mean; the seller curve negates the impact
// so both plot positive under downward pressure.
inline ImpactCurves price_impact_curves(const std::vector<ImpactObservation>& obs) {
  ImpactCurves out;
  if (obs.empty()) return out;
  double vbar = 0.0;
  for (const auto& o : obs) vbar += o.volume;
  vbar /= static_cast<double>(obs.size());
  out.mean_volume = vbar;
  if (vbar <= 0.0) return out;

  const double lo = -3.0, hi = 0.5;
  std::array<std::array<double, 2>, 20> acc_buy{}, acc_sell{};
  std::array<size_t, 20> n_buy{}, n_sell{};
  for (const auto& o : obs) {
    if (o.mid_before <= 0.0 || o.mid_after <= 0.0 || std::isnan(o.mid_before) || std::isnan(o.mid_after))
      continue;
    double omega = o.volume / vbar;
    double l = std::log10(omega);
    if (l < lo || l > hi) {
      ++(o.sign > 0 ? out.buyer : out.seller).out_of_domain;
      continue;
    }
    int bin = static_cast<int>((l - lo) / (hi - lo) * 20.0);
    if (bin == 20) bin = 19;
    double dp = std::log(o.mid_after) - std::log(o.mid_before);
    if (o.sign > 0) {
      acc_buy[static_cast<size_t>(bin)][0] += omega;
      acc_buy[static_cast<size_t>(bin)][1] += dp;
      ++n_buy[static_cast<size_t>(bin)];
    } else {
      acc_sell[static_cast<size_t>(bin)][0] += omega;
      acc_sell[static_cast<size_t>(bin)][1] += -dp;
      ++n_sell[static_cast<size_t>(bin)];
    }
  }
  for (size_t b = 0; b < 20; ++b) {
    if (n_buy[b]) {
      out.buyer.bins[b] = ImpactBin{acc_buy[b][0] / n_buy[b], acc_buy[b][1] / n_buy[b], n_buy[b]};
    }
    if (n_sell[b]) {
      out.seller.bins[b] = ImpactBin{acc_sell[b][0] / n_sell[b], acc_sell[b][1] / n_sell[b], n_sell[b]};
    }
  }
  return out;
}

// Elementwise mean volume over depth snapshots, per side.
inline std::pair<std::vector<double>, std::vector<double>> depth_profile_average(
    const std::vector<std::pair<std::vector<uint64_t>, std::vector<uint64_t>>>& snapshots) {
  if (snapshots.empty()) throw std::invalid_argument("depth_profile_average: no snapshots");
  size_t levels = snapshots.front().first.size();
  std::vector<double> bid(levels, 0.0), ask(levels, 0.0);
  for (const auto& [b, a] : snapshots) {
    if (b.size() != levels || a.size() != levels)
      throw std::invalid_argument("depth_profile_average: inconsistent snapshot shape");
    for (size_t i = 0; i < levels; ++i) {
      bid[i] += static_cast<double>(b[i]);
      ask[i] += static_cast<double>(a[i]);
    }
  }
  for (size_t i = 0; i < levels; ++i) {
    bid[i] /= static_cast<double>(snapshots.size());
    ask[i] /= static_cast<double>(snapshots.size());
  }
  return {bid, ask};
}

}  // namespace eabm::facts
