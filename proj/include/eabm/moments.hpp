#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eabm/rng.hpp"

namespace eabm::moments {

// The eight moments characterising one price path, in table row order.
struct MomentVector {
  double mean = 0.0;
  double std = 0.0;
  double ks = 0.0;
  double hurst = 0.0;
  double gph = 0.0;
  double adf = 0.0;
  double garch_sum = 0.0;
  double hill = 0.0;
  bool garch_converged = true;
  bool ok = true;

  std::array<double, 8> as_array() const { return {mean, std, ks, hurst, gph, adf, garch_sum, hill}; }
  static const std::array<const char*, 8>& names() {
    static const std::array<const char*, 8> n = {"Mean", "Std", "KS", "Hurst", "GPH", "ADF", "GARCH", "Hill"};
    return n;
  }
};

// Log-returns of the micro-price path.
inline std::vector<double> micro_log_returns(const std::vector<double>& micro) {
  if (micro.size() < 2) throw std::invalid_argument("micro_log_returns: need at least two prices");
  std::vector<double> r(micro.size() - 1);
  for (size_t i = 0; i + 1 < micro.size(); ++i) {
    if (micro[i] <= 0.0 || micro[i + 1] <= 0.0)
      throw std::invalid_argument("micro_log_returns: nonpositive price");
    r[i] = std::log(micro[i + 1]) - std::log(micro[i]);
  }
  return r;
}

// Two-sample Kolmogorov-Smirnov sup distance.
inline double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("two_sample_ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::fabs(fa - fb));
  }
  return d;
}

namespace detail {

inline double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_std(const std::vector<double>& x) {
  double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  double sigma2 = 0.0;
};

inline OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::VectorXd xty = X.transpose() * y;
  Eigen::LDLT<Eigen::MatrixXd> solver(xtx);
  OlsFit fit;
  fit.beta = solver.solve(xty);
  Eigen::VectorXd resid = y - X * fit.beta;
  double dof = static_cast<double>(X.rows() - X.cols());
  fit.sigma2 = resid.squaredNorm() / dof;
  Eigen::MatrixXd xtx_inv = solver.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  fit.se = (fit.sigma2 * xtx_inv.diagonal()).cwiseSqrt();
  return fit;
}

// Expected rescaled range of an i.i.d. series (Anis-Lloyd with the small-n
// factor); centres the R/S regression at H = 0.5 under the null.
inline double expected_rs(int w) {
  double sum = 0.0;
  for (int i = 1; i < w; ++i) sum += std::sqrt(static_cast<double>(w - i) / i);
  double front;
  if (w <= 340) {
    front = std::exp(std::lgamma((w - 1) / 2.0) - std::lgamma(w / 2.0)) / std::sqrt(M_PI);
  } else {
    front = 1.0 / std::sqrt(w * M_PI / 2.0);
  }
  return (w - 0.5) / w * front * sum;
}

// Minimal Nelder-Mead used by the GARCH quasi-MLE.
inline std::pair<std::vector<double>, double> nm_minimize(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
    double step, int max_iter) {
  const size_t n = x0.size();
  std::vector<std::vector<double>> x(n + 1, x0);
  for (size_t i = 0; i < n; ++i) x[i + 1][i] += step * std::max(1e-4, std::fabs(x0[i]));
  std::vector<double> fx(n + 1);
  for (size_t i = 0; i <= n; ++i) fx[i] = f(x[i]);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<size_t> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return fx[a] < fx[b]; });
    size_t best = idx[0], worst = idx[n], second = idx[n - 1];
    std::vector<double> c(n, 0.0);
    for (size_t k = 0; k < n; ++k)
      for (size_t j = 0; j < n; ++j) c[j] += x[idx[k]][j] / static_cast<double>(n);
    auto blend = [&](double t) {
      std::vector<double> p(n);
      for (size_t j = 0; j < n; ++j) p[j] = c[j] + t * (c[j] - x[worst][j]);
      return p;
    };
    auto xr = blend(1.0);
    double fr = f(xr);
    if (fr < fx[best]) {
      auto xe = blend(2.0);
      double fe = f(xe);
      if (fe < fr) {
        x[worst] = xe;
        fx[worst] = fe;
      } else {
        x[worst] = xr;
        fx[worst] = fr;
      }
    } else if (fr < fx[second]) {
      x[worst] = xr;
      fx[worst] = fr;
    } else {
      auto xc = blend(fr < fx[worst] ? 0.5 : -0.5);
      double fc = f(xc);
      if (fc < std::min(fr, fx[worst])) {
        x[worst] = xc;
        fx[worst] = fc;
      } else {
        for (size_t k = 0; k <= n; ++k) {
          if (k == best) continue;
          for (size_t j = 0; j < n; ++j) x[k][j] = x[best][j] + 0.5 * (x[k][j] - x[best][j]);
          fx[k] = f(x[k]);
        }
      }
    }
  }
  size_t best = 0;
  for (size_t i = 1; i <= n; ++i)
    if (fx[i] < fx[best]) best = i;
  return {x[best], fx[best]};
}

}  // namespace detail

// Rescaled-range Hurst exponent over a geometric grid of window sizes,
// benchmarked against the i.i.d. expectation.
inline double hurst_rs(const std::vector<double>& x) {
  const size_t n = x.size();
  if (n < 64) throw std::invalid_argument("hurst_rs: series too short");
  std::vector<int> windows;
  for (double w = 16.0; w <= static_cast<double>(n) / 4.0; w *= 1.5)
    windows.push_back(static_cast<int>(std::llround(w)));
  if (windows.size() < 3) throw std::invalid_argument("hurst_rs: too few window sizes");

  std::vector<double> log_w, log_ratio;
  for (int w : windows) {
    size_t blocks = n / static_cast<size_t>(w);
    double rs_sum = 0.0;
    size_t used = 0;
    for (size_t b = 0; b < blocks; ++b) {
      const double* seg = x.data() + b * static_cast<size_t>(w);
      double m = 0.0;
      for (int i = 0; i < w; ++i) m += seg[i];
      m /= w;
      double cum = 0.0, lo = 0.0, hi = 0.0, ss = 0.0;
      for (int i = 0; i < w; ++i) {
        double d = seg[i] - m;
        cum += d;
        lo = std::min(lo, cum);
        hi = std::max(hi, cum);
        ss += d * d;
      }
      double s = std::sqrt(ss / w);
      if (s <= 0.0) continue;
      rs_sum += (hi - lo) / s;
      ++used;
    }
    if (used == 0) continue;
    log_w.push_back(std::log(static_cast<double>(w)));
    log_ratio.push_back(std::log(rs_sum / used) - std::log(detail::expected_rs(w)));
  }
  if (log_w.size() < 3) throw std::invalid_argument("hurst_rs: degenerate series");
  Eigen::MatrixXd X(log_w.size(), 2);
  Eigen::VectorXd y(log_w.size());
  for (size_t i = 0; i < log_w.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = log_w[i];
    y(i) = log_ratio[i];
  }
  return 0.5 + detail::ols(X, y).beta(1);
}

// Log-periodogram regression for the fractional-integration parameter, with
// bandwidth floor(sqrt(n)). Callers pass absolute returns for the
// volatility-memory reading.
inline double gph_estimate(const std::vector<double>& x) {
  const size_t n = x.size();
  if (n < 64) throw std::invalid_argument("gph_estimate: series too short");
  double m = detail::mean_of(x);
  const int bw = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  std::vector<double> lx, ly;
  for (int j = 1; j <= bw; ++j) {
    double lam = 2.0 * M_PI * j / static_cast<double>(n);
    double c = std::cos(lam), s = std::sin(lam);
    double cr = 1.0, ci = 0.0;  // e^{-i lam t} built incrementally
    double re = 0.0, im = 0.0;
    for (size_t t = 0; t < n; ++t) {
      double v = x[t] - m;
      re += v * cr;
      im += v * ci;
      double nr = cr * c + ci * s;
      ci = ci * c - cr * s;
      cr = nr;
    }
    double periodogram = (re * re + im * im) / (2.0 * M_PI * n);
    if (periodogram <= 0.0) continue;
    lx.push_back(std::log(4.0 * std::sin(lam / 2.0) * std::sin(lam / 2.0)));
    ly.push_back(std::log(periodogram));
  }
  if (lx.size() < 8) throw std::invalid_argument("gph_estimate: degenerate periodogram");
  Eigen::MatrixXd X(lx.size(), 2);
  Eigen::VectorXd y(lx.size());
  for (size_t i = 0; i < lx.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = lx[i];
    y(i) = ly[i];
  }
  return -detail::ols(X, y).beta(1);
}

// Augmented Dickey-Fuller t-statistic, constant and no trend, lag order
// floor((n-1)^(1/3)).
inline double adf_tstat(const std::vector<double>& y) {
  const size_t n = y.size();
  if (n < 32) throw std::invalid_argument("adf_tstat: series too short");
  const int p = static_cast<int>(std::floor(std::cbrt(static_cast<double>(n - 1))));
  const size_t rows = n - 1 - static_cast<size_t>(p);
  const size_t cols = 2 + static_cast<size_t>(p);
  if (rows <= cols + 2) throw std::invalid_argument("adf_tstat: not enough observations for lag order");
  std::vector<double> dy(n - 1);
  for (size_t t = 0; t + 1 < n; ++t) dy[t] = y[t + 1] - y[t];
  Eigen::MatrixXd X(rows, cols);
  Eigen::VectorXd b(rows);
  for (size_t r = 0; r < rows; ++r) {
    size_t t = r + static_cast<size_t>(p);  // index into dy
    b(r) = dy[t];
    X(r, 0) = 1.0;
    X(r, 1) = y[t];  // level lagged once
    for (int k = 1; k <= p; ++k) X(r, 1 + static_cast<size_t>(k)) = dy[t - static_cast<size_t>(k)];
  }
  auto fit = detail::ols(X, b);
  return fit.beta(1) / fit.se(1);
}

struct GarchFit {
  double omega = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  bool converged = false;
  double sum() const { return alpha + beta; }
};

// GARCH(1,1) Gaussian quasi-MLE with bounded parameters and three fixed
// starting points.
inline GarchFit garch11_fit(const std::vector<double>& r) {
  const size_t n = r.size();
  if (n < 100) throw std::invalid_argument("garch11_fit: series too short");
  double m = detail::mean_of(r);
  std::vector<double> e(n);
  for (size_t i = 0; i < n; ++i) e[i] = r[i] - m;
  double var = 0.0;
  for (double v : e) var += v * v;
  var /= static_cast<double>(n);
  if (var <= 0.0) throw std::invalid_argument("garch11_fit: zero variance");

  auto nll = [&](const std::vector<double>& theta) {
    double omega = theta[0], alpha = theta[1], beta = theta[2];
    if (omega <= 0.0 || alpha < 0.0 || beta < 0.0 || alpha + beta > 1.2) return 1e12;
    double sigma2 = var;
    double acc = 0.0;
    for (size_t t = 0; t < n; ++t) {
      if (t > 0) sigma2 = omega + alpha * e[t - 1] * e[t - 1] + beta * sigma2;
      if (sigma2 <= 0.0 || !std::isfinite(sigma2)) return 1e12;
      acc += std::log(sigma2) + e[t] * e[t] / sigma2;
    }
    return 0.5 * acc;
  };

  const double starts[3][2] = {{0.05, 0.90}, {0.10, 0.85}, {0.30, 0.40}};
  GarchFit best;
  double best_nll = 1e300;
  for (const auto& s0 : starts) {
    double a0 = s0[0], b0 = s0[1];
    std::vector<double> x0 = {var * std::max(1.0 - a0 - b0, 0.05), a0, b0};
    auto [x, fx] = detail::nm_minimize(nll, x0, 0.25, 400);
    if (fx < best_nll && fx < 1e11) {
      best_nll = fx;
      best = GarchFit{x[0], x[1], x[2], true};
    }
  }
  return best;
}

// Tail index of the survival function over the largest tail_fraction of the
// sample. The default applies the truncated-likelihood correction (solved on
// the observed range); plain Hill remains available for comparisons.
inline double hill_tail_index(std::vector<double> samples, double tail_fraction = 0.05,
                              bool nuyts_correction = true) {
  if (samples.size() < 100) throw std::invalid_argument("hill_tail_index: series too short");
  size_t k = static_cast<size_t>(std::llround(tail_fraction * static_cast<double>(samples.size())));
  k = std::max<size_t>(k, 10);
  std::sort(samples.begin(), samples.end(), std::greater<double>());
  std::vector<double> tail(samples.begin(), samples.begin() + static_cast<long>(k));
  while (!tail.empty() && tail.back() <= 0.0) tail.pop_back();
  if (tail.size() < 10) throw std::invalid_argument("hill_tail_index: nonpositive tail");

  double x_max = tail.front();
  double x_min = tail.back();
  double mean_ln = 0.0;
  for (double v : tail) mean_ln += std::log(v);
  mean_ln /= static_cast<double>(tail.size());
  double L = std::log(x_min), U = std::log(x_max);
  if (U - L <= 0.0) throw std::invalid_argument("hill_tail_index: degenerate tail");

  if (!nuyts_correction) return 1.0 / (mean_ln - L);

  double D = U - L;
  auto g = [&](double a) {
    double z = std::exp(-a * D);
    return mean_ln - 1.0 / a - (L - U * z) / (1.0 - z);
  };
  double lo = 1e-3, hi = 500.0;
  if (g(lo) > 0.0) return lo;
  if (g(hi) < 0.0) return hi;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// The full eight-moment summary of a simulated return path measured against
// an empirical return path (which anchors the KS distance).
inline MomentVector estimate_moments(const std::vector<double>& sim_returns,
                                     const std::vector<double>& empirical_returns,
                                     bool hill_nuyts = true) {
  if (sim_returns.size() < 100 || empirical_returns.size() < 100)
    throw std::invalid_argument("estimate_moments: series too short (need >= 100)");
  MomentVector mv;
  mv.mean = detail::mean_of(sim_returns);
  mv.std = detail::sample_std(sim_returns);
  mv.ks = two_sample_ks(sim_returns, empirical_returns);
  if (mv.std == 0.0) {
    // degenerate constant series: the memory and tail estimators are
    // undefined; report neutral values so downstream covariances stay finite
    mv.hurst = 0.5;
    return mv;
  }
  mv.hurst = hurst_rs(sim_returns);
  std::vector<double> abs_r(sim_returns.size());
  for (size_t i = 0; i < sim_returns.size(); ++i) abs_r[i] = std::fabs(sim_returns[i]);
  mv.gph = gph_estimate(abs_r);
  mv.adf = adf_tstat(sim_returns);
  auto fit = garch11_fit(sim_returns);
  mv.garch_converged = fit.converged;
  mv.garch_sum = fit.converged ? fit.sum() : std::numeric_limits<double>::quiet_NaN();
  if (!fit.converged) mv.ok = false;
  mv.hill = hill_tail_index(sim_returns, 0.05, hill_nuyts);
  return mv;
}

struct WeightMatrix {
  Eigen::MatrixXd cov;  // 8x8 moment covariance
  Eigen::MatrixXd W;    // inverse (or pseudo-inverse past the condition cutoff)
  double condition_number = 0.0;
  bool pseudo_inverse = false;
};

// One bootstrap replicate: uniformly drawn contiguous windows concatenated
// back to the source length.
inline std::vector<double> make_block_replicate(const std::vector<double>& returns, size_t window,
                                                Rng& rng) {
  const size_t n = returns.size();
  std::vector<double> rep;
  rep.reserve(n);
  while (rep.size() < n) {
    size_t start = static_cast<size_t>(rng.uniform_int(n - window + 1));
    size_t take = std::min(window, n - rep.size());
    rep.insert(rep.end(), returns.begin() + static_cast<long>(start),
               returns.begin() + static_cast<long>(start + take));
  }
  return rep;
}

// Moving-block bootstrap covariance of the moment vector: each replicate
// concatenates uniformly drawn contiguous windows back to the original
// length, moments are estimated per replicate against the source series, and
// the covariance is taken across replicates.
inline WeightMatrix moving_block_bootstrap_cov(const std::vector<double>& returns, size_t window,
                                               size_t samples, uint64_t seed,
                                               std::vector<std::array<double, 8>>* replicates_out = nullptr) {
  const size_t n = returns.size();
  if (n < window) throw std::invalid_argument("moving_block_bootstrap_cov: series shorter than window");
  if (samples < 2) throw std::invalid_argument("moving_block_bootstrap_cov: need at least two samples");
  Rng rng(seed);
  Eigen::MatrixXd rows(static_cast<long>(samples), 8);
  for (size_t b = 0; b < samples; ++b) {
    std::vector<double> rep = make_block_replicate(returns, window, rng);
    MomentVector mv = estimate_moments(rep, returns);
    auto arr = mv.as_array();
    for (int j = 0; j < 8; ++j) rows(static_cast<long>(b), j) = arr[static_cast<size_t>(j)];
    if (replicates_out) replicates_out->push_back(arr);
  }
  Eigen::RowVectorXd mu = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - mu;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(samples - 1);
  cov = 0.5 * (cov + cov.transpose().eval());  // enforce exact symmetry

  WeightMatrix out;
  out.cov = cov;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd ev = es.eigenvalues();
  double ev_max = ev.maxCoeff();
  double ev_min = ev.minCoeff();
  out.condition_number = ev_min > 0.0 ? ev_max / ev_min : std::numeric_limits<double>::infinity();
  if (!(ev_min > 0.0) || out.condition_number > 1e15) {
    out.pseudo_inverse = true;
    double cutoff = ev_max / 1e15;
    Eigen::VectorXd inv = ev;
    for (int i = 0; i < inv.size(); ++i) inv(i) = ev(i) > cutoff ? 1.0 / ev(i) : 0.0;
    out.W = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  } else {
    out.W = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }
  out.W = 0.5 * (out.W + out.W.transpose().eval());
  return out;
}

// Weighted sum of squares of the mean moment error over I seeded replicates;
// replicate i runs at seed i. Any replicate failure poisons the value.
inline double smd_objective(
    const std::array<double, 6>& theta, const std::array<double, 8>& empirical_moments,
    const Eigen::MatrixXd& W, int replications,
    const std::function<std::optional<MomentVector>(const std::array<double, 6>&, uint64_t)>& simulate_fn) {
  if (replications < 1) throw std::invalid_argument("smd_objective: replications < 1");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(8);
  for (int i = 1; i <= replications; ++i) {
    std::optional<MomentVector> mv;
    try {
      mv = simulate_fn(theta, static_cast<uint64_t>(i));
    } catch (const std::exception&) {
      mv.reset();
    }
    if (!mv || !mv->ok) return std::numeric_limits<double>::infinity();
    auto arr = mv->as_array();
    for (int j = 0; j < 8; ++j) g(j) += arr[static_cast<size_t>(j)] - empirical_moments[static_cast<size_t>(j)];
  }
  g /= static_cast<double>(replications);
  return g.dot(W * g);
}

struct ConfidenceIntervals {
  Eigen::MatrixXd exposure;                       // 6x8 matrix B
  std::array<std::array<double, 3>, 6> interval;  // lo, hat, hi per parameter
  std::array<bool, 6> degenerate{};               // flagged when a variance vanished
};

// Indicative parameter intervals from the sensitivity table: B_ij =
// Cov(theta_i, m_j)/Var(m_j), Sigma_theta = B Sigma_me B', theta +- 1.96 sd.
inline ConfidenceIntervals confidence_intervals(
    const std::vector<std::pair<std::array<double, 6>, std::array<double, 8>>>& sensitivity_rows,
    const Eigen::MatrixXd& sigma_me, const std::array<double, 6>& theta_hat) {
  const size_t n = sensitivity_rows.size();
  if (n < 2) throw std::invalid_argument("confidence_intervals: need at least two sensitivity rows");
  Eigen::MatrixXd T(static_cast<long>(n), 6), M(static_cast<long>(n), 8);
  for (size_t r = 0; r < n; ++r) {
    for (int j = 0; j < 6; ++j) T(static_cast<long>(r), j) = sensitivity_rows[r].first[static_cast<size_t>(j)];
    for (int j = 0; j < 8; ++j) M(static_cast<long>(r), j) = sensitivity_rows[r].second[static_cast<size_t>(j)];
  }
  Eigen::RowVectorXd tmu = T.colwise().mean(), mmu = M.colwise().mean();
  Eigen::MatrixXd Tc = T.rowwise() - tmu, Mc = M.rowwise() - mmu;
  Eigen::MatrixXd cov_tm = Tc.transpose() * Mc / static_cast<double>(n - 1);  // 6x8
  Eigen::VectorXd var_m = (Mc.array().square().colwise().sum() / static_cast<double>(n - 1)).matrix();

  ConfidenceIntervals out;
  out.exposure = Eigen::MatrixXd::Zero(6, 8);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 8; ++j) {
      if (var_m(j) > 0.0)
        out.exposure(i, j) = cov_tm(i, j) / var_m(j);
      else
        out.degenerate[static_cast<size_t>(i)] = true;
    }
  Eigen::MatrixXd sigma_theta = out.exposure * sigma_me * out.exposure.transpose();
  for (int i = 0; i < 6; ++i) {
    double v = sigma_theta(i, i);
    double hw = v > 0.0 ? 1.96 * std::sqrt(v) : 0.0;
    out.interval[static_cast<size_t>(i)] = {theta_hat[static_cast<size_t>(i)] - hw,
                                            theta_hat[static_cast<size_t>(i)],
                                            theta_hat[static_cast<size_t>(i)] + hw};
  }
  return out;
}

}  // namespace eabm::moments
