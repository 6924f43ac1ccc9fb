#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "eabm/moments.hpp"
#include "eabm/sim.hpp"

namespace eabm::grid {

// Free-parameter order everywhere: N_c, N_f, delta, kappa, nu, sigma_f.
using Theta = std::array<double, 6>;

inline AbmParams apply_theta(AbmParams base, const Theta& theta) {
  base.n_chartists = static_cast<int>(std::llround(theta[0]));
  base.n_fundamentalists = static_cast<int>(std::llround(theta[1]));
  base.delta = theta[2];
  base.kappa = theta[3];
  base.nu = theta[4];
  base.sigma_f = theta[5];
  return base;
}

struct GridSpec {
  std::array<std::vector<double>, 6> values;  // per free parameter

  size_t cells() const {
    size_t n = 1;
    for (const auto& v : values) n *= v.size();
    return n;
  }

  Theta theta_at(size_t index) const {
    Theta t{};
    for (int p = 5; p >= 0; --p) {
      const auto& vals = values[static_cast<size_t>(p)];
      t[static_cast<size_t>(p)] = vals[index % vals.size()];
      index /= vals.size();
    }
    return t;
  }

  // Four values per free parameter across the calibration bounds.
  static GridSpec default_spec() {
    GridSpec g;
    g.values[0] = {1, 7, 14, 20};
    g.values[1] = {1, 7, 14, 20};
    g.values[2] = {0.05, 0.10, 0.15, 0.20};
    g.values[3] = {1.0, 3.0, 5.0, 8.0};
    g.values[4] = {2.0, 4.0, 7.0, 10.0};
    g.values[5] = {0.01, 0.02, 0.035, 0.05};
    return g;
  }
};

struct GridRow {
  Theta theta{};
  moments::MomentVector moments;
  double objective = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
};

struct GridResult {
  GridSpec spec;
  std::vector<GridRow> rows;
};

// Runs every parameter combination once at a fixed seed; per-cell failures
// are recorded and the sweep continues. Cells fan out across jobs and merge
// by index, so the output is independent of the job count.
inline GridResult run_sensitivity_grid(const AbmParams& base, const GridSpec& spec,
                                       const std::vector<double>& empirical_returns, uint64_t seed,
                                       int jobs = 1,
                                       const std::optional<std::pair<Eigen::MatrixXd, std::array<double, 8>>>&
                                           objective_inputs = std::nullopt) {
  GridResult out;
  out.spec = spec;
  out.rows.resize(spec.cells());
  std::atomic<size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= out.rows.size()) return;
      GridRow& row = out.rows[i];
      row.theta = spec.theta_at(i);
      try {
        AbmParams p = apply_theta(base, row.theta);
        p.validate();
        sim::SessionConfig cfg = sim::SessionConfig::with_defaults(p);
        cfg.record_events = false;
        sim::SessionLog log = sim::run_session(cfg, seed);
        if (log.liquidity_crash) throw std::runtime_error("liquidity crash");
        auto returns = moments::micro_log_returns(log.micro_series());
        row.moments = moments::estimate_moments(returns, empirical_returns);
        if (objective_inputs) {
          const auto& [W, me] = *objective_inputs;
          Eigen::VectorXd g(8);
          auto arr = row.moments.as_array();
          for (int j = 0; j < 8; ++j) g(j) = arr[static_cast<size_t>(j)] - me[static_cast<size_t>(j)];
          row.objective = g.dot(W * g);
        }
        row.ok = true;
      } catch (const std::exception& ex) {
        row.ok = false;
        row.error = ex.what();
      }
    }
  };

  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

struct MarginalCell {
  double value = 0.0;
  size_t count = 0;
  std::array<double, 8> mean_moments{};
  double mean_objective = std::numeric_limits<double>::quiet_NaN();
};

// Per-parameter, per-value aggregates over the successful cells.
inline std::array<std::vector<MarginalCell>, 6> marginals(const GridResult& grid) {
  std::array<std::vector<MarginalCell>, 6> out;
  for (size_t p = 0; p < 6; ++p) {
    const auto& vals = grid.spec.values[p];
    out[p].resize(vals.size());
    for (size_t v = 0; v < vals.size(); ++v) out[p][v].value = vals[v];
    std::vector<double> obj_acc(vals.size(), 0.0);
    std::vector<size_t> obj_n(vals.size(), 0);
    for (const auto& row : grid.rows) {
      if (!row.ok) continue;
      for (size_t v = 0; v < vals.size(); ++v) {
        if (row.theta[p] != vals[v]) continue;
        auto arr = row.moments.as_array();
        for (size_t j = 0; j < 8; ++j) out[p][v].mean_moments[j] += arr[j];
        ++out[p][v].count;
        if (!std::isnan(row.objective)) {
          obj_acc[v] += row.objective;
          ++obj_n[v];
        }
      }
    }
    for (size_t v = 0; v < vals.size(); ++v) {
      if (out[p][v].count)
        for (size_t j = 0; j < 8; ++j) out[p][v].mean_moments[j] /= static_cast<double>(out[p][v].count);
      if (obj_n[v]) out[p][v].mean_objective = obj_acc[v] / static_cast<double>(obj_n[v]);
    }
  }
  return out;
}

// Two-parameter interaction surface: mean of one moment over the other four
// parameters.
inline std::vector<std::vector<double>> surface(const GridResult& grid, size_t param_a, size_t param_b,
                                                size_t moment_index) {
  const auto& va = grid.spec.values[param_a];
  const auto& vb = grid.spec.values[param_b];
  std::vector<std::vector<double>> mean(va.size(), std::vector<double>(vb.size(), 0.0));
  std::vector<std::vector<size_t>> count(va.size(), std::vector<size_t>(vb.size(), 0));
  for (const auto& row : grid.rows) {
    if (!row.ok) continue;
    size_t ia = va.size(), ib = vb.size();
    for (size_t i = 0; i < va.size(); ++i)
      if (row.theta[param_a] == va[i]) ia = i;
    for (size_t i = 0; i < vb.size(); ++i)
      if (row.theta[param_b] == vb[i]) ib = i;
    if (ia == va.size() || ib == vb.size()) continue;
    mean[ia][ib] += row.moments.as_array()[moment_index];
    ++count[ia][ib];
  }
  for (size_t i = 0; i < va.size(); ++i)
    for (size_t j = 0; j < vb.size(); ++j)
      if (count[i][j]) mean[i][j] /= static_cast<double>(count[i][j]);
  return mean;
}

}  // namespace eabm::grid
