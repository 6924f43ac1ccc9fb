#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "eabm/rng.hpp"

namespace eabm::calibrate {

using Objective = std::function<double(const std::vector<double>&)>;

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;

  size_t dim() const { return lo.size(); }
  void clamp(std::vector<double>& x) const {
    for (size_t i = 0; i < x.size(); ++i) x[i] = std::min(hi[i], std::max(lo[i], x[i]));
  }

  // Free-parameter bounds of the model; kappa and nu use finite spans for
  // simplex construction.
  static Bounds model_defaults() {
    return Bounds{{1.0, 1.0, 0.0, 0.0, 1.5, 0.0}, {20.0, 20.0, 10.0, 10.0, 10.0, 0.05}};
  }
};

struct Vertex {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
};

struct Simplex {
  std::vector<Vertex> vertices;  // dim + 1

  const Vertex& best() const {
    return *std::min_element(vertices.begin(), vertices.end(),
                             [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  }
  const Vertex& worst() const {
    return *std::max_element(vertices.begin(), vertices.end(),
                             [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  }
  double objective_spread() const {
    double mean = 0.0;
    for (const auto& v : vertices) mean += v.f;
    mean /= static_cast<double>(vertices.size());
    double ss = 0.0;
    for (const auto& v : vertices) ss += (v.f - mean) * (v.f - mean);
    double sd = std::sqrt(ss / static_cast<double>(vertices.size()));
    return sd / (std::fabs(mean) + 1e-12);
  }
};

// Decreasing acceptance thresholds, each held for a fixed number of steps,
// with a terminal zero segment.
struct TaSchedule {
  std::vector<double> thresholds;  // non-increasing; implicitly 0 afterwards
  int steps_per_threshold = 7;

  double tau_at(int iteration) const {
    if (steps_per_threshold <= 0 || thresholds.empty()) return 0.0;
    size_t level = static_cast<size_t>(iteration / steps_per_threshold);
    return level < thresholds.size() ? thresholds[level] : 0.0;
  }

  // Geometric ladder from 10% of the initial objective over five levels.
  static TaSchedule geometric_from(double initial_objective, int levels = 5,
                                   int steps_per_threshold = 7, double decay = 0.3) {
    TaSchedule s;
    s.steps_per_threshold = steps_per_threshold;
    double tau = 0.1 * std::fabs(initial_objective);
    for (int i = 0; i < levels; ++i) {
      s.thresholds.push_back(tau);
      tau *= decay;
    }
    return s;
  }
};

// Vertex 0 sits at the per-parameter bound midpoints; each remaining vertex
// displaces one coordinate by 5% of its span, clamped.
inline Simplex initial_simplex(const Bounds& bounds) {
  const size_t n = bounds.dim();
  if (n == 0) throw std::invalid_argument("initial_simplex: empty bounds");
  Simplex s;
  std::vector<double> mid(n);
  for (size_t i = 0; i < n; ++i) mid[i] = 0.5 * (bounds.lo[i] + bounds.hi[i]);
  s.vertices.push_back(Vertex{mid, 0.0});
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> x = mid;
    x[i] += 0.05 * (bounds.hi[i] - bounds.lo[i]);
    bounds.clamp(x);
    s.vertices.push_back(Vertex{x, 0.0});
  }
  return s;
}

inline void evaluate_all(Simplex& s, const Objective& f) {
  for (auto& v : s.vertices) v.f = f(v.x);
}

enum class StepKind { Reflect, Expand, ContractOutside, ContractInside, Shrink, TaAccept, TaReject };

inline const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::Reflect: return "reflect";
    case StepKind::Expand: return "expand";
    case StepKind::ContractOutside: return "contract_out";
    case StepKind::ContractInside: return "contract_in";
    case StepKind::Shrink: return "shrink";
    case StepKind::TaAccept: return "ta_accept";
    default: return "ta_reject";
  }
}

// One Nelder-Mead transformation with dimension-adaptive coefficients
// (reflect 1, expand 1 + 2/n, contract 0.75 - 1/(2n), shrink 1 - 1/n).
// All ordering comparisons tolerate a worsening of up to tau, and every
// candidate is clamped to the bounds.
inline StepKind nm_step(Simplex& s, const Objective& f, double tau, const Bounds& bounds) {
  const size_t n = s.vertices.size() - 1;
  const double chi = 1.0 + 2.0 / static_cast<double>(n);
  const double gamma_c = 0.75 - 1.0 / (2.0 * static_cast<double>(n));
  const double sigma = 1.0 - 1.0 / static_cast<double>(n);

  std::vector<size_t> idx(s.vertices.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return s.vertices[a].f < s.vertices[b].f; });
  Vertex& worst = s.vertices[idx[n]];
  const double f_best = s.vertices[idx[0]].f;
  const double f_second = s.vertices[idx[n - 1]].f;
  const double f_worst = worst.f;

  std::vector<double> centroid(n + 1 == 0 ? 0 : s.vertices[0].x.size(), 0.0);
  for (size_t k = 0; k < n; ++k)
    for (size_t j = 0; j < centroid.size(); ++j)
      centroid[j] += s.vertices[idx[k]].x[j] / static_cast<double>(n);

  auto along = [&](double t) {
    std::vector<double> p(centroid.size());
    for (size_t j = 0; j < p.size(); ++j) p[j] = centroid[j] + t * (centroid[j] - worst.x[j]);
    bounds.clamp(p);
    return p;
  };
  auto accepts = [tau](double candidate, double reference) { return candidate < reference + tau; };

  std::vector<double> xr = along(1.0);
  double fr = f(xr);

  if (accepts(fr, f_best)) {
    std::vector<double> xe = along(chi);
    double fe = f(xe);
    if (accepts(fe, fr)) {
      worst = Vertex{xe, fe};
      return StepKind::Expand;
    }
    worst = Vertex{xr, fr};
    return StepKind::Reflect;
  }
  if (accepts(fr, f_second)) {
    worst = Vertex{xr, fr};
    return StepKind::Reflect;
  }
  if (accepts(fr, f_worst)) {
    std::vector<double> xc = along(gamma_c);
    double fc = f(xc);
    if (accepts(fc, fr)) {
      worst = Vertex{xc, fc};
      return StepKind::ContractOutside;
    }
  } else {
    std::vector<double> xc = along(-gamma_c);
    double fc = f(xc);
    if (accepts(fc, f_worst)) {
      worst = Vertex{xc, fc};
      return StepKind::ContractInside;
    }
  }
  const std::vector<double>& xb = s.vertices[idx[0]].x;
  for (size_t k = 0; k < s.vertices.size(); ++k) {
    if (k == idx[0]) continue;
    auto& v = s.vertices[k];
    for (size_t j = 0; j < v.x.size(); ++j) v.x[j] = xb[j] + sigma * (v.x[j] - xb[j]);
    bounds.clamp(v.x);
    v.f = f(v.x);
  }
  return StepKind::Shrink;
}

// Threshold-accepting perturbation of the worst vertex: coordinate-wise
// normal noise scaled by 10% of the simplex mean of that coordinate, kept if
// the worsening stays under tau.
inline StepKind ta_step(Simplex& s, const Objective& f, double tau, const Bounds& bounds, Rng& rng) {
  size_t worst = 0;
  for (size_t k = 1; k < s.vertices.size(); ++k)
    if (s.vertices[k].f > s.vertices[worst].f) worst = k;
  const size_t dim = s.vertices[0].x.size();

  std::vector<double> mean(dim, 0.0);
  for (const auto& v : s.vertices)
    for (size_t j = 0; j < dim; ++j) mean[j] += v.x[j] / static_cast<double>(s.vertices.size());

  std::vector<double> candidate = s.vertices[worst].x;
  for (size_t j = 0; j < dim; ++j) candidate[j] += rng.normal(0.0, 0.1 * std::fabs(mean[j]));
  bounds.clamp(candidate);
  double fc = f(candidate);
  if (fc < s.vertices[worst].f + tau) {
    s.vertices[worst] = Vertex{candidate, fc};
    return StepKind::TaAccept;
  }
  return StepKind::TaReject;
}

struct TracePoint {
  int iteration = 0;
  StepKind kind = StepKind::Reflect;
  double tau = 0.0;
  double best_f = 0.0;
  double spread = 0.0;  // scaled cross-simplex objective standard deviation
  std::vector<std::vector<double>> vertices;
};

struct NmtaResult {
  std::vector<double> best_x;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<TracePoint> trace;
};

// Nelder-Mead with threshold accepting: per iteration a TA step runs with
// probability xi, otherwise an NM step; objective failures penalise the
// vertex and the run continues.
inline NmtaResult nmta_run(const Objective& objective, const Bounds& bounds, int iterations,
                           double xi, std::optional<TaSchedule> schedule, uint64_t seed) {
  if (xi < 0.0 || xi >= 0.5) throw std::invalid_argument("nmta_run: xi outside [0, 0.5)");
  Rng rng(seed);
  auto safe = [&objective](const std::vector<double>& x) {
    double v;
    try {
      v = objective(x);
    } catch (const std::exception&) {
      return 1e300;
    }
    return std::isfinite(v) ? v : 1e300;
  };

  Simplex s = initial_simplex(bounds);
  evaluate_all(s, safe);
  TaSchedule sched = schedule ? *schedule : TaSchedule::geometric_from(s.best().f);

  NmtaResult out;
  out.trace.reserve(static_cast<size_t>(iterations));
  for (int it = 0; it < iterations; ++it) {
    double tau = sched.tau_at(it);
    StepKind kind;
    if (rng.uniform01() < xi)
      kind = ta_step(s, safe, tau, bounds, rng);
    else
      kind = nm_step(s, safe, tau, bounds);
    TracePoint tp;
    tp.iteration = it;
    tp.kind = kind;
    tp.tau = tau;
    tp.best_f = s.best().f;
    tp.spread = s.objective_spread();
    for (const auto& v : s.vertices) tp.vertices.push_back(v.x);
    out.trace.push_back(std::move(tp));
  }
  const Vertex& b = s.best();
  out.best_x = b.x;
  out.best_f = b.f;
  return out;
}

}  // namespace eabm::calibrate
