#pragma once

// Post-processing of sample sets: trace-determinant placement for 2x2
// operators and basin counts for lifted Duffing operators.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "ksamp/dynamics.hpp"
#include "ksamp/error.hpp"
#include "ksamp/sampler.hpp"

namespace ksamp {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Linearly interpolated quantile (the "type 7" definition).
inline double quantile(std::vector<double> values, double q) {
  detail::require(!values.empty(), "quantile: empty input");
  detail::require(q >= 0.0 && q <= 1.0, "quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double median(const std::vector<double>& values) { return quantile(values, 0.5); }

inline double iqr(const std::vector<double>& values) {
  return quantile(values, 0.75) - quantile(values, 0.25);
}

// ---------------------------------------------------------------------------
// 2x2 linear systems

inline constexpr double kSampledCenterTol = 0.05;

struct TraceDetRow {
  int chain = 0;
  int index = 0;
  double distance = 0.0;
  double spectral_radius = 0.0;
  TraceDetPoint point;
};

struct TraceDetReport {
  std::vector<TraceDetRow> rows;
  std::map<std::string, int> histogram;
  double accept_rate = 0.0;
  double trace_iqr = 0.0;
  double median_distance = 0.0;
  int without_log = 0;
};

inline TraceDetReport analyze_tracedet(const std::vector<SampleRecord>& samples, double dt,
                                       double center_tol = kSampledCenterTol, double accept_rate = 0.0) {
  detail::require(dt > 0.0, "analyze_tracedet: dt must be positive");
  TraceDetReport out;
  out.accept_rate = accept_rate;
  for (int c = 0; c <= static_cast<int>(PhaseClass::Degenerate); ++c)
    out.histogram[to_string(static_cast<PhaseClass>(c))] = 0;
  std::vector<double> traces, distances;
  for (const auto& s : samples) {
    detail::require(s.k.rows() == 2 && s.k.cols() == 2, "analyze_tracedet: samples must be 2x2 operators");
    TraceDetRow row{s.chain, s.index, s.distance, s.spectral_radius, place_on_tracedet(s.k, dt, center_tol)};
    ++out.histogram[to_string(row.point.label)];
    if (!row.point.has_log) ++out.without_log;
    traces.push_back(row.point.trace);
    distances.push_back(s.distance);
    out.rows.push_back(row);
  }
  if (!samples.empty()) {
    out.trace_iqr = iqr(traces);
    out.median_distance = median(distances);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Duffing basins

struct BasinGridConfig {
  int grid_n = 8;
  double lo = -2.0;
  double hi = 2.0;
  double horizon = 100.0; // seconds of predicted motion
  double attractor_tol = kAttractorTol;
  double divergence_radius = kDivergenceRadius;
  PredictionMode mode = PredictionMode::Relift;
};

using BasinCounts = std::array<int, 4>; // indexed by BasinLabel

struct BasinRow {
  int chain = 0;
  int index = 0;
  double distance = 0.0;
  double spectral_radius = 0.0;
  BasinCounts counts{};
};

struct BasinReport {
  std::vector<BasinRow> rows;
  BasinCounts totals{};
  double diverged_fraction = 0.0;
  double accept_rate = 0.0;
};

inline int horizon_steps(const BasinGridConfig& cfg, double dt) {
  detail::require(dt > 0.0 && cfg.horizon > 0.0, "basins: horizon and dt must be positive");
  return static_cast<int>(std::lround(cfg.horizon / dt));
}

inline BasinCounts basin_counts(const TransferOperator& op, const ObservableDictionary& dict,
                                const BasinGridConfig& cfg) {
  const int steps = horizon_steps(cfg, op.dt);
  BasinCounts counts{};
  for (const auto& x0 : uniform_grid(cfg.grid_n, cfg.lo, cfg.hi)) {
    const Trajectory t = predict_trajectory(op, dict, x0, steps, cfg.divergence_radius, cfg.mode);
    ++counts[static_cast<std::size_t>(classify_basin(t, cfg.attractor_tol, cfg.divergence_radius))];
  }
  return counts;
}

inline BasinReport analyze_basins(const std::vector<SampleRecord>& samples, const ObservableDictionary& dict,
                                  double dt, const BasinGridConfig& cfg, int threads = 1,
                                  double accept_rate = 0.0) {
  detail::require(cfg.grid_n >= 1, "analyze_basins: grid_n must be >= 1");
  BasinReport out;
  out.accept_rate = accept_rate;
  out.rows.resize(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& s = samples[i];
    detail::require(s.k.rows() == static_cast<Eigen::Index>(dict.size()),
                    "analyze_basins: sample dimension does not match the dictionary");
    const TransferOperator op(s.k, dict, dt);
    out.rows[i] = {s.chain, s.index, s.distance, s.spectral_radius, basin_counts(op, dict, cfg)};
  });
  long total = 0;
  for (const auto& r : out.rows)
    for (std::size_t l = 0; l < 4; ++l) {
      out.totals[l] += r.counts[l];
      total += r.counts[l];
    }
  out.diverged_fraction =
      total ? static_cast<double>(out.totals[static_cast<std::size_t>(BasinLabel::Diverged)]) / static_cast<double>(total) : 0.0;
  return out;
}

/// Fraction of grid points whose predicted basin matches direct simulation.
inline double basin_agreement(const TransferOperator& op, const ObservableDictionary& dict,
                              const DuffingSystem& sys, const BasinGridConfig& cfg, int threads = 1) {
  const auto grid = uniform_grid(cfg.grid_n, cfg.lo, cfg.hi);
  const int steps = horizon_steps(cfg, op.dt);
  std::vector<int> hit(grid.size(), 0);
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    const auto truth = classify_basin(simulate(sys, grid[i], op.dt, steps), cfg.attractor_tol, cfg.divergence_radius);
    const auto pred = classify_basin(predict_trajectory(op, dict, grid[i], steps, cfg.divergence_radius, cfg.mode),
                                     cfg.attractor_tol, cfg.divergence_radius);
    hit[i] = truth == pred ? 1 : 0;
  });
  long sum = 0;
  for (int h : hit) sum += h;
  return static_cast<double>(sum) / static_cast<double>(grid.size());
}

} // namespace ksamp
