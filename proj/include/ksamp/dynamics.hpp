#pragma once

// Planar test systems: 2x2 linear ODEs and the unforced Duffing oscillator,
// with RK4 simulation, EDMD lifting and basin / phase-portrait labels.

#include <array>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "ksamp/dictionary.hpp"
#include "ksamp/error.hpp"
#include "ksamp/linalg.hpp"
#include "ksamp/operator.hpp"

namespace ksamp {

struct LinearSystem {
  Mat a; // 2x2 continuous-time generator
};

// x' = y, y' = -damping * y + x - x^3
struct DuffingSystem {
  double damping = 0.3;
};

using OdeSystem = std::variant<LinearSystem, DuffingSystem>;

struct Trajectory {
  std::vector<State> states;
  double dt = 1.0;
  bool diverged = false; // truncated after leaving the divergence radius
};

inline constexpr double kDivergenceRadius = 10.0;
inline constexpr double kAttractorTol = 0.1;

inline double norm(const State& s) { return std::hypot(s[0], s[1]); }

inline State vector_field(const OdeSystem& sys, const State& s) {
  if (const auto* lin = std::get_if<LinearSystem>(&sys))
    return {lin->a(0, 0) * s[0] + lin->a(0, 1) * s[1], lin->a(1, 0) * s[0] + lin->a(1, 1) * s[1]};
  const double delta = std::get<DuffingSystem>(sys).damping;
  return {s[1], -delta * s[1] + s[0] - s[0] * s[0] * s[0]};
}

inline State rk4_step(const OdeSystem& sys, const State& s, double h) {
  auto axpy = [](const State& x, double c, const State& v) -> State { return {x[0] + c * v[0], x[1] + c * v[1]}; };
  const State k1 = vector_field(sys, s);
  const State k2 = vector_field(sys, axpy(s, 0.5 * h, k1));
  const State k3 = vector_field(sys, axpy(s, 0.5 * h, k2));
  const State k4 = vector_field(sys, axpy(s, h, k3));
  return {s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
          s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
}

enum class Integrator { RK4, ExactLinear };

/// Integrates n_steps steps of size dt from x0 (the initial state included).
/// Stops early, flagging divergence, if the state overflows.
inline Trajectory simulate(const OdeSystem& sys, const State& x0, double dt, int n_steps,
                           Integrator method = Integrator::RK4) {
  detail::require(dt > 0.0, "simulate: dt must be positive");
  detail::require(n_steps >= 0, "simulate: n_steps must be >= 0");
  if (const auto* lin = std::get_if<LinearSystem>(&sys))
    detail::require(lin->a.rows() == 2 && lin->a.cols() == 2, "simulate: linear generator must be 2x2");
  else
    detail::require(method == Integrator::RK4, "simulate: exact stepping needs a linear system");

  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.states.push_back(x0);
  Mat step;
  if (method == Integrator::ExactLinear) step = expm(std::get<LinearSystem>(sys).a, dt);
  State s = x0;
  for (int i = 0; i < n_steps; ++i) {
    if (method == Integrator::ExactLinear)
      s = {step(0, 0) * s[0] + step(0, 1) * s[1], step(1, 0) * s[0] + step(1, 1) * s[1]};
    else
      s = rk4_step(sys, s, dt);
    if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || norm(s) > 1e100) {
      traj.diverged = true;
      break;
    }
    traj.states.push_back(s);
  }
  return traj;
}

// V = y^2/2 - x^2/2 + x^4/4; dV/dt = -damping * y^2 along Duffing solutions.
inline double duffing_energy(const State& s) {
  return 0.5 * s[1] * s[1] - 0.5 * s[0] * s[0] + 0.25 * s[0] * s[0] * s[0] * s[0];
}

inline Mat lti_discretize(const Mat& a, double dt) {
  require_square(a, "lti_discretize");
  return expm(a, dt);
}

enum class PhaseClass { Saddle, SpiralSink, SpiralSource, NodalSink, NodalSource, Center, Degenerate };

inline std::string to_string(PhaseClass c) {
  switch (c) {
  case PhaseClass::Saddle: return "saddle";
  case PhaseClass::SpiralSink: return "spiral_sink";
  case PhaseClass::SpiralSource: return "spiral_source";
  case PhaseClass::NodalSink: return "nodal_sink";
  case PhaseClass::NodalSource: return "nodal_source";
  case PhaseClass::Center: return "center";
  case PhaseClass::Degenerate: return "degenerate";
  }
  return "unknown";
}

inline PhaseClass parse_phase_class(const std::string& name) {
  for (auto c : {PhaseClass::Saddle, PhaseClass::SpiralSink, PhaseClass::SpiralSource, PhaseClass::NodalSink,
                 PhaseClass::NodalSource, PhaseClass::Center, PhaseClass::Degenerate})
    if (to_string(c) == name) return c;
  throw InvalidArgument("unknown system kind '" + name + "'");
}

/// Fixed representatives of the phase-portrait classes used in the 2x2
/// experiments.
inline Mat canonical_2x2(PhaseClass kind) {
  switch (kind) {
  case PhaseClass::SpiralSink: return make_mat({{-0.5, -1.0}, {1.0, -0.5}});
  case PhaseClass::SpiralSource: return make_mat({{0.5, -1.0}, {1.0, 0.5}});
  case PhaseClass::NodalSink: return make_mat({{-1.0, 0.0}, {0.0, -2.0}});
  case PhaseClass::Center: return make_mat({{0.0, -1.0}, {1.0, 0.0}});
  case PhaseClass::Saddle: return make_mat({{1.0, 0.0}, {0.0, -1.0}});
  default: throw InvalidArgument("canonical_2x2: no representative for " + to_string(kind));
  }
}

/// Trace-determinant taxonomy of a 2x2 generator.
inline PhaseClass classify_tracedet(double tr, double det, double center_tol = 1e-9) {
  if (det > 0.0 && std::abs(tr) <= center_tol) return PhaseClass::Center;
  if (det < 0.0) return PhaseClass::Saddle;
  if (det == 0.0) return PhaseClass::Degenerate;
  const bool spiral = det > 0.25 * tr * tr;
  if (tr < 0.0) return spiral ? PhaseClass::SpiralSink : PhaseClass::NodalSink;
  return spiral ? PhaseClass::SpiralSource : PhaseClass::NodalSource;
}

inline PhaseClass classify_tracedet(const Mat& a, double center_tol = 1e-9) {
  detail::require(a.rows() == 2 && a.cols() == 2, "classify_tracedet: expected a 2x2 matrix");
  return classify_tracedet(a.trace(), a.determinant(), center_tol);
}

struct TraceDetPoint {
  double trace = 0.0;
  double det = 0.0;
  PhaseClass label = PhaseClass::Degenerate;
  bool has_log = true; // false: placed from eigenvalue moduli only
};

/// Places a sampled discrete-time 2x2 operator on the continuous
/// trace-determinant plane via A = logm(K) / dt. Without a principal
/// logarithm the real parts log|mu_i| / dt of the eigenvalues are used.
inline TraceDetPoint place_on_tracedet(const Mat& k, double dt, double center_tol) {
  TraceDetPoint out;
  try {
    const Mat a = logm_2x2(k) / dt;
    out.trace = a.trace();
    out.det = a.determinant();
  } catch (const NumericalError&) {
    out.has_log = false;
    const Spectrum spec = eigenvalues(k);
    const double r0 = std::log(std::abs(spec.eigenvalues[0])) / dt;
    const double r1 = std::log(std::abs(spec.eigenvalues[1])) / dt;
    out.trace = r0 + r1;
    out.det = r0 * r1;
  }
  out.label = classify_tracedet(out.trace, out.det, center_tol);
  return out;
}

/// Snapshot pairs: column t of x is phi(state_t), of y is phi(state_{t+1}).
inline std::pair<Mat, Mat> lift(const ObservableDictionary& dict, const Trajectory& traj) {
  detail::require(traj.states.size() >= 2, "lift: trajectory needs at least two states");
  const auto n = static_cast<Eigen::Index>(traj.states.size()) - 1;
  const auto d = static_cast<Eigen::Index>(dict.size());
  Mat x(d, n), y(d, n);
  Vec prev = dict(traj.states.front());
  for (Eigen::Index t = 0; t < n; ++t) {
    Vec next = dict(traj.states[static_cast<std::size_t>(t) + 1]);
    x.col(t) = prev;
    y.col(t) = next;
    prev = std::move(next);
  }
  return {std::move(x), std::move(y)};
}

/// Lifts several trajectories and concatenates the snapshot columns.
inline std::pair<Mat, Mat> lift_all(const ObservableDictionary& dict, const std::vector<Trajectory>& trajs) {
  Eigen::Index total = 0;
  for (const auto& t : trajs)
    if (t.states.size() >= 2) total += static_cast<Eigen::Index>(t.states.size()) - 1;
  detail::require(total > 0, "lift_all: no snapshot pairs");
  const auto d = static_cast<Eigen::Index>(dict.size());
  Mat x(d, total), y(d, total);
  Eigen::Index off = 0;
  for (const auto& t : trajs) {
    if (t.states.size() < 2) continue;
    auto [tx, ty] = lift(dict, t);
    x.middleCols(off, tx.cols()) = tx;
    y.middleCols(off, ty.cols()) = ty;
    off += tx.cols();
  }
  return {std::move(x), std::move(y)};
}

// Relift: x <- project(K phi(x)), re-evaluating the dictionary every step.
// Linear: z <- K z in observable space, projecting only for output.
enum class PredictionMode { Relift, Linear };

/// Rolls the operator forward from phi(x0) and reads the state off the linear
/// monomials. Stops and flags divergence once |state| > divergence_radius.

inline Trajectory predict_trajectory(const TransferOperator& op, const ObservableDictionary& dict,
                                     const State& x0, int n_steps,
                                     double divergence_radius = kDivergenceRadius,
                                     PredictionMode mode = PredictionMode::Relift) {
  detail::require(static_cast<Eigen::Index>(dict.size()) == op.dim(),
                  "predict_trajectory: dictionary does not match operator dimension");
  detail::require(n_steps >= 0, "predict_trajectory: n_steps must be >= 0");
  Trajectory traj;
  traj.dt = op.dt;
  traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.states.push_back(x0);
  Vec z = dict(x0);
  Vec next(z.size());
  for (int i = 0; i < n_steps; ++i) {
    next.noalias() = op.k * z;
    const State s = dict.project(next);
    if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || norm(s) > divergence_radius) {
      traj.diverged = true;
      break;
    }
    traj.states.push_back(s);
    if (mode == PredictionMode::Relift) z = dict(s);
    else z.swap(next);
  }
  return traj;
}

enum class BasinLabel { Left, Right, Diverged, Undecided };

inline std::string to_string(BasinLabel b) {
  switch (b) {
  case BasinLabel::Left: return "left";
  case BasinLabel::Right: return "right";
  case BasinLabel::Diverged: return "diverged";
  case BasinLabel::Undecided: return "undecided";
  }
  return "unknown";
}

inline BasinLabel classify_basin(const Trajectory& traj, double attractor_tol = kAttractorTol,
                                 double divergence_radius = kDivergenceRadius) {
  if (traj.diverged) return BasinLabel::Diverged;
  for (const auto& s : traj.states)
    if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || norm(s) > divergence_radius) return BasinLabel::Diverged;
  if (traj.states.empty()) return BasinLabel::Undecided;
  const State& last = traj.states.back();
  if (std::hypot(last[0] - 1.0, last[1]) <= attractor_tol) return BasinLabel::Right;
  if (std::hypot(last[0] + 1.0, last[1]) <= attractor_tol) return BasinLabel::Left;
  return BasinLabel::Undecided;
}

/// n x n uniform grid over [lo, hi]^2, row-major in (x, y).
inline std::vector<State> uniform_grid(int n, double lo, double hi) {
  detail::require(n >= 1, "uniform_grid: n must be >= 1");
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  auto coord = [&](int i) { return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1); };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.push_back({coord(i), coord(j)});
  return out;
}

} // namespace ksamp
