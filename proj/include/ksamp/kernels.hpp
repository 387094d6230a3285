#pragma once

// Kernels over transfer-operator matrices, the cosine pseudo-metric they
// induce, and analytic gradients with respect to the first argument.

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "ksamp/dictionary.hpp"
#include "ksamp/error.hpp"
#include "ksamp/linalg.hpp"

namespace ksamp {

// k(A, B) = trace(A^T B)
struct TraceKernel {};

// Binet-Cauchy style kernel: sum of order-m principal minors of the
// discounted Gram series sum_t exp(-lambda t) (K1^t)^T K2^t, t < T.
struct KoopmanKernel {
  int m = 2;
  int t_horizon = 80;
  double lambda = 0.0;
  bool lambda_auto = false; // resolve to max(0, 2 log rho(K0)) before use
};

// trace(P1 P2) for the projections onto the extended observability spaces of
// two strictly stable systems.
struct ProjectionKernel {
  double stab_tol = 1e-3;
};

// Order-2 kernel between trajectories (2 x T state matrices) built from a
// feature dictionary.
struct TrajectoryKernel {
  int m = 2;
  int t_horizon = 1;
  ObservableDictionary feature = poly_dictionary(1);
};

using KernelSpec = std::variant<TraceKernel, KoopmanKernel, ProjectionKernel, TrajectoryKernel>;

struct GramSeries {
  Mat s;
  int t_used = 0;
};

namespace detail {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

inline std::vector<Mat> powers(const Mat& k, int count) {
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(count));
  out.push_back(Mat::Identity(k.rows(), k.cols()));
  for (int t = 1; t < count; ++t) out.push_back(out.back() * k);
  return out;
}

inline void check_koopman(const KoopmanKernel& spec) {
  require(!spec.lambda_auto, "koopman kernel: lambda=auto must be resolved against a nominal operator");
  require(spec.m >= 1, "koopman kernel: m must be >= 1");
  require(spec.t_horizon >= 1, "koopman kernel: T must be >= 1");
  require(spec.lambda >= 0.0 && std::isfinite(spec.lambda), "koopman kernel: lambda must be >= 0");
}

inline void overflow_diagnostic(const KoopmanKernel& spec) {
  std::ostringstream msg;
  msg << "koopman kernel: Gram series overflowed (lambda=" << spec.lambda << ", T=" << spec.t_horizon
      << "); the discounted series needs lambda > 2 log rho(K) for both operators";
  throw NumericalError(msg.str());
}

inline Mat gram_from_powers(const std::vector<Mat>& p1, const std::vector<Mat>& p2,
                            const KoopmanKernel& spec) {
  Mat s = Mat::Zero(p1.front().rows(), p1.front().cols());
  for (int t = 0; t < spec.t_horizon; ++t) {
    const double w = std::exp(-spec.lambda * t);
    s.noalias() += w * (p1[static_cast<std::size_t>(t)].transpose() * p2[static_cast<std::size_t>(t)]);
  }
  if (!s.allFinite()) overflow_diagnostic(spec);
  return s;
}

// Elementary symmetric functions e_1..e_m of the eigenvalues of s and the
// Faddeev-LeVerrier chain matrix M_m, whose transpose is d e_m / d s.
struct CharPolyChain {
  std::vector<double> e; // e[0] = 1
  Mat chain;             // M_m
};

inline CharPolyChain faddeev_leverrier(const Mat& s, int m) {
  const auto d = s.rows();
  CharPolyChain out;
  out.e.assign(static_cast<std::size_t>(m) + 1, 0.0);
  out.e[0] = 1.0;
  Mat chain = Mat::Identity(d, d); // M_1
  for (int k = 1; k <= m; ++k) {
    if (k > 1) {
      Mat next = -(s * chain);
      next.diagonal().array() += out.e[static_cast<std::size_t>(k) - 1];
      chain = std::move(next);
    }
    out.e[static_cast<std::size_t>(k)] = (s * chain).trace() / k;
  }
  out.chain = std::move(chain);
  return out;
}

// d minor_sum(s, m) / d s
inline Mat minor_sum_grad(const Mat& s, int m) {
  const auto d = s.rows();
  if (m == 1) return Mat::Identity(d, d);
  if (m == 2) {
    Mat g = -s.transpose();
    g.diagonal().array() += s.trace();
    return g;
  }
  return faddeev_leverrier(s, m).chain.transpose();
}

// Gradient of minor_sum(S(K, K0)) w.r.t. K given cached powers of both.
// Accumulates sum_t w_t sum_j (K^T)^j (K0^t G^T) (K^T)^{t-1-j} with a
// backward recursion over j.
inline Mat koopman_grad_from_powers(const std::vector<Mat>& pk, const std::vector<Mat>& pk0,
                                    const Mat& g, const KoopmanKernel& spec) {
  const auto d = pk.front().rows();
  const int horizon = spec.t_horizon;
  Mat grad = Mat::Zero(d, d);
  if (horizon < 2) return grad;
  const Mat kt = pk[1].transpose();
  const Mat gt = g.transpose();
  Mat acc = Mat::Zero(d, d);
  for (int j = horizon - 2; j >= 0; --j) {
    const auto t = static_cast<std::size_t>(j) + 1;
    Mat next = std::exp(-spec.lambda * static_cast<double>(t)) * (pk0[t] * gt);
    next.noalias() += acc * kt;
    acc = std::move(next);
    grad.noalias() += pk[static_cast<std::size_t>(j)].transpose() * acc;
  }
  if (!grad.allFinite()) overflow_diagnostic(spec);
  return grad;
}

} // namespace detail

/// Discounted Gram series S = sum_{t<T} exp(-lambda t) (k1^t)^T k2^t.
inline GramSeries gram_series(const Mat& k1, const Mat& k2, const KoopmanKernel& spec) {
  detail::check_koopman(spec);
  require_square(k1, "gram_series");
  detail::require(k1.rows() == k2.rows() && k1.cols() == k2.cols(), "gram_series: shape mismatch");
  const auto p1 = detail::powers(k1, spec.t_horizon);
  const auto p2 = detail::powers(k2, spec.t_horizon);
  return {detail::gram_from_powers(p1, p2, spec), spec.t_horizon};
}

/// Sum of all order-m principal minors of s (the m-th elementary symmetric
/// function of its eigenvalues).
inline double minor_sum(const Mat& s, int m) {
  require_square(s, "minor_sum");
  if (m < 1 || m > s.rows())
    throw InvalidArgument("minor_sum: m=" + std::to_string(m) + " out of range [1, " +
                          std::to_string(s.rows()) + "]");
  if (m == 1) return s.trace();
  if (m == 2) {
    const double tr = s.trace();
    return 0.5 * (tr * tr - frob_inner(s.transpose(), s));
  }
  return detail::faddeev_leverrier(s, m).e.back();
}

/// Solves a^T G b - G + c = 0 by the fixed-point iteration G <- c + a^T G b.
/// Requires rho(a) rho(b) < 1.
inline Mat stein_solve(const Mat& a, const Mat& b, const Mat& c, double tol) {
  require_square(a, "stein_solve");
  require_square(b, "stein_solve");
  detail::require(c.rows() == a.rows() && c.cols() == b.rows(), "stein_solve: c is not conformable");
  detail::require(tol > 0.0, "stein_solve: tol must be positive");
  const double rate = spectral_radius(a) * spectral_radius(b);
  if (!(rate < 1.0))
    throw StabilityError("stein_solve: rho(a) * rho(b) = " + std::to_string(rate) +
                         " >= 1, the fixed-point iteration diverges");
  const Mat at = a.transpose();
  Mat g = c;
  constexpr long max_iter = 1'000'000;
  for (long it = 0; it < max_iter; ++it) {
    Mat next = c + at * g * b;
    const double delta = (next - g).norm();
    g = std::move(next);
    if (!g.allFinite()) throw NumericalError("stein_solve: iteration produced non-finite values");
    if (delta < tol) {
      const double residual = (at * g * b - g + c).norm();
      if (residual < 10.0 * tol) return g;
    }
  }
  throw NumericalError("stein_solve: no convergence within 1e6 iterations");
}

namespace detail {

inline void check_projection(const Mat& a, const ProjectionKernel& spec, const char* which) {
  const double rho = spectral_radius(a);
  if (!(rho < 1.0 - spec.stab_tol))
    throw StabilityError(std::string("projection kernel: ") + which + " has spectral radius " +
                         std::to_string(rho) + ", must be < 1 - stab_tol");
}

constexpr double kSteinTol = 1e-13;

struct ProjectionParts {
  Mat g11, g12, g22, g11_inv, g22_inv;
  double value = 0.0;
};

inline ProjectionParts projection_parts(const Mat& a1, const Mat& a2, const ProjectionKernel& spec) {
  check_projection(a1, spec, "first argument");
  check_projection(a2, spec, "second argument");
  const auto p = a1.rows();
  const Mat eye = Mat::Identity(p, p);
  ProjectionParts out;
  out.g11 = stein_solve(a1, a1, eye, kSteinTol);
  out.g12 = stein_solve(a1, a2, eye, kSteinTol);
  out.g22 = stein_solve(a2, a2, eye, kSteinTol);
  out.g11_inv = spd_solve(out.g11, eye, "projection kernel");
  out.g22_inv = spd_solve(out.g22, eye, "projection kernel");
  out.value = (out.g11_inv * out.g12 * out.g22_inv * out.g12.transpose()).trace();
  return out;
}

inline Mat projection_grad(const Mat& a1, const Mat& a2, const ProjectionKernel& spec) {
  const auto parts = projection_parts(a1, a2, spec);
  const Mat left = parts.g11_inv * parts.g12 * parts.g22_inv; // G11^-1 G12 G22^-1
  const Mat w12 = 2.0 * left;
  const Mat w11 = -left * parts.g12.transpose() * parts.g11_inv;
  const Mat r12 = stein_solve(a1.transpose(), a2.transpose(), w12, kSteinTol);
  const Mat r11 = stein_solve(a1.transpose(), a1.transpose(), w11, kSteinTol);
  return parts.g12 * a2 * r12.transpose() + parts.g11 * a1 * r11.transpose() +
         parts.g11.transpose() * a1 * r11;
}

} // namespace detail

/// Order-2 trajectory kernel with feature kernel <phi(x), phi(y)>.
inline double trajectory_kernel(const std::vector<State>& x, const std::vector<State>& x0,
                                const ObservableDictionary& feature) {
  detail::require(x.size() == x0.size(), "trajectory_kernel: trajectories differ in length");
  const auto n = x.size();
  std::vector<Vec> fx, f0;
  fx.reserve(n);
  f0.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    fx.push_back(feature(x[i]));
    f0.push_back(feature(x0[i]));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      total += fx[i].dot(fx[j]) * f0[i].dot(f0[j]) - fx[i].dot(f0[j]) * f0[i].dot(fx[j]);
  return total;
}

namespace detail {

inline std::vector<State> columns_as_states(const Mat& m) {
  require(m.rows() == 2, "trajectory kernel: expected a 2 x T state matrix");
  std::vector<State> out;
  for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back({m(0, j), m(1, j)});
  return out;
}

} // namespace detail

inline double kernel_eval(const KernelSpec& spec, const Mat& k1, const Mat& k2) {
  detail::require(k1.rows() == k2.rows() && k1.cols() == k2.cols(), "kernel_eval: shape mismatch");
  return std::visit(
      detail::overloaded{
          [&](const TraceKernel&) { return frob_inner(k1, k2); },
          [&](const KoopmanKernel& s) {
            detail::check_koopman(s);
            detail::require(s.m <= k1.rows(), "koopman kernel: m exceeds operator dimension");
            return minor_sum(gram_series(k1, k2, s).s, s.m);
          },
          [&](const ProjectionKernel& s) {
            require_square(k1, "projection kernel");
            return detail::projection_parts(k1, k2, s).value;
          },
          [&](const TrajectoryKernel& s) {
            detail::require(s.m == 2, "trajectory kernel: only m=2 is supported");
            return trajectory_kernel(detail::columns_as_states(k1), detail::columns_as_states(k2),
                                     s.feature);
          }},
      spec);
}

/// Gradient of kernel_eval(spec, k, k0) with respect to k.
inline Mat kernel_grad(const KernelSpec& spec, const Mat& k, const Mat& k0) {
  detail::require(k.rows() == k0.rows() && k.cols() == k0.cols(), "kernel_grad: shape mismatch");
  return std::visit(
      detail::overloaded{
          [&](const TraceKernel&) -> Mat { return k0; },
          [&](const KoopmanKernel& s) -> Mat {
            detail::check_koopman(s);
            require_square(k, "koopman kernel");
            detail::require(s.m <= k.rows(), "koopman kernel: m exceeds operator dimension");
            const auto pk = detail::powers(k, s.t_horizon);
            const auto pk0 = detail::powers(k0, s.t_horizon);
            const Mat sum = detail::gram_from_powers(pk, pk0, s);
            return detail::koopman_grad_from_powers(pk, pk0, detail::minor_sum_grad(sum, s.m), s);
          },
          [&](const ProjectionKernel& s) -> Mat {
            require_square(k, "projection kernel");
            return detail::projection_grad(k, k0, s);
          },
          [&](const TrajectoryKernel&) -> Mat {
            throw InvalidArgument("kernel_grad: the trajectory kernel has no operator gradient");
          }},
      spec);
}

namespace detail {

inline double cosine_from_kernels(double k12, double k11, double k00) {
  if (!(k11 > 0.0) || !(k00 > 0.0))
    throw InvalidArgument("cosine_distance: self-kernel is not positive");
  const double c = k12 / (std::sqrt(k11) * std::sqrt(k00));
  return std::clamp(c, -1.0, 1.0);
}

inline double distance_from_cosine(double c) { return std::sqrt(std::max(0.0, 1.0 - c * c)); }

} // namespace detail

/// Cosine pseudo-metric sqrt(1 - <k,k0>^2 / (<k,k><k0,k0>)), in [0, 1].
inline double cosine_distance(const KernelSpec& spec, const Mat& k, const Mat& k0) {
  const double k12 = kernel_eval(spec, k, k0);
  const double k11 = kernel_eval(spec, k, k);
  const double k00 = kernel_eval(spec, k0, k0);
  if (!std::isfinite(k12) || !std::isfinite(k11) || !std::isfinite(k00))
    throw NumericalError("cosine_distance: kernel value is not finite");
  return detail::distance_from_cosine(detail::cosine_from_kernels(k12, k11, k00));
}

/// Replaces lambda=auto by max(0, 2 log rho(k0)); other specs pass through.
inline KernelSpec resolve_kernel(KernelSpec spec, const Mat& k0) {
  if (auto* koop = std::get_if<KoopmanKernel>(&spec); koop && koop->lambda_auto) {
    const double rho = spectral_radius(k0);
    koop->lambda = rho > 0.0 ? std::max(0.0, 2.0 * std::log(rho)) : 0.0;
    koop->lambda_auto = false;
  }
  return spec;
}

/// Parses "trace", "projection[:stab_tol=..]" or
/// "koopman:m=2,T=80,lambda=0.0" (lambda may be "auto").
inline KernelSpec parse_kernel_spec(std::string_view text) {
  const auto colon = text.find(':');
  const std::string name(text.substr(0, colon));
  std::vector<std::pair<std::string, std::string>> args;
  if (colon != std::string_view::npos) {
    std::string rest(text.substr(colon + 1));
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw InvalidArgument("kernel spec: expected key=value, got '" + item + "'");
      args.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
  }
  auto to_double = [](const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty()) throw InvalidArgument("kernel spec: bad value for " + key + ": '" + v + "'");
    return out;
  };
  auto to_int = [&](const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x != std::floor(x)) throw InvalidArgument("kernel spec: " + key + " must be an integer");
    return static_cast<int>(x);
  };
  if (name == "trace") {
    if (!args.empty()) throw InvalidArgument("kernel spec: trace takes no parameters");
    return TraceKernel{};
  }
  if (name == "projection") {
    ProjectionKernel p;
    for (const auto& [key, v] : args) {
      if (key == "stab_tol") p.stab_tol = to_double(key, v);
      else throw InvalidArgument("kernel spec: unknown projection parameter '" + key + "'");
    }
    detail::require(p.stab_tol > 0.0, "kernel spec: stab_tol must be positive");
    return p;
  }
  if (name == "koopman") {
    KoopmanKernel k;
    for (const auto& [key, v] : args) {
      if (key == "m") k.m = to_int(key, v);
      else if (key == "T") k.t_horizon = to_int(key, v);
      else if (key == "lambda") {
        if (v == "auto") k.lambda_auto = true;
        else k.lambda = to_double(key, v);
      } else throw InvalidArgument("kernel spec: unknown koopman parameter '" + key + "'");
    }
    detail::require(k.m >= 1 && k.t_horizon >= 1 && k.lambda >= 0.0,
                    "kernel spec: koopman requires m >= 1, T >= 1, lambda >= 0");
    return k;
  }
  throw InvalidArgument("kernel spec: unknown kernel '" + name + "'");
}

inline std::string kernel_name(const KernelSpec& spec) {
  return std::visit(detail::overloaded{[](const TraceKernel&) { return std::string("trace"); },
                                       [](const KoopmanKernel&) { return std::string("koopman"); },
                                       [](const ProjectionKernel&) { return std::string("projection"); },
                                       [](const TrajectoryKernel&) { return std::string("trajectory"); }},
                    spec);
}

} // namespace ksamp
