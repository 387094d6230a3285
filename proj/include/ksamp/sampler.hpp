#pragma once

// Hamiltonian Monte Carlo over operator matrices. The potential is
// U(K) = -log p_D(d_k(K, K0)) with d_k the cosine pseudo-metric of a kernel;
// the kinetic term is 0.5 * trace(R^T R) (identity mass matrix).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/SVD>

#include "ksamp/density.hpp"
#include "ksamp/kernels.hpp"
#include "ksamp/linalg.hpp"
#include "ksamp/operator.hpp"

namespace ksamp {

enum class ConstraintFunction { SpectralRadius, Trace };

struct ConstraintSpec {
  ConstraintFunction f = ConstraintFunction::SpectralRadius;
  double a = 0.0;
  double b = 1.0;
  double reflect_tol = 1e-12;  // drift time left below which a step is exhausted
  double boundary_tol = 1e-8;  // bisection tolerance on the drift time
  int max_reflections = 100;
};

struct HmcConfig {
  double step_size = 1e-4;
  int n_leapfrog = 100;
  int n_samples = 200;
  int n_chains = 10;
  int n_prerun = 10;
  std::optional<int> burn_in; // default: 10% of the per-chain quota
  int thin = 1;
  std::uint64_t seed = 0;
  DensitySpec density = BetaDensity{1.0, 5.0};
  KernelSpec kernel = KoopmanKernel{};
  std::optional<ConstraintSpec> constraint;

  int per_chain() const { return n_samples / n_chains; }
  int effective_burn_in() const { return burn_in ? *burn_in : per_chain() / 10; }
};

inline void validate(const HmcConfig& cfg) {
  detail::require(cfg.step_size > 0.0 && std::isfinite(cfg.step_size), "hmc: step_size must be positive");
  detail::require(cfg.n_leapfrog >= 1, "hmc: n_leapfrog must be >= 1");
  detail::require(cfg.n_samples >= 1, "hmc: n_samples must be >= 1");
  detail::require(cfg.n_chains >= 1, "hmc: n_chains must be >= 1");
  detail::require(cfg.n_samples % cfg.n_chains == 0, "hmc: n_samples must be divisible by n_chains");
  detail::require(cfg.n_prerun >= 0, "hmc: n_prerun must be >= 0");
  detail::require(!cfg.burn_in || *cfg.burn_in >= 0, "hmc: burn_in must be >= 0");
  detail::require(cfg.thin >= 1, "hmc: thin must be >= 1");
  validate(cfg.density);
  if (cfg.constraint) {
    const auto& c = *cfg.constraint;
    detail::require(c.a < c.b, "constraint: need a < b");
    detail::require(c.reflect_tol > 0.0 && c.boundary_tol > 0.0, "constraint: tolerances must be positive");
    detail::require(c.max_reflections >= 1, "constraint: max_reflections must be >= 1");
  }
}

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

} // namespace detail

// Independent stream for (seed, stream id). Chains use their index; the
// pre-run uses kPrerunStream.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t s0 = detail::splitmix64(seed ^ detail::splitmix64(stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(s0), static_cast<std::uint32_t>(s0 >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline constexpr std::uint64_t kPrerunStream = 0xFFFF'FFFF'FFFF'FFFFULL;

inline Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat out(rows, cols);
  // Row-major fill so streams are layout independent.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Potentials

/// Cosine-metric potential around a nominal operator. Caches everything that
/// depends only on the nominal; evaluation is const and thread-safe.
class MetricPotential {
public:
  static constexpr double kDistanceFloor = 1e-6;

  MetricPotential(DensitySpec density, const KernelSpec& kernel, Mat k0)
      : density_(density), kernel_(resolve_kernel(kernel, k0)), k0_(std::move(k0)) {
    validate(density_);
    require_finite(k0_, "MetricPotential");
    if (const auto* koop = std::get_if<KoopmanKernel>(&kernel_)) {
      detail::check_koopman(*koop);
      require_square(k0_, "MetricPotential");
      detail::require(koop->m <= k0_.rows(), "koopman kernel: m exceeds operator dimension");
      k0_powers_ = detail::powers(k0_, koop->t_horizon);
      k00_ = minor_sum(detail::gram_from_powers(k0_powers_, k0_powers_, *koop), koop->m);
    } else {
      k00_ = kernel_eval(kernel_, k0_, k0_);
    }
    if (!(k00_ > 0.0) || !std::isfinite(k00_))
      throw InvalidArgument("MetricPotential: nominal self-kernel must be positive and finite");
  }

  const KernelSpec& kernel() const { return kernel_; }
  const Mat& nominal() const { return k0_; }

  double distance(const Mat& k) const { return evaluate(k, false).distance; }

  double value(const Mat& k) const {
    double d = 0.0;
    try {
      d = distance(k);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const InvalidArgument&) {
      return std::numeric_limits<double>::infinity();
    }
    return -log_density(density_, d);
  }

  /// Gradient of the distance, with d floored at kDistanceFloor in the c/d factor.
  Mat distance_grad(const Mat& k) const { return *evaluate(k, true).grad; }

  Mat grad(const Mat& k) const {
    if (k == k0_) return Mat::Zero(k.rows(), k.cols());
    Evaluation e;
    try {
      e = evaluate(k, true);
    } catch (const NumericalError&) {
      return Mat::Constant(k.rows(), k.cols(), std::numeric_limits<double>::quiet_NaN());
    } catch (const InvalidArgument&) {
      return Mat::Constant(k.rows(), k.cols(), std::numeric_limits<double>::quiet_NaN());
    }
    return -dlog_density(density_, std::max(e.distance, kDistanceFloor)) * *e.grad;
  }

private:
  struct Evaluation {
    double distance = 0.0;
    std::optional<Mat> grad;
  };

  Evaluation evaluate(const Mat& k, bool with_grad) const {
    detail::require(k.rows() == k0_.rows() && k.cols() == k0_.cols(), "MetricPotential: shape mismatch");
    double k12 = 0.0, k11 = 0.0;
    Mat g12, g11; // gradients of k(K, K0) and of k(., K) at K in the first slot
    if (const auto* koop = std::get_if<KoopmanKernel>(&kernel_)) {
      const auto pk = detail::powers(k, koop->t_horizon);
      const Mat s12 = detail::gram_from_powers(pk, k0_powers_, *koop);
      const Mat s11 = detail::gram_from_powers(pk, pk, *koop);
      k12 = minor_sum(s12, koop->m);
      k11 = minor_sum(s11, koop->m);
      if (with_grad) {
        g12 = detail::koopman_grad_from_powers(pk, k0_powers_, detail::minor_sum_grad(s12, koop->m), *koop);
        g11 = detail::koopman_grad_from_powers(pk, pk, detail::minor_sum_grad(s11, koop->m), *koop);
      }
    } else {
      k12 = kernel_eval(kernel_, k, k0_);
      k11 = kernel_eval(kernel_, k, k);
      if (with_grad) {
        g12 = kernel_grad(kernel_, k, k0_);
        g11 = kernel_grad(kernel_, k, k);
      }
    }
    if (!std::isfinite(k12) || !std::isfinite(k11))
      throw NumericalError("MetricPotential: kernel value is not finite");
    const double c = detail::cosine_from_kernels(k12, k11, k00_);
    Evaluation out;
    out.distance = detail::distance_from_cosine(c);
    if (with_grad) {
      // c = k12 / sqrt(k11 k00); d(k11)/dK = 2 g11 by symmetry of the kernel.
      const double root = std::sqrt(k11) * std::sqrt(k00_);
      const Mat grad_c = g12 / root - (k12 / (root * k11)) * g11;
      out.grad = -(c / std::max(out.distance, kDistanceFloor)) * grad_c;
    }
    return out;
  }

  DensitySpec density_;
  KernelSpec kernel_;
  Mat k0_;
  std::vector<Mat> k0_powers_;
  double k00_ = 0.0;
};

struct ZeroPotential {
  double value(const Mat&) const { return 0.0; }
  Mat grad(const Mat& k) const { return Mat::Zero(k.rows(), k.cols()); }
};

// U = 0.5 ||K - center||_F^2
struct GaussianPotential {
  Mat center;
  double value(const Mat& k) const { return 0.5 * (k - center).squaredNorm(); }
  Mat grad(const Mat& k) const { return k - center; }
};

/// U(k) = -log p_D(d_k(k, k0)) for the kernel and density of cfg.
inline double potential(const HmcConfig& cfg, const Mat& k, const Mat& k0) {
  return MetricPotential(cfg.density, cfg.kernel, k0).value(k);
}

inline Mat potential_grad(const HmcConfig& cfg, const Mat& k, const Mat& k0) {
  return MetricPotential(cfg.density, cfg.kernel, k0).grad(k);
}

// ---------------------------------------------------------------------------
// Constraints

/// Gradient of the spectral radius via first-order eigenvalue perturbation:
/// Re(conj(l)/|l| * w v^T / (w^T v)) with K v = l v and K^T w = l w.
/// Falls back to central differences when the dominant eigenvalue is not
/// simple in modulus.
inline Mat spectral_radius_grad(const Mat& k) {
  require_square(k, "spectral_radius_grad");
  const auto d = k.rows();
  const Spectrum spec = eigenvalues(k);
  const double rho = spec.spectral_radius;
  if (d == 1) {
    Mat g(1, 1);
    g(0, 0) = k(0, 0) >= 0.0 ? 1.0 : -1.0;
    return g;
  }
  const Complex lambda = spec.eigenvalues.front();
  const std::size_t next = lambda.imag() != 0.0 ? 2 : 1;
  const bool simple =
      rho > 0.0 && (next >= spec.eigenvalues.size() ||
                    std::abs(spec.eigenvalues[next]) < rho * (1.0 - 1e-8));
  if (simple) {
    using CMat = Eigen::MatrixXcd;
    auto null_vector = [&](const Mat& m) {
      CMat shifted = m.cast<Complex>();
      shifted.diagonal().array() -= lambda;
      Eigen::JacobiSVD<CMat> svd(shifted, Eigen::ComputeFullV);
      return Eigen::VectorXcd(svd.matrixV().col(d - 1));
    };
    const Eigen::VectorXcd v = null_vector(k);
    const Eigen::VectorXcd w = null_vector(k.transpose());
    const Complex denom = (w.transpose() * v)(0, 0);
    if (std::abs(denom) > 1e-10) {
      const Complex scale = std::conj(lambda) / (std::abs(lambda) * denom);
      const Mat g = (scale * (w * v.transpose())).real();
      if (g.allFinite()) return g;
    }
  }
  constexpr double h = 1e-6;
  Mat g(d, d);
  Mat probe = k;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      probe(i, j) = k(i, j) + h;
      const double up = spectral_radius(probe);
      probe(i, j) = k(i, j) - h;
      const double down = spectral_radius(probe);
      probe(i, j) = k(i, j);
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

inline double constraint_value(ConstraintFunction f, const Mat& k) {
  switch (f) {
  case ConstraintFunction::SpectralRadius: return spectral_radius(k);
  case ConstraintFunction::Trace: return k.trace();
  }
  return 0.0;
}

inline Mat constraint_grad(ConstraintFunction f, const Mat& k) {
  switch (f) {
  case ConstraintFunction::SpectralRadius: return spectral_radius_grad(k);
  case ConstraintFunction::Trace: return Mat::Identity(k.rows(), k.cols());
  }
  return Mat();
}

inline bool satisfies(const ConstraintSpec& c, const Mat& k) {
  const double v = constraint_value(c.f, k);
  return v >= c.a && v <= c.b;
}

// ---------------------------------------------------------------------------
// Integrators

struct LeapfrogResult {
  Mat k;
  Mat r;
  bool diverged = false;
  int reflections = 0;
  std::string diagnostic;
};

namespace detail {

// One drift of length `step` that bounces off the constraint boundary:
// bisect to the boundary, reflect the momentum about the constraint
// gradient, continue with the remaining time until it is exhausted.
inline void bounded_drift(const ConstraintSpec& c, double step, LeapfrogResult& state) {
  double remaining = step;
  auto inside = [&](const Mat& m) {
    double v = 0.0;
    try {
      v = constraint_value(c.f, m);
    } catch (const NumericalError&) {
      return false;
    }
    return v >= c.a && v <= c.b;
  };
  while (remaining > c.reflect_tol) {
    Mat trial = state.k + remaining * state.r;
    if (inside(trial)) {
      state.k = std::move(trial);
      return;
    }
    double lo = 0.0, hi = 1.0;
    while ((hi - lo) * remaining > c.boundary_tol) {
      const double mid = 0.5 * (lo + hi);
      if (inside(state.k + (mid * remaining) * state.r)) lo = mid;
      else hi = mid;
    }
    state.k += (lo * remaining) * state.r;
    remaining -= lo * remaining;
    const Mat normal = constraint_grad(c.f, state.k);
    const double nn = frob_inner(normal, normal);
    if (!(nn > 0.0) || !std::isfinite(nn)) {
      state.diverged = true;
      state.diagnostic = "reflective leapfrog: constraint gradient vanished at the boundary";
      return;
    }
    state.r -= (2.0 * frob_inner(state.r, normal) / nn) * normal;
    if (++state.reflections > c.max_reflections) {
      state.diverged = true;
      state.diagnostic = "reflective leapfrog: exceeded " + std::to_string(c.max_reflections) + " reflections";
      return;
    }
  }
}

} // namespace detail

/// Leapfrog integration (half kick, n_leapfrog drift/kick pairs, half kick).
/// With a constraint in cfg every drift is a bounded, reflecting drift.
template <class Potential>
LeapfrogResult leapfrog(const HmcConfig& cfg, const Potential& pot, const Mat& k, const Mat& r) {
  const double eps = cfg.step_size;
  LeapfrogResult st{k, r, false, 0, {}};
  auto kick = [&](double scale) {
    st.r -= scale * pot.grad(st.k);
    if (!st.r.allFinite()) {
      st.diverged = true;
      st.diagnostic = "leapfrog: non-finite momentum";
    }
  };
  kick(0.5 * eps);
  for (int i = 0; i < cfg.n_leapfrog && !st.diverged; ++i) {
    if (cfg.constraint) detail::bounded_drift(*cfg.constraint, eps, st);
    else st.k += eps * st.r;
    if (st.diverged) break;
    if (!st.k.allFinite()) {
      st.diverged = true;
      st.diagnostic = "leapfrog: non-finite position";
      break;
    }
    kick(i + 1 < cfg.n_leapfrog ? eps : 0.5 * eps);
  }
  return st;
}

inline LeapfrogResult leapfrog(const HmcConfig& cfg, const Mat& k, const Mat& r, const Mat& k0) {
  return leapfrog(cfg, MetricPotential(cfg.density, cfg.kernel, k0), k, r);
}

/// Leapfrog with reflecting drifts; requires cfg.constraint.
template <class Potential>
LeapfrogResult reflect_leapfrog(const HmcConfig& cfg, const Potential& pot, const Mat& k, const Mat& r) {
  detail::require(cfg.constraint.has_value(), "reflect_leapfrog: no constraint configured");
  return leapfrog(cfg, pot, k, r);
}

inline LeapfrogResult reflect_leapfrog(const HmcConfig& cfg, const Mat& k, const Mat& r, const Mat& k0) {
  return reflect_leapfrog(cfg, MetricPotential(cfg.density, cfg.kernel, k0), k, r);
}

struct StepResult {
  Mat k;
  bool accepted = false;
  bool diverged = false;
};

/// One HMC transition: fresh standard-normal momentum, leapfrog, Metropolis
/// test on H = U + 0.5 trace(R^T R). Divergences are rejections.
template <class Potential>
StepResult hmc_step(const HmcConfig& cfg, const Potential& pot, const Mat& k, Rng& rng) {
  const Mat r = standard_normal(k.rows(), k.cols(), rng);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double h_old = pot.value(k) + 0.5 * r.squaredNorm();
  LeapfrogResult lf = leapfrog(cfg, pot, k, r);
  if (lf.diverged) return {k, false, true};
  const double h_new = pot.value(lf.k) + 0.5 * lf.r.squaredNorm();
  if (!std::isfinite(h_new)) return {k, false, true};
  const double log_accept = h_old - h_new;
  if (std::isnan(log_accept)) return {k, false, true};
  if (log_accept >= 0.0 || std::log(u) < log_accept) return {std::move(lf.k), true, false};
  return {k, false, false};
}

inline StepResult hmc_step(const HmcConfig& cfg, const Mat& k, const Mat& k0, Rng& rng) {
  return hmc_step(cfg, MetricPotential(cfg.density, cfg.kernel, k0), k, rng);
}

/// Free-flight pre-run from k0 (U = 0, momentum redrawn every step); records
/// one state every ceil(n_prerun / n_chains) steps as chain starting points.
inline std::vector<Mat> zero_potential_prerun(const HmcConfig& cfg, const Mat& k0, Rng& rng) {
  const auto chains = static_cast<std::size_t>(cfg.n_chains);
  if (cfg.n_prerun <= 0) return std::vector<Mat>(chains, k0);
  const int stride = (cfg.n_prerun + cfg.n_chains - 1) / cfg.n_chains;
  const ZeroPotential zero;
  std::vector<Mat> starts;
  starts.reserve(chains);
  Mat k = k0;
  for (int step = 1; starts.size() < chains; ++step) {
    const StepResult s = hmc_step(cfg, zero, k, rng);
    k = s.k;
    if (step % stride == 0) starts.push_back(k);
  }
  return starts;
}

// ---------------------------------------------------------------------------
// Parallel chains

struct SampleRecord {
  Mat k;
  double distance = 0.0;
  double spectral_radius = 0.0;
  int chain = 0;
  int index = 0;
};

struct SampleSet {
  TransferOperator nominal;
  std::vector<SampleRecord> samples;
  double accept_rate = 0.0;
  HmcConfig config_echo;
  std::vector<double> chain_accept_rates;
};

/// Runs the pre-run and n_chains independent chains on an arbitrary
/// potential; stored distances always use the metric of cfg. Output depends
/// only on (cfg, pot, k0); `threads` only changes scheduling.
template <class Potential>
SampleSet run(const HmcConfig& cfg, const Potential& pot, const TransferOperator& k0, int threads = 1) {
  validate(cfg);
  detail::require(threads >= 1, "run: threads must be >= 1");
  const MetricPotential metric(cfg.density, cfg.kernel, k0.k);
  HmcConfig echo = cfg;
  echo.kernel = metric.kernel();
  if (cfg.constraint)
    detail::require(satisfies(*cfg.constraint, k0.k), "run: nominal operator violates the constraint");

  Rng prerun_rng = make_stream(cfg.seed, kPrerunStream);
  const std::vector<Mat> starts = zero_potential_prerun(cfg, k0.k, prerun_rng);

  const int quota = cfg.per_chain();
  const int burn = cfg.effective_burn_in();
  const auto n_chains = static_cast<std::size_t>(cfg.n_chains);
  std::vector<std::vector<SampleRecord>> per_chain(n_chains);
  std::vector<long> accepted(n_chains, 0), attempted(n_chains, 0);
  std::vector<std::string> errors(n_chains);

  auto run_chain = [&](std::size_t c) {
    try {
      Rng rng = make_stream(cfg.seed, c);
      Mat k = starts[c];
      auto advance = [&] {
        const StepResult s = hmc_step(echo, pot, k, rng);
        ++attempted[c];
        if (s.accepted) {
          ++accepted[c];
          k = s.k;
        }
      };
      for (int b = 0; b < burn; ++b) advance();
      auto& out = per_chain[c];
      out.reserve(static_cast<std::size_t>(quota));
      for (int i = 0; i < quota; ++i) {
        for (int t = 0; t < cfg.thin; ++t) advance();
        out.push_back({k, metric.distance(k), spectral_radius(k), static_cast<int>(c), i});
      }
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  };

  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), n_chains);
  if (n_threads <= 1) {
    for (std::size_t c = 0; c < n_chains; ++c) run_chain(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < n_chains; c += n_threads) run_chain(c);
      });
    for (auto& th : pool) th.join();
  }

  std::string failure;
  for (std::size_t c = 0; c < n_chains; ++c)
    if (!errors[c].empty()) failure += "chain " + std::to_string(c) + ": " + errors[c] + "\n";
  if (!failure.empty()) throw NumericalError("run: chain failures\n" + failure);

  SampleSet out;
  out.nominal = k0;
  out.config_echo = std::move(echo);
  long acc = 0, att = 0;
  for (std::size_t c = 0; c < n_chains; ++c) {
    acc += accepted[c];
    att += attempted[c];
    out.chain_accept_rates.push_back(attempted[c] ? static_cast<double>(accepted[c]) / attempted[c] : 0.0);
    for (auto& rec : per_chain[c]) out.samples.push_back(std::move(rec));
  }
  out.accept_rate = att ? static_cast<double>(acc) / static_cast<double>(att) : 0.0;
  return out;
}

inline SampleSet run(const HmcConfig& cfg, const TransferOperator& k0, int threads = 1) {
  return run(cfg, MetricPotential(cfg.density, cfg.kernel, k0.k), k0, threads);
}

} // namespace ksamp
