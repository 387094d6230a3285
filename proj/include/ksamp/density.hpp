#pragma once

#include <cmath>
#include <limits>
#include <variant>

#include "ksamp/error.hpp"

namespace ksamp {

// Beta(alpha, beta) on the distance d in [0, 1].
struct BetaDensity {
  double alpha = 1.0;
  double beta = 5.0;
};

// rate * exp(-rate d) truncated to [0, 1] and renormalized.
struct ExponentialDensity {
  double rate = 10.0;
};

using DensitySpec = std::variant<BetaDensity, ExponentialDensity>;

inline void validate(const DensitySpec& spec) {
  if (const auto* b = std::get_if<BetaDensity>(&spec))
    detail::require(b->alpha > 0.0 && b->beta > 0.0, "density: beta parameters must be positive");
  else
    detail::require(std::get<ExponentialDensity>(spec).rate > 0.0, "density: rate must be positive");
}

/// log p_D(d); -infinity where the density vanishes.
inline double log_density(const DensitySpec& spec, double d) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  if (!(d >= 0.0 && d <= 1.0)) return neg_inf;
  if (const auto* b = std::get_if<BetaDensity>(&spec)) {
    const double log_norm = std::lgamma(b->alpha + b->beta) - std::lgamma(b->alpha) - std::lgamma(b->beta);
    double out = log_norm;
    if (b->alpha != 1.0) {
      if (d == 0.0) return b->alpha > 1.0 ? neg_inf : std::numeric_limits<double>::infinity();
      out += (b->alpha - 1.0) * std::log(d);
    }
    if (b->beta != 1.0) {
      if (d == 1.0) return b->beta > 1.0 ? neg_inf : std::numeric_limits<double>::infinity();
      out += (b->beta - 1.0) * std::log1p(-d);
    }
    return out;
  }
  const double rate = std::get<ExponentialDensity>(spec).rate;
  return std::log(rate) - rate * d - std::log(-std::expm1(-rate));
}

/// d/dd log p_D(d).
inline double dlog_density(const DensitySpec& spec, double d) {
  if (const auto* b = std::get_if<BetaDensity>(&spec)) {
    double out = 0.0;
    if (b->alpha != 1.0) out += (b->alpha - 1.0) / d;
    if (b->beta != 1.0) out -= (b->beta - 1.0) / (1.0 - d);
    return out;
  }
  return -std::get<ExponentialDensity>(spec).rate;
}

} // namespace ksamp
