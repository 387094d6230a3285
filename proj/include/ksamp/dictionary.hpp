#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <utility>
#include <vector>

#include "ksamp/error.hpp"
#include "ksamp/linalg.hpp"

namespace ksamp {

using State = std::array<double, 2>;

/// Monomial observables x^i y^j over a planar state.
struct ObservableDictionary {
  std::vector<std::pair<int, int>> exponents;
  std::array<std::size_t, 2> linear_indices{0, 1}; // positions of x and y
  int max_total_degree = 1;

  std::size_t size() const { return exponents.size(); }

  Vec operator()(const State& s) const {
    Vec out(static_cast<Eigen::Index>(exponents.size()));
    for (std::size_t k = 0; k < exponents.size(); ++k) {
      const auto [i, j] = exponents[k];
      out(static_cast<Eigen::Index>(k)) = ipow(s[0], i) * ipow(s[1], j);
    }
    return out;
  }

  State project(const Vec& z) const {
    return {z(static_cast<Eigen::Index>(linear_indices[0])),
            z(static_cast<Eigen::Index>(linear_indices[1]))};
  }

  friend bool operator==(const ObservableDictionary& a, const ObservableDictionary& b) {
    return a.exponents == b.exponents;
  }

private:
  static double ipow(double x, int n) {
    double r = 1.0;
    for (int k = 0; k < n; ++k) r *= x;
    return r;
  }
};

/// Builds a dictionary from explicit exponents, locating the linear monomials.
inline ObservableDictionary make_dictionary(std::vector<std::pair<int, int>> exponents) {
  ObservableDictionary dict;
  std::set<std::pair<int, int>> seen;
  bool has_x = false, has_y = false;
  int max_deg = 0;
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    const auto [i, j] = exponents[k];
    detail::require(i >= 0 && j >= 0, "dictionary: exponents must be nonnegative");
    detail::require(seen.insert(exponents[k]).second, "dictionary: duplicate exponent");
    max_deg = std::max(max_deg, i + j);
    if (i == 1 && j == 0) { dict.linear_indices[0] = k; has_x = true; }
    if (i == 0 && j == 1) { dict.linear_indices[1] = k; has_y = true; }
  }
  detail::require(has_x && has_y, "dictionary: the monomials x and y must be present");
  dict.exponents = std::move(exponents);
  dict.max_total_degree = max_deg;
  return dict;
}

/// The constant plus all monomials of total degree 1..max_total_degree,
/// ordered by degree and then by descending power of x.
inline ObservableDictionary poly_dictionary(int max_total_degree) {
  detail::require(max_total_degree >= 1, "poly_dictionary: degree must be >= 1");
  std::vector<std::pair<int, int>> exps{{0, 0}};
  for (int deg = 1; deg <= max_total_degree; ++deg)
    for (int i = deg; i >= 0; --i) exps.emplace_back(i, deg - i);
  return make_dictionary(std::move(exps));
}

/// Just {x, y}: the state itself, used for linear systems.
inline ObservableDictionary linear_dictionary() { return make_dictionary({{1, 0}, {0, 1}}); }

} // namespace ksamp
