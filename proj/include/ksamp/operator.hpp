#pragma once

#include <optional>
#include <string>

#include "ksamp/dictionary.hpp"
#include "ksamp/linalg.hpp"

namespace ksamp {

/// A square transfer-operator matrix with its observable dictionary and
/// sampling interval.
struct TransferOperator {
  Mat k;
  std::optional<ObservableDictionary> dict;
  double dt = 1.0;

  TransferOperator() = default;
  TransferOperator(Mat k_, std::optional<ObservableDictionary> dict_, double dt_)
      : k(std::move(k_)), dict(std::move(dict_)), dt(dt_) {
    require_square(k, "TransferOperator");
    require_finite(k, "TransferOperator");
    detail::require(dt > 0.0, "TransferOperator: dt must be positive");
    if (dict)
      detail::require(static_cast<Eigen::Index>(dict->size()) == k.rows(),
                      "TransferOperator: dictionary size does not match operator dimension");
  }

  Eigen::Index dim() const { return k.rows(); }
};

/// Ridge-regularized DMD: K = (Y X^T)(X X^T + eps I)^{-1}.
/// eps = 0 is accepted when X X^T is itself well conditioned.
inline TransferOperator dmd_estimate(const Mat& x, const Mat& y, double eps,
                                     std::optional<ObservableDictionary> dict = std::nullopt,
                                     double dt = 1.0) {
  detail::require(x.rows() == y.rows() && x.cols() == y.cols(),
                  "dmd_estimate: snapshot matrices must have identical shape");
  detail::require(x.cols() >= 1 && x.rows() >= 1, "dmd_estimate: need at least one snapshot");
  detail::require(eps >= 0.0 && std::isfinite(eps), "dmd_estimate: eps must be >= 0");
  require_finite(x, "dmd_estimate");
  require_finite(y, "dmd_estimate");
  Mat gram = x * x.transpose();
  gram.diagonal().array() += eps;
  // (X X^T + eps I) K^T = X Y^T
  const Mat kt = detail::spd_solve(gram, x * y.transpose(), "dmd_estimate");
  return TransferOperator(kt.transpose(), std::move(dict), dt);
}

} // namespace ksamp
