#pragma once

// Dense small-matrix helpers shared by the estimation, kernel and sampling
// code. Matrices are Eigen::MatrixXd; serialization flattens them row-major.

#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ksamp/error.hpp"

namespace ksamp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Complex = std::complex<double>;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite())
    throw InvalidArgument(std::string(what) + ": matrix has non-finite entries");
}

inline void require_square(const Mat& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw InvalidArgument(std::string(what) + ": expected a non-empty square matrix, got " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

// Builds a matrix from nested row lists, e.g. make_mat({{0, -1}, {1, 0}}).
inline Mat make_mat(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = n_rows ? static_cast<Eigen::Index>(rows.begin()->size()) : 0;
  Mat out(n_rows, n_cols);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    detail::require(static_cast<Eigen::Index>(row.size()) == n_cols, "make_mat: ragged rows");
    Eigen::Index j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  require_finite(out, "make_mat");
  return out;
}

// Frobenius inner product trace(a^T b).
inline double frob_inner(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

inline Mat mat_mul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw InvalidArgument("mat_mul: dimension mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  return a * b;
}

namespace detail {

// Cholesky solve of a symmetrized SPD system. Fails when a pivot is
// non-positive or the factor is numerically singular.
inline Mat spd_solve(const Mat& m, const Mat& rhs, const char* what) {
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Mat> llt(sym);
  const double tiny = static_cast<double>(sym.rows()) * std::numeric_limits<double>::epsilon();
  if (llt.info() != Eigen::Success || !(llt.rcond() > tiny))
    throw NumericalError(std::string(what) +
                         ": matrix is not numerically positive definite; increase the ridge eps");
  Mat out = llt.solve(rhs);
  if (!out.allFinite()) throw NumericalError(std::string(what) + ": non-finite solution");
  return out;
}

} // namespace detail

/// Returns (m + eps*I)^{-1} rhs for symmetric positive semidefinite m.
/// The input is symmetrized first; eps must be strictly positive.
inline Mat ridge_inverse_apply(const Mat& m, const Mat& rhs, double eps) {
  require_square(m, "ridge_inverse_apply");
  detail::require(rhs.rows() == m.rows(), "ridge_inverse_apply: rhs row count mismatch");
  detail::require(eps > 0.0 && std::isfinite(eps), "ridge_inverse_apply: eps must be > 0");
  Mat shifted = m;
  shifted.diagonal().array() += eps;
  return detail::spd_solve(shifted, rhs, "ridge_inverse_apply");
}

struct Spectrum {
  std::vector<Complex> eigenvalues; // sorted by descending modulus
  double spectral_radius = 0.0;
};

/// All eigenvalues of a real square matrix (Hessenberg reduction followed by
/// shifted QR, budget 100*d iterations).
inline Spectrum eigenvalues(const Mat& m) {
  require_square(m, "eigenvalues");
  detail::require(m.rows() <= 64, "eigenvalues: dimension above 64 is not supported");
  require_finite(m, "eigenvalues");
  Spectrum out;
  const auto d = m.rows();
  if (d == 1) {
    out.eigenvalues = {Complex(m(0, 0), 0.0)};
  } else {
    Eigen::EigenSolver<Mat> solver;
    solver.setMaxIterations(100 * d);
    solver.compute(m, false);
    if (solver.info() != Eigen::Success)
      throw NumericalError("eigenvalues: QR iteration did not converge within " +
                           std::to_string(100 * d) + " iterations");
    const auto& ev = solver.eigenvalues();
    out.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  }
  std::stable_sort(out.eigenvalues.begin(), out.eigenvalues.end(),
                   [](const Complex& a, const Complex& b) {
                     const double ma = std::abs(a), mb = std::abs(b);
                     if (ma != mb) return ma > mb;
                     return a.imag() > b.imag();
                   });
  out.spectral_radius = std::abs(out.eigenvalues.front());
  return out;
}

inline double spectral_radius(const Mat& m) { return eigenvalues(m).spectral_radius; }

/// Matrix exponential of m*t by scaling and squaring with a truncated Taylor
/// series.
inline Mat expm(const Mat& m, double t) {
  require_square(m, "expm");
  const Mat a = m * t;
  require_finite(a, "expm");
  const auto d = a.rows();
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  const Mat b = a / std::ldexp(1.0, squarings);

  Mat sum = Mat::Identity(d, d);
  Mat term = Mat::Identity(d, d);
  for (int k = 1; k <= 40; ++k) {
    term = (term * b) / static_cast<double>(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() <= 1e-18 * sum.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Principal logarithm of a real 2x2 matrix with no eigenvalue on the closed
/// negative real axis.
inline Mat logm_2x2(const Mat& m) {
  detail::require(m.rows() == 2 && m.cols() == 2, "logm_2x2: expected a 2x2 matrix");
  require_finite(m, "logm_2x2");
  const double tr = m.trace();
  const double det = m.determinant();
  const Complex disc = std::sqrt(Complex(tr * tr / 4.0 - det, 0.0));
  const Complex mu1 = tr / 2.0 + disc;
  const Complex mu2 = tr / 2.0 - disc;
  for (const Complex& mu : {mu1, mu2}) {
    if (std::abs(mu) == 0.0 || (mu.imag() == 0.0 && mu.real() <= 0.0))
      throw NumericalError("logm_2x2: eigenvalue on the closed negative real axis, no principal logarithm");
  }
  // log(M) = log(mu1) I + f[mu1, mu2] (M - mu1 I), f[.,.] the divided difference.
  const Complex log1 = std::log(mu1);
  Complex divided;
  if (std::abs(mu1 - mu2) > 1e-6 * std::abs(mu1)) {
    divided = (log1 - std::log(mu2)) / (mu1 - mu2);
  } else {
    // Series of log about the midpoint for nearly repeated eigenvalues.
    const Complex mid = 0.5 * (mu1 + mu2);
    const Complex h = 0.5 * (mu1 - mu2) / mid;
    divided = (1.0 + h * h / 3.0 + h * h * h * h / 5.0) / mid;
  }
  Eigen::Matrix2cd mc = m.cast<Complex>();
  Eigen::Matrix2cd out = log1 * Eigen::Matrix2cd::Identity() +
                         divided * (mc - mu1 * Eigen::Matrix2cd::Identity());
  return out.real();
}

} // namespace ksamp
