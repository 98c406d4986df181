#pragma once

#include <Eigen/Core>

#include "luxmix/abundance.hpp"
#include "luxmix/endmember_library.hpp"
#include "luxmix/errors.hpp"
#include "luxmix/spectrum.hpp"

namespace luxmix {

// B * z as a corrected-role spectrum (the linear mixing model).
Spectrum mix(const EndmemberLibrary& lib, const AbundanceVector& z);

// Mean of squared element differences.
template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("mse: length mismatch");
  if (a.size() == 0) throw DimensionError("mse: empty input");
  return (a.derived().array() - b.derived().array()).square().mean();
}

inline double mse(const Spectrum& a, const Spectrum& b) { return mse(a.values, b.values); }

// Pearson correlation, two-pass definitional form. Zero variance in either
// input raises DegenerateError instead of returning NaN.
template <typename A, typename B>
double pearson_r(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (x.size() != y.size()) throw DimensionError("pearson_r: length mismatch");
  const Eigen::Index n = x.size();
  if (n < 2) throw DimensionError("pearson_r: need at least 2 points");
  const double mx = x.derived().template cast<double>().mean();
  const double my = y.derived().template cast<double>().mean();
  const auto dx = (x.derived().array() - mx).eval();
  const auto dy = (y.derived().array() - my).eval();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0)
    throw DegenerateError("pearson_r: zero variance input");
  double r = (dx * dy).sum() / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace luxmix
