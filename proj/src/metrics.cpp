#include "luxmix/metrics.hpp"

namespace luxmix {

Spectrum mix(const EndmemberLibrary& lib, const AbundanceVector& z) {
  if (z.size() != lib.K()) throw DimensionError("mix: abundance length does not match K");
  Eigen::VectorXd y = lib.B() * z.z;
  return {lib.grid(), std::move(y), SpectrumRole::corrected};
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("pearson_r: length mismatch");
  Eigen::Map<const Eigen::VectorXd> mx(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::Map<const Eigen::VectorXd> my(y.data(), static_cast<Eigen::Index>(y.size()));
  return pearson_r(mx, my);
}

AbundanceVector normalize_l2(const AbundanceVector& a) {
  AbundanceVector out = a;
  const double n = a.z.norm();
  if (n > 0.0) {
    out.z /= n;
  } else {
    out.degenerate = true;
  }
  return out;
}

}  // namespace luxmix
