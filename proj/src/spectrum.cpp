#include "luxmix/spectrum.hpp"

#include <cmath>

#include "luxmix/errors.hpp"

namespace luxmix {

std::string to_string(SpectrumRole role) {
  switch (role) {
    case SpectrumRole::fluorescence: return "fluorescence";
    case SpectrumRole::reflectance: return "reflectance";
    case SpectrumRole::dark: return "dark";
    case SpectrumRole::endmember: return "endmember";
    case SpectrumRole::corrected: return "corrected";
  }
  return "?";
}

Spectrum::Spectrum(GridPtr g, Eigen::VectorXd v, SpectrumRole r)
    : grid(std::move(g)), values(std::move(v)), role(r) {
  if (!grid) throw DimensionError("spectrum requires a grid");
  if (values.size() != grid->size())
    throw DimensionError("spectrum length does not match its grid");
  if (!values.allFinite()) throw RangeError("spectrum values must be finite");
}

Spectrum resample(const Spectrum& spectrum, const GridPtr& target) {
  if (!target) throw DimensionError("resample: null target grid");
  const WavelengthGrid& src = *spectrum.grid;
  const WavelengthGrid& dst = *target;
  if (dst.front() < src.front() || dst.back() > src.back())
    throw RangeError("resample: target wavelength outside source span");

  Eigen::VectorXd out(dst.size());
  int lo = 0;  // src[lo] <= lambda <= src[lo+1], advances monotonically
  for (int i = 0; i < dst.size(); ++i) {
    const double lambda = dst[i];
    while (lo + 2 < src.size() && src[lo + 1] < lambda) ++lo;
    const double x0 = src[lo];
    if (lambda == x0 || src.size() == 1) {
      out[i] = spectrum.values[lo];
      continue;
    }
    const double x1 = src[lo + 1];
    if (lambda == x1) {
      out[i] = spectrum.values[lo + 1];
    } else {
      const double t = (lambda - x0) / (x1 - x0);
      out[i] = (1.0 - t) * spectrum.values[lo] + t * spectrum.values[lo + 1];
    }
  }
  return {target, std::move(out), spectrum.role};
}

}  // namespace luxmix
