#pragma once

#include <string>

#include <Eigen/Core>

#include "luxmix/wavelength_grid.hpp"

namespace luxmix {

enum class SpectrumRole { fluorescence, reflectance, dark, endmember, corrected };

std::string to_string(SpectrumRole role);

// Intensity per wavelength (arbitrary units) on a shared grid.
struct Spectrum {
  GridPtr grid;
  Eigen::VectorXd values;
  SpectrumRole role = SpectrumRole::fluorescence;

  Spectrum() = default;
  Spectrum(GridPtr g, Eigen::VectorXd v, SpectrumRole r);

  int size() const { return static_cast<int>(values.size()); }
};

// Linear interpolation of `spectrum` at each target wavelength. The source
// grid must span the target grid; no extrapolation.
Spectrum resample(const Spectrum& spectrum, const GridPtr& target);

}  // namespace luxmix
