#include "luxmix/wavelength_grid.hpp"

#include <cmath>

#include "luxmix/errors.hpp"

namespace luxmix {

WavelengthGrid::WavelengthGrid(std::vector<double> wavelengths_nm)
    : wavelengths_entries_(std::move(wavelengths_nm)) {
  if (wavelengths_entries_.empty()) throw RangeError("wavelength grid is empty");
  double prev = 0.0;
  for (double w : wavelengths_entries_) {
    if (!std::isfinite(w) || w <= 0.0)
      throw RangeError("wavelength grid values must be finite and > 0");
    if (w <= prev) throw RangeError("wavelength grid must be strictly increasing");
    prev = w;
  }
}

std::shared_ptr<const WavelengthGrid> WavelengthGrid::default_grid() {
  std::vector<double> w(100);
  for (int i = 0; i < 100; ++i) w[i] = 450.0 + 3.0 * i;
  return std::make_shared<const WavelengthGrid>(std::move(w));
}

int WavelengthGrid::nearest_index(double lambda_nm) const {
  int best = 0;
  double best_d = std::abs(wavelengths_entries_[0] - lambda_nm);
  for (int i = 1; i < size(); ++i) {
    double d = std::abs(wavelengths_entries_[i] - lambda_nm);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace luxmix
