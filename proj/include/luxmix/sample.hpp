#pragma once

#include <optional>
#include <string>

#include "luxmix/spectrum.hpp"

namespace luxmix {

enum class Domain { phantom, pbh, human, synthetic };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

// Tissue optics driving the attenuation model. mu_a follows a power law
// anchored at 405 nm, mu_s' one anchored at 635 nm.
struct OpticsConfig {
  double mu_a_405 = 18.0;             // cm^-1
  double mu_s_635 = 8.7;              // cm^-1
  double absorption_exponent = 1.0;   // p in (405/lambda)^p
  double scattering_exponent = 1.2;   // b in (lambda/635)^(-b)
  double path_cm = 0.05;              // d, emission path
  double excitation_path_cm = 0.02;   // d_exc at 405 nm
};

// Paired fluorescence/reflectance measurement with an optional concentration
// label (ug/ml for phantoms, pmol/mg for homogenates; never converted).
struct LabeledSample {
  std::string id;
  Spectrum fluo;
  Spectrum ref;
  std::optional<double> c_ppix;
  Domain domain = Domain::synthetic;
  std::optional<OpticsConfig> optics;
  bool saturated = false;

  void validate() const;
};

}  // namespace luxmix
