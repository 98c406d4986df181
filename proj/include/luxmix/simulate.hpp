#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "luxmix/endmember_library.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/sample.hpp"

namespace luxmix {

using LibraryPtr = std::shared_ptr<const EndmemberLibrary>;

// K=5 parametric library: PpIX634, PpIX620, lipofuscin, NADH, flavins.
// Grid must cover 450..747 nm.
EndmemberLibrary default_library(const GridPtr& grid);
LibraryPtr default_library_ptr(const GridPtr& grid);

constexpr int kPpix634 = 0;
constexpr int kPpix620 = 1;

struct NoiseConfig {
  double read_sigma = 2e-4;  // AU
  double shot_coeff = 4e-3;  // scales sqrt(signal)
};

struct SaturationConfig {
  double probability = 0.25;
  double cap = 0.15;  // AU, hard clip applied to the reflectance
};

struct SimConfig {
  LibraryPtr library;
  std::vector<double> concentration_levels;
  std::vector<OpticsConfig> optics_presets;
  int samples_per_cell = 120;
  NoiseConfig noise;
  double g_min = 0.5;
  double g_max = 2.0;
  SaturationConfig saturation;
  double optics_jitter = 0.10;     // +-10% on mu_a_405 and mu_s_635
  double exponent_jitter = 0.50;    // wider relative spread of the power-law
                                   // exponents: spectral shape varies in ways
                                   // a two-band scale cannot absorb
  std::uint64_t seed = 42;
  Domain domain = Domain::phantom;

  void validate() const;
};

// Paper phantom recipe: 5 concentration levels x 3 absorption x 3 scattering
// presets.
SimConfig default_phantom_config(const GridPtr& grid, std::uint64_t seed);

// Beer-Lambert products with power-law mu_a(lambda), mu_s'(lambda):
//   fluo(l) = g * exp(-mu_a(405) d_exc) * exp(-(mu_a(l)+mu_s'(l)) d) * true(l)
//   ref(l)  = g * exp(-(mu_a(l)+mu_s'(l)) d)          (flat unit illuminant)
std::pair<Spectrum, Spectrum> apply_attenuation(const Spectrum& true_spectrum,
                                                const OpticsConfig& optics, double g);

struct SimDataset {
  std::vector<LabeledSample> samples;
  Eigen::MatrixXd true_abundances;  // n x K, the z_true underlying each sample
  std::vector<double> g_values;
};

// One cell per (concentration level, optics preset); samples_per_cell samples
// each. Per-sample randomness is seeded by (seed, preset, sample index) so the
// same draws recur across concentration levels; this keeps the 634 nm response
// strictly monotone in concentration before noise, and lets cells generate
// independently in any order.
SimDataset simulate_dataset(const SimConfig& cfg);

// Random nonnegative mixtures of the library columns, z ~ U[0,1]^K, plus
// optional additive Gaussian noise.
std::vector<Spectrum> augment_linear(const EndmemberLibrary& lib, int n, std::uint64_t seed,
                                     double noise_sigma = 0.0);

// Same stream as augment_linear but keeps the abundances (stage-1 training
// wants both).
struct AugmentedSet {
  std::vector<Spectrum> spectra;
  Eigen::MatrixXd abundances;  // n x K
};
AugmentedSet augment_linear_labeled(const EndmemberLibrary& lib, int n, std::uint64_t seed,
                                    double noise_sigma = 0.0);

}  // namespace luxmix
