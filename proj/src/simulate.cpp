#include "luxmix/simulate.hpp"

#include <cmath>

#include "luxmix/errors.hpp"
#include "luxmix/rng.hpp"

namespace luxmix {

std::string to_string(Domain d) {
  switch (d) {
    case Domain::phantom: return "phantom";
    case Domain::pbh: return "pbh";
    case Domain::human: return "human";
    case Domain::synthetic: return "synthetic";
  }
  return "?";
}

Domain domain_from_string(const std::string& s) {
  if (s == "phantom") return Domain::phantom;
  if (s == "pbh") return Domain::pbh;
  if (s == "human") return Domain::human;
  if (s == "synthetic") return Domain::synthetic;
  throw FormatError("unknown domain tag '" + s + "'");
}

void LabeledSample::validate() const {
  if (!same_grid(fluo.grid, ref.grid))
    throw DimensionError("sample " + id + ": fluo and ref grids differ");
  if (c_ppix && *c_ppix < 0.0)
    throw RangeError("sample " + id + ": negative c_ppix label");
}

namespace {

double gaussian(double lambda, double peak, double sigma) {
  const double d = (lambda - peak) / sigma;
  return std::exp(-0.5 * d * d);
}

}  // namespace

EndmemberLibrary default_library(const GridPtr& grid) {
  if (!grid->covers(450.0, 747.0))
    throw RangeError("default_library: grid must cover 450..747 nm");
  const int m = grid->size();
  Eigen::MatrixXd B(m, 5);
  for (int i = 0; i < m; ++i) {
    const double l = (*grid)[i];
    B(i, 0) = gaussian(l, 634.0, 12.0) + 0.25 * gaussian(l, 704.0, 12.0);
    B(i, 1) = gaussian(l, 620.0, 12.0);
    B(i, 2) = gaussian(l, 570.0, 60.0);
    B(i, 3) = gaussian(l, 460.0, 45.0);
    B(i, 4) = gaussian(l, 525.0, 40.0);
  }
  for (int k = 0; k < 5; ++k) B.col(k) /= B.col(k).maxCoeff();
  return {grid, {"PpIX634", "PpIX620", "lipofuscin", "NADH", "flavins"}, std::move(B)};
}

LibraryPtr default_library_ptr(const GridPtr& grid) {
  return std::make_shared<const EndmemberLibrary>(default_library(grid));
}

void SimConfig::validate() const {
  if (!library) throw ConfigError("SimConfig: missing endmember library");
  if (concentration_levels.empty()) throw ConfigError("SimConfig: no concentration levels");
  for (double c : concentration_levels)
    if (!(c >= 0.0)) throw ConfigError("SimConfig: negative concentration level");
  if (optics_presets.empty()) throw ConfigError("SimConfig: no optics presets");
  if (samples_per_cell < 1) throw ConfigError("SimConfig: samples_per_cell must be >= 1");
  if (!(g_min > 0.0) || !(g_min <= g_max))
    throw ConfigError("SimConfig: need 0 < g_min <= g_max");
  if (saturation.probability < 0.0 || saturation.probability > 1.0)
    throw ConfigError("SimConfig: saturation probability outside [0,1]");
  if (optics_jitter < 0.0 || optics_jitter >= 1.0)
    throw ConfigError("SimConfig: optics_jitter outside [0,1)");
  if (exponent_jitter < 0.0 || exponent_jitter >= 1.0)
    throw ConfigError("SimConfig: exponent_jitter outside [0,1)");
}

SimConfig default_phantom_config(const GridPtr& grid, std::uint64_t seed) {
  SimConfig cfg;
  cfg.library = default_library_ptr(grid);
  cfg.concentration_levels = {0.0, 0.2, 0.6, 1.25, 2.5};
  for (double mu_a : {18.0, 42.0, 60.0})
    for (double mu_s : {8.7, 11.6, 14.5}) {
      OpticsConfig o;
      o.mu_a_405 = mu_a;
      o.mu_s_635 = mu_s;
      cfg.optics_presets.push_back(o);
    }
  cfg.seed = seed;
  cfg.domain = Domain::phantom;
  return cfg;
}

std::pair<Spectrum, Spectrum> apply_attenuation(const Spectrum& true_spectrum,
                                                const OpticsConfig& optics, double g) {
  if (!(g > 0.0)) throw RangeError("apply_attenuation: g must be > 0");
  const WavelengthGrid& grid = *true_spectrum.grid;
  const int m = grid.size();
  const double excitation = std::exp(-optics.mu_a_405 * optics.excitation_path_cm);
  Eigen::VectorXd fluo(m), ref(m);
  for (int i = 0; i < m; ++i) {
    const double l = grid[i];
    const double mu_a = optics.mu_a_405 * std::pow(405.0 / l, optics.absorption_exponent);
    const double mu_s = optics.mu_s_635 * std::pow(l / 635.0, -optics.scattering_exponent);
    const double path = std::exp(-(mu_a + mu_s) * optics.path_cm);
    ref[i] = g * path;
    fluo[i] = g * excitation * path * true_spectrum.values[i];
  }
  return {Spectrum{true_spectrum.grid, std::move(fluo), SpectrumRole::fluorescence},
          Spectrum{true_spectrum.grid, std::move(ref), SpectrumRole::reflectance}};
}

namespace {

void add_noise(Eigen::VectorXd& v, const NoiseConfig& noise, Rng& rng) {
  if (noise.read_sigma <= 0.0 && noise.shot_coeff <= 0.0) return;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double sigma = noise.read_sigma + noise.shot_coeff * std::sqrt(std::max(v[i], 0.0));
    v[i] += sigma * rng.normal();
  }
}

}  // namespace

SimDataset simulate_dataset(const SimConfig& cfg) {
  cfg.validate();
  const EndmemberLibrary& lib = *cfg.library;
  const int K = lib.K();
  const int n_levels = static_cast<int>(cfg.concentration_levels.size());
  const int n_presets = static_cast<int>(cfg.optics_presets.size());
  const int n = n_levels * n_presets * cfg.samples_per_cell;

  SimDataset out;
  out.samples.reserve(n);
  out.true_abundances.resize(n, K);
  out.g_values.resize(n);

  int idx = 0;
  for (int li = 0; li < n_levels; ++li) {
    const double c = cfg.concentration_levels[li];
    for (int pi = 0; pi < n_presets; ++pi) {
      for (int k = 0; k < cfg.samples_per_cell; ++k) {
        // Stream keyed by (preset, sample) only: levels reuse the same draws.
        Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(pi),
                         static_cast<std::uint64_t>(k)));

        Eigen::VectorXd z = Eigen::VectorXd::Zero(K);
        const double rho = rng.uniform(0.0, 0.3);
        z[kPpix634] = c;
        z[kPpix620] = rho * c;
        for (int a = 2; a < K; ++a) z[a] = rng.uniform(0.05, 0.4);

        OpticsConfig o = cfg.optics_presets[pi];
        const double j = cfg.optics_jitter;
        const double je = cfg.exponent_jitter;
        o.mu_a_405 *= rng.uniform(1.0 - j, 1.0 + j);
        o.mu_s_635 *= rng.uniform(1.0 - j, 1.0 + j);
        o.absorption_exponent *= rng.uniform(1.0 - je, 1.0 + je);
        o.scattering_exponent *= rng.uniform(1.0 - je, 1.0 + je);

        const double g = rng.log_uniform(cfg.g_min, cfg.g_max);
        const bool saturate_event = rng.uniform() < cfg.saturation.probability;

        Spectrum truth = mix(lib, AbundanceVector{z});
        auto [fluo, ref] = apply_attenuation(truth, o, g);
        add_noise(fluo.values, cfg.noise, rng);
        add_noise(ref.values, cfg.noise, rng);

        bool clipped = false;
        if (saturate_event) {
          for (Eigen::Index i = 0; i < ref.values.size(); ++i)
            if (ref.values[i] > cfg.saturation.cap) {
              ref.values[i] = cfg.saturation.cap;
              clipped = true;
            }
        }
        fluo.values = fluo.values.cwiseMax(0.0);
        ref.values = ref.values.cwiseMax(0.0);

        LabeledSample s;
        s.id = "L" + std::to_string(li) + "P" + std::to_string(pi) + "S" + std::to_string(k);
        s.fluo = std::move(fluo);
        s.ref = std::move(ref);
        s.c_ppix = c;
        s.domain = cfg.domain;
        s.optics = o;
        s.saturated = clipped;

        out.true_abundances.row(idx) = z.transpose();
        out.g_values[idx] = g;
        out.samples.push_back(std::move(s));
        ++idx;
      }
    }
  }
  return out;
}

AugmentedSet augment_linear_labeled(const EndmemberLibrary& lib, int n, std::uint64_t seed,
                                    double noise_sigma) {
  if (n < 1) throw ConfigError("augment_linear: n must be >= 1");
  const int K = lib.K();
  Rng rng(seed);
  AugmentedSet out;
  out.spectra.reserve(n);
  out.abundances.resize(n, K);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(K);
    for (int k = 0; k < K; ++k) z[k] = rng.uniform();
    Spectrum s = mix(lib, AbundanceVector{z});
    if (noise_sigma > 0.0)
      for (Eigen::Index q = 0; q < s.values.size(); ++q)
        s.values[q] += noise_sigma * rng.normal();
    out.abundances.row(i) = z.transpose();
    out.spectra.push_back(std::move(s));
  }
  return out;
}

std::vector<Spectrum> augment_linear(const EndmemberLibrary& lib, int n, std::uint64_t seed,
                                     double noise_sigma) {
  return augment_linear_labeled(lib, n, seed, noise_sigma).spectra;
}

}  // namespace luxmix
