#include <doctest.h>

#include <cmath>

#include <Eigen/QR>

#include "luxmix/classical.hpp"
#include "luxmix/errors.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/rng.hpp"
#include "luxmix/simulate.hpp"

using namespace luxmix;

namespace {

// local grid-coordinate-descent oracle: clamp/round the unconstrained LS
// solution to the 0.02 grid on [0,2]^K, then take the best of the 3^K
// neighborhood until no move improves
double grid_search_residual(const Eigen::MatrixXd& B, const Eigen::VectorXd& y) {
  const int K = static_cast<int>(B.cols());
  const double step = 0.02;
  Eigen::VectorXd start = B.colPivHouseholderQr().solve(y);
  Eigen::VectorXi cell(K);
  for (int k = 0; k < K; ++k) {
    double v = std::clamp(start[k], 0.0, 2.0);
    cell[k] = static_cast<int>(std::lround(v / step));
  }
  auto residual = [&](const Eigen::VectorXi& c) {
    Eigen::VectorXd z(K);
    for (int k = 0; k < K; ++k) z[k] = c[k] * step;
    return (B * z - y).squaredNorm();
  };
  double best = residual(cell);
  while (true) {
    Eigen::VectorXi best_cell = cell;
    double best_here = best;
    Eigen::VectorXi probe = cell;
    const int moves = static_cast<int>(std::pow(3, K));
    for (int code = 0; code < moves; ++code) {
      int c = code;
      bool valid = true;
      for (int k = 0; k < K; ++k) {
        const int delta = c % 3 - 1;
        c /= 3;
        probe[k] = cell[k] + delta;
        if (probe[k] < 0 || probe[k] > 100) valid = false;
      }
      if (!valid) continue;
      const double r = residual(probe);
      if (r < best_here) {
        best_here = r;
        best_cell = probe;
      }
    }
    if (best_here >= best) break;
    best = best_here;
    cell = best_cell;
  }
  return std::sqrt(best);
}

void check_kkt(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  const double scale = (B.transpose() * y).lpNorm<Eigen::Infinity>() + 1.0;
  const Eigen::VectorXd grad = B.transpose() * (B * z - y);
  for (int k = 0; k < z.size(); ++k) {
    CHECK(z[k] >= 0.0);
    if (z[k] > 0.0)
      CHECK(std::abs(grad[k]) <= 1e-8 * scale);
    else
      CHECK(grad[k] >= -1e-8 * scale);
  }
}

GridPtr grid_for(double lo, double hi, double step) {
  std::vector<double> w;
  for (double l = lo; l <= hi + 1e-9; l += step) w.push_back(l);
  return std::make_shared<const WavelengthGrid>(std::move(w));
}

}  // namespace

TEST_CASE("dual_band_scale: unit reflectance, constant reflectance, oracle") {
  GridPtr g = WavelengthGrid::default_grid();
  DualBandParams p;

  Spectrum ones{g, Eigen::VectorXd::Ones(g->size()), SpectrumRole::reflectance};
  p.alpha = 0.33;
  p.beta = -1.4;
  CHECK(dual_band_scale(ones, p) == doctest::Approx(1.0).epsilon(1e-15));

  Spectrum constant{g, Eigen::VectorXd::Constant(g->size(), 3.5), SpectrumRole::reflectance};
  p.alpha = 1.0;
  p.beta = 0.0;
  CHECK(dual_band_scale(constant, p) == doctest::Approx(3.5).epsilon(1e-14));

  Rng rng(8);
  Eigen::VectorXd v(g->size());
  for (int i = 0; i < g->size(); ++i) v[i] = 0.5 + rng.uniform();
  Spectrum ref{g, v, SpectrumRole::reflectance};
  p.alpha = 0.7;
  p.beta = 0.3;
  double m1 = 0.0, m2 = 0.0;
  int n1 = 0, n2 = 0;
  for (int i = 0; i < g->size(); ++i) {
    const double l = (*g)[i];
    if (l >= p.band1_lo && l <= p.band1_hi) {
      m1 += v[i];
      ++n1;
    }
    if (l >= p.band2_lo && l <= p.band2_hi) {
      m2 += v[i];
      ++n2;
    }
  }
  const double expect = std::pow(m1 / n1, 0.7) * std::pow(m2 / n2, 0.3);
  CHECK(dual_band_scale(ref, p) == doctest::Approx(expect).epsilon(1e-12));

  Spectrum dark{g, Eigen::VectorXd::Zero(g->size()), SpectrumRole::reflectance};
  CHECK_THROWS_AS(dual_band_scale(dark, p), DegenerateError);
}

TEST_CASE("dual_band_correct: identity scale and scalar attenuation") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  Eigen::VectorXd z(5);
  z << 1.2, 0.1, 0.2, 0.3, 0.1;
  Spectrum fluo = mix(lib, AbundanceVector{z});
  fluo.role = SpectrumRole::fluorescence;

  DualBandParams p;
  Spectrum ones{g, Eigen::VectorXd::Ones(g->size()), SpectrumRole::reflectance};
  Spectrum c = dual_band_correct(fluo, ones, p);
  CHECK((c.values - fluo.values).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(c.role == SpectrumRole::corrected);

  // pure scalar attenuation with alpha + beta = 1 cancels exactly
  p.alpha = 0.6;
  p.beta = 0.4;
  const double a = 0.37;
  Spectrum fluo_att{g, a * fluo.values, SpectrumRole::fluorescence};
  Spectrum ref_att{g, Eigen::VectorXd::Constant(g->size(), a), SpectrumRole::reflectance};
  Spectrum corrected = dual_band_correct(fluo_att, ref_att, p);
  CHECK((corrected.values - fluo.values).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("dual_band_correct: shrinks corrected variance on a constant-c set") {
  GridPtr g = WavelengthGrid::default_grid();
  SimConfig cfg = default_phantom_config(g, 6);
  cfg.concentration_levels = {2.5};
  cfg.samples_per_cell = 30;
  cfg.saturation.probability = 0.0;
  SimDataset ds = simulate_dataset(cfg);
  const int peak = g->nearest_index(634.0);

  DualBandParams p;  // alpha 1, beta 0: plain band normalization
  std::vector<double> raw, corrected;
  for (const auto& s : ds.samples) {
    raw.push_back(s.fluo.values[peak]);
    corrected.push_back(dual_band_correct(s.fluo, s.ref, p).values[peak]);
  }
  auto cv2 = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return var / (mean * mean);
  };
  CHECK(cv2(corrected) < cv2(raw));
}

TEST_CASE("dual_band_correct is scale-equivariant") {
  GridPtr g = WavelengthGrid::default_grid();
  Rng rng(12);
  Eigen::VectorXd fv(g->size()), rv(g->size());
  for (int i = 0; i < g->size(); ++i) {
    fv[i] = rng.uniform(0.1, 2.0);
    rv[i] = rng.uniform(0.1, 2.0);
  }
  Spectrum fluo{g, fv, SpectrumRole::fluorescence};
  Spectrum ref{g, rv, SpectrumRole::reflectance};
  DualBandParams p;
  p.alpha = 0.8;
  p.beta = -0.3;
  Eigen::VectorXd base = dual_band_correct(fluo, ref, p).values;

  const double a = 2.3;
  Spectrum fluo_s{g, a * fv, SpectrumRole::fluorescence};
  CHECK((dual_band_correct(fluo_s, ref, p).values - a * base).lpNorm<Eigen::Infinity>() <=
        1e-10 * a * base.lpNorm<Eigen::Infinity>());

  Spectrum ref_s{g, a * rv, SpectrumRole::reflectance};
  const double factor = std::pow(a, -p.alpha - p.beta);
  CHECK((dual_band_correct(fluo, ref_s, p).values - factor * base).lpNorm<Eigen::Infinity>() <=
        1e-10 * base.lpNorm<Eigen::Infinity>());
}

TEST_CASE("nnls: consistent nonnegative systems recover the truth") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd z_true(5);
    for (int k = 0; k < 5; ++k) z_true[k] = rng.uniform();
    Eigen::VectorXd y = lib.B() * z_true;
    NnlsResult r = nnls(lib.B(), y);
    CHECK((r.z - z_true).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(r.residual_norm <= 1e-8);
  }
}

TEST_CASE("nnls: anticorrelated target yields the zero vector") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  Eigen::VectorXd y = -lib.B().col(0);
  NnlsResult r = nnls(lib.B(), y);
  CHECK(r.z.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(r.residual_norm == doctest::Approx(y.norm()));
}

TEST_CASE("nnls: KKT conditions and grid-search floor on 100 random problems") {
  Rng rng(2024);
  const int m = 100, K = 5;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd B(m, K);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < K; ++k) B(i, k) = std::abs(rng.normal());
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) y[i] = rng.normal();

    NnlsResult r = nnls(B, y);
    check_kkt(B, y, r.z);
    CHECK(r.residual_norm <= y.norm() + 1e-12);  // z = 0 is always feasible
    const double oracle = grid_search_residual(B, y);
    CHECK(r.residual_norm <= oracle + 1e-6);
  }
}

TEST_CASE("calibrate_beta: pure scalar attenuation selects beta = 0") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  Rng rng(14);
  std::vector<LabeledSample> train;
  for (int i = 0; i < 60; ++i) {
    Eigen::VectorXd z(5);
    z[kPpix634] = (i % 5) * 0.6;
    z[kPpix620] = 0.1 * z[kPpix634];
    for (int k = 2; k < 5; ++k) z[k] = rng.uniform(0.05, 0.4);
    const double a = rng.log_uniform(0.2, 4.0);  // single scalar per sample
    LabeledSample s;
    s.id = "s" + std::to_string(i);
    s.fluo = Spectrum{g, a * (lib.B() * z), SpectrumRole::fluorescence};
    s.ref = Spectrum{g, Eigen::VectorXd::Constant(g->size(), a), SpectrumRole::reflectance};
    s.c_ppix = z[kPpix634];
    train.push_back(std::move(s));
  }
  DualBandParams p0;
  DualBandParams p = calibrate_beta(train, lib, p0);
  CHECK(p.beta == doctest::Approx(0.0));
  CHECK(p.alpha == 1.0);

  // single preset, no noise: attenuation is fully explained by one scale
  SimConfig cfg = default_phantom_config(g, 31);
  cfg.optics_presets.resize(1);
  cfg.optics_jitter = 0.0;
  cfg.exponent_jitter = 0.0;
  cfg.samples_per_cell = 12;
  cfg.noise.read_sigma = 0.0;
  cfg.noise.shot_coeff = 0.0;
  cfg.saturation.probability = 0.0;
  SimDataset ds = simulate_dataset(cfg);
  DualBandParams cal = calibrate_beta(ds.samples, lib, p0);
  std::vector<double> pred, truth;
  for (const auto& s : ds.samples) {
    pred.push_back(baseline_unmix_sample(s, lib, cal).z.z[kPpix634]);
    truth.push_back(*s.c_ppix);
  }
  CHECK(pearson_r(pred, truth) >= 0.999);
}

TEST_CASE("calibrate_beta: equal-R ties keep the earlier grid point") {
  // two labeled samples: any beta gives R = 1 or R = -1; all the positive-R
  // exponents tie, so the scan must keep -0.05 over +0.05 and 0.0 over both
  GridPtr g = grid_for(450, 747, 3);
  EndmemberLibrary lib = default_library(g);
  std::vector<LabeledSample> train;
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(5);
    z[kPpix634] = i == 0 ? 0.5 : 2.0;
    LabeledSample s;
    s.id = "t" + std::to_string(i);
    s.fluo = Spectrum{g, lib.B() * z, SpectrumRole::fluorescence};
    s.ref = Spectrum{g, Eigen::VectorXd::Ones(g->size()), SpectrumRole::reflectance};
    s.c_ppix = z[kPpix634];
    train.push_back(std::move(s));
  }
  DualBandParams p = calibrate_beta(train, lib, DualBandParams{});
  // unit reflectance: every beta yields identical predictions; smallest
  // |beta| wins and the earlier grid point breaks the remaining tie
  CHECK(p.beta == doctest::Approx(0.0));

  std::vector<LabeledSample> constant;
  constant.push_back(train[0]);
  constant.push_back(train[0]);
  CHECK_THROWS_AS(calibrate_beta(constant, lib, DualBandParams{}), UsageError);
}

TEST_CASE("unmix_baseline: noise-free scalar attenuation recovers linear abundances") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  SimConfig cfg = default_phantom_config(g, 47);
  cfg.optics_presets.resize(1);
  cfg.optics_jitter = 0.0;
  cfg.exponent_jitter = 0.0;
  cfg.samples_per_cell = 10;
  cfg.noise.read_sigma = 0.0;
  cfg.noise.shot_coeff = 0.0;
  cfg.saturation.probability = 0.0;
  SimDataset ds = simulate_dataset(cfg);
  DualBandParams p = calibrate_beta(ds.samples, lib, DualBandParams{});

  std::vector<AbundanceVector> zs = unmix_baseline(ds.samples, lib, p);
  std::vector<double> pred, truth;
  double max_zero_level = 0.0, min_top_level = 1e30;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    pred.push_back(zs[i].z[kPpix634]);
    truth.push_back(*ds.samples[i].c_ppix);
    if (*ds.samples[i].c_ppix == 0.0)
      max_zero_level = std::max(max_zero_level, zs[i].z[kPpix634]);
    if (*ds.samples[i].c_ppix == 2.5)
      min_top_level = std::min(min_top_level, zs[i].z[kPpix634]);
  }
  CHECK(pearson_r(pred, truth) >= 0.999);
  CHECK(max_zero_level <= min_top_level);
}

TEST_CASE("unmix_baseline: degenerate reflectance flags a zero abundance") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  LabeledSample s;
  s.id = "degenerate";
  s.fluo = Spectrum{g, Eigen::VectorXd::Ones(g->size()), SpectrumRole::fluorescence};
  s.ref = Spectrum{g, Eigen::VectorXd::Zero(g->size()), SpectrumRole::reflectance};
  BaselineUnmix r = baseline_unmix_sample(s, lib, DualBandParams{});
  CHECK(r.degenerate);
  CHECK(r.z.degenerate);
  CHECK(r.z.z.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("unmix_baseline is deterministic and order-independent") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  SimConfig cfg = default_phantom_config(g, 19);
  cfg.samples_per_cell = 2;
  SimDataset ds = simulate_dataset(cfg);
  DualBandParams p;
  p.beta = -0.4;

  std::vector<AbundanceVector> a = unmix_baseline(ds.samples, lib, p);
  std::vector<LabeledSample> reversed(ds.samples.rbegin(), ds.samples.rend());
  std::vector<AbundanceVector> b = unmix_baseline(reversed, lib, p);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& flipped = b[b.size() - 1 - i];
    CHECK((a[i].z - flipped.z).lpNorm<Eigen::Infinity>() == 0.0);
  }
}
