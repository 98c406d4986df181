#include <doctest.h>

#include <cmath>

#include "luxmix/dataset_io.hpp"
#include "luxmix/endmember_library.hpp"
#include "luxmix/errors.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/rng.hpp"
#include "luxmix/simulate.hpp"

using namespace luxmix;

namespace {

GridPtr make_grid(std::vector<double> w) {
  return std::make_shared<const WavelengthGrid>(std::move(w));
}

Eigen::VectorXd random_vector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("default grid is 450..747 nm, 3 nm step, m = 100") {
  GridPtr g = WavelengthGrid::default_grid();
  CHECK(g->size() == 100);
  CHECK(g->front() == doctest::Approx(450.0));
  CHECK(g->back() == doctest::Approx(747.0));
  CHECK((*g)[1] - (*g)[0] == doctest::Approx(3.0));
}

TEST_CASE("grid construction rejects bad inputs") {
  CHECK_THROWS_AS(WavelengthGrid({500.0, 500.0}), RangeError);
  CHECK_THROWS_AS(WavelengthGrid({500.0, 480.0}), RangeError);
  CHECK_THROWS_AS(WavelengthGrid({-1.0, 480.0}), RangeError);
  CHECK_THROWS_AS(WavelengthGrid({}), RangeError);
}

TEST_CASE("resample: identity on the same grid") {
  GridPtr g = make_grid({450, 453, 456, 459});
  Spectrum s{g, Eigen::Vector4d(1.0, 2.0, 3.0, 4.0), SpectrumRole::fluorescence};
  Spectrum r = resample(s, g);
  CHECK(r.values == s.values);
  CHECK(r.role == s.role);
}

TEST_CASE("resample: linear midpoint") {
  GridPtr src = make_grid({450, 453});
  GridPtr dst = make_grid({451.5});
  Spectrum s{src, Eigen::Vector2d(0.0, 1.0), SpectrumRole::fluorescence};
  CHECK(resample(s, dst).values[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("resample: matches a per-point two-neighbor interpolation oracle") {
  Rng rng(11);
  std::vector<double> w(100);
  for (int i = 0; i < 100; ++i) w[i] = 450.0 + 3.0 * i;
  GridPtr src = make_grid(w);
  std::vector<double> tw(50);
  for (int i = 0; i < 50; ++i) tw[i] = 451.0 + 5.9 * i;
  GridPtr dst = make_grid(tw);

  Eigen::VectorXd values = random_vector(100, rng);
  Spectrum s{src, values, SpectrumRole::fluorescence};
  Spectrum r = resample(s, dst);

  for (int i = 0; i < 50; ++i) {
    const double lambda = tw[static_cast<std::size_t>(i)];
    int j = 0;
    while (w[static_cast<std::size_t>(j) + 1] < lambda) ++j;
    const double t = (lambda - w[j]) / (w[j + 1] - w[j]);
    const double expect = (1.0 - t) * values[j] + t * values[j + 1];
    CHECK(r.values[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("resample: exact on shared grid points, errors outside the span") {
  GridPtr src = make_grid({450, 453, 456, 459});
  Spectrum s{src, Eigen::Vector4d(1.5, -2.5, 3.25, 0.125), SpectrumRole::corrected};
  Spectrum r = resample(s, make_grid({453, 459}));
  CHECK(r.values[0] == -2.5);  // bit-exact
  CHECK(r.values[1] == 0.125);
  CHECK_THROWS_AS(resample(s, make_grid({448, 453})), RangeError);
  CHECK_THROWS_AS(resample(s, make_grid({453, 460})), RangeError);
}

TEST_CASE("mix: basis vectors return library columns") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  for (int k = 0; k < lib.K(); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(lib.K());
    e[k] = 1.0;
    Spectrum s = mix(lib, AbundanceVector{e});
    CHECK((s.values - lib.B().col(k)).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s.role == SpectrumRole::corrected);
  }
}

TEST_CASE("mix: zero abundances give the zero spectrum") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  Spectrum s = mix(lib, AbundanceVector{Eigen::VectorXd::Zero(5)});
  CHECK(s.values.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("mix: matches an element-wise accumulation oracle") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  Rng rng(5);
  Eigen::VectorXd z(5);
  for (int k = 0; k < 5; ++k) z[k] = rng.uniform();
  Spectrum s = mix(lib, AbundanceVector{z});
  for (int i = 0; i < lib.m(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < 5; ++k) acc += lib.B()(i, k) * z[k];
    CHECK(s.values[i] == doctest::Approx(acc).epsilon(1e-12));
  }
  Eigen::VectorXd bad(4);
  bad.setZero();
  CHECK_THROWS_AS(mix(lib, AbundanceVector{bad}), DimensionError);
}

TEST_CASE("mix is linear in the abundances") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  Rng rng(17);
  Eigen::VectorXd z1(5), z2(5);
  for (int k = 0; k < 5; ++k) {
    z1[k] = rng.uniform();
    z2[k] = rng.uniform();
  }
  const double a = 0.7, b = 1.9;
  Eigen::VectorXd combo = a * z1 + b * z2;
  Eigen::VectorXd lhs = mix(lib, AbundanceVector{combo}).values;
  Eigen::VectorXd rhs =
      a * mix(lib, AbundanceVector{z1}).values + b * mix(lib, AbundanceVector{z2}).values;
  CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("mse: identity, unit offset, accumulation oracle") {
  Eigen::Vector2d a(1.0, 1.0), b(0.0, 0.0);
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(a, b) == doctest::Approx(1.0));

  Rng rng(3);
  Eigen::VectorXd x = random_vector(100, rng), y = random_vector(100, rng);
  double acc = 0.0;
  for (int i = 0; i < 100; ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  acc /= 100.0;
  CHECK(mse(x, y) == doctest::Approx(acc).epsilon(1e-12));
  CHECK(mse(x, y) == mse(y, x));
  Eigen::VectorXd shorter(99);
  shorter.setZero();
  CHECK_THROWS_AS(mse(x, shorter), DimensionError);
}

TEST_CASE("mse decomposes into bias^2 + variance against a fixed target") {
  Rng rng(23);
  const int n = 64, m = 20;
  Eigen::VectorXd target = random_vector(m, rng);
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < n; ++i) xs.push_back(random_vector(m, rng));

  double mean_mse = 0.0;
  for (const auto& x : xs) mean_mse += mse(x, target);
  mean_mse /= n;

  Eigen::VectorXd mean_x = Eigen::VectorXd::Zero(m);
  for (const auto& x : xs) mean_x += x;
  mean_x /= n;
  double variance = 0.0;
  for (const auto& x : xs) variance += (x - mean_x).squaredNorm();
  variance /= (static_cast<double>(n) * m);
  const double bias_sq = mse(mean_x, target);
  CHECK(mean_mse == doctest::Approx(bias_sq + variance).epsilon(1e-9));
}

TEST_CASE("pearson_r: perfect correlation and anticorrelation") {
  Eigen::VectorXd x(5);
  x << 1, 2, 3, 4, 5;
  CHECK(pearson_r(x, x) == doctest::Approx(1.0));
  CHECK(pearson_r(x, Eigen::VectorXd(-x)) == doctest::Approx(-1.0));
}

TEST_CASE("pearson_r: matches the definitional covariance formula") {
  Rng rng(31);
  Eigen::VectorXd x = random_vector(50, rng), y = random_vector(50, rng);
  const double mx = x.mean(), my = y.mean();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < 50; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  CHECK(pearson_r(x, y) == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-12));
}

TEST_CASE("pearson_r: zero variance raises instead of returning NaN") {
  Eigen::VectorXd x(4), y(4);
  x << 1, 1, 1, 1;
  y << 1, 2, 3, 4;
  CHECK_THROWS_AS(pearson_r(x, y), DegenerateError);
  CHECK_THROWS_AS(pearson_r(y, x), DegenerateError);
  Eigen::VectorXd one(1);
  one << 1;
  CHECK_THROWS_AS(pearson_r(one, one), DimensionError);
}

TEST_CASE("pearson_r is invariant under positive affine maps") {
  Rng rng(41);
  Eigen::VectorXd x = random_vector(40, rng), y = random_vector(40, rng);
  const double base = pearson_r(x, y);
  Eigen::VectorXd ax = 3.7 * x;
  ax.array() += 11.0;
  CHECK(std::abs(pearson_r(ax, y) - base) <= 1e-10);
  Eigen::VectorXd by = 0.02 * y;
  by.array() -= 5.0;
  CHECK(std::abs(pearson_r(x, by) - base) <= 1e-10);
}

TEST_CASE("normalize_l2: 3-4-5 triangle, unit vector, random norm") {
  Eigen::VectorXd z(5);
  z << 3, 4, 0, 0, 0;
  AbundanceVector n = normalize_l2(AbundanceVector{z});
  CHECK(n.z[0] == doctest::Approx(0.6));
  CHECK(n.z[1] == doctest::Approx(0.8));
  CHECK_FALSE(n.degenerate);

  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(5);
  e1[0] = 1.0;
  CHECK(normalize_l2(AbundanceVector{e1}).z == e1);

  Rng rng(7);
  Eigen::VectorXd r = random_vector(9, rng);
  CHECK(normalize_l2(AbundanceVector{r}).z.norm() == doctest::Approx(1.0).epsilon(1e-12));

  AbundanceVector zero = normalize_l2(AbundanceVector{Eigen::VectorXd::Zero(5)});
  CHECK(zero.degenerate);
  CHECK(zero.z.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("endmember library validates its invariants") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);

  Eigen::MatrixXd bad = lib.B();
  bad(3, 0) = -0.1;
  CHECK_THROWS_AS(EndmemberLibrary(g, lib.names(), bad), RangeError);

  bad = lib.B();
  bad.col(1) *= 0.5;  // breaks the peak contract
  CHECK_THROWS_AS(EndmemberLibrary(g, lib.names(), bad), RangeError);

  Eigen::MatrixXd dup = lib.B();
  dup.col(1) = dup.col(0);  // linearly dependent
  CHECK_THROWS_AS(EndmemberLibrary(g, lib.names(), dup), DegenerateError);
}

TEST_CASE("endmember CSV round trip through the session grid") {
  GridPtr g = WavelengthGrid::default_grid();
  EndmemberLibrary lib = default_library(g);
  const std::string path = "test_endmembers.csv";
  save_endmember_csv(lib, path);
  EndmemberLibrary loaded = load_endmember_csv(path, g);
  CHECK(loaded.names() == lib.names());
  CHECK((loaded.B() - lib.B()).lpNorm<Eigen::Infinity>() <= 1e-12);
  std::remove(path.c_str());
}

TEST_CASE("dataset CSV round trip preserves samples and grid") {
  GridPtr g = WavelengthGrid::default_grid();
  SimConfig cfg = default_phantom_config(g, 77);
  cfg.samples_per_cell = 1;
  cfg.concentration_levels = {0.0, 2.5};
  SimDataset ds = simulate_dataset(cfg);

  const std::string path = "test_dataset.csv";
  save_dataset_csv(ds.samples, path);
  std::vector<LabeledSample> loaded = load_dataset_csv(path);
  REQUIRE(loaded.size() == ds.samples.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == ds.samples[i].id);
    CHECK(loaded[i].saturated == ds.samples[i].saturated);
    CHECK(*loaded[i].c_ppix == *ds.samples[i].c_ppix);
    CHECK((loaded[i].fluo.values - ds.samples[i].fluo.values).lpNorm<Eigen::Infinity>() ==
          0.0);
    CHECK((loaded[i].ref.values - ds.samples[i].ref.values).lpNorm<Eigen::Infinity>() == 0.0);
  }
  std::remove(path.c_str());
  std::remove(grid_sidecar_path(path).c_str());
}
