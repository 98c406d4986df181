#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "luxmix/classical.hpp"
#include "luxmix/cube.hpp"
#include "luxmix/errors.hpp"
#include "luxmix/eval.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/rng.hpp"
#include "luxmix/simulate.hpp"

using namespace luxmix;

namespace {

GridPtr small_grid(int bands) {
  std::vector<double> w(static_cast<std::size_t>(bands));
  for (int i = 0; i < bands; ++i) w[static_cast<std::size_t>(i)] = 450.0 + 3.0 * i;
  return std::make_shared<const WavelengthGrid>(std::move(w));
}

DataCube random_cube(int w, int h, int bands, std::uint64_t seed, CubeKind kind) {
  Rng rng(seed);
  DataCube cube;
  cube.width = w;
  cube.height = h;
  cube.grid = small_grid(bands);
  cube.kind = kind;
  cube.planes.assign(static_cast<std::size_t>(bands), Eigen::MatrixXd(h, w));
  for (auto& plane : cube.planes)
    for (Eigen::Index i = 0; i < plane.size(); ++i)
      plane.data()[i] = static_cast<double>(static_cast<float>(rng.uniform()));
  return cube;
}

}  // namespace

TEST_CASE("split_dataset: 100 samples at 0.85 give a disjoint 85/15 cover") {
  std::vector<LabeledSample> samples(100);
  GridPtr g = small_grid(4);
  for (int i = 0; i < 100; ++i) {
    samples[static_cast<std::size_t>(i)].id = std::to_string(i);
    samples[static_cast<std::size_t>(i)].fluo =
        Spectrum{g, Eigen::VectorXd::Ones(4), SpectrumRole::fluorescence};
    samples[static_cast<std::size_t>(i)].ref =
        Spectrum{g, Eigen::VectorXd::Ones(4), SpectrumRole::reflectance};
    samples[static_cast<std::size_t>(i)].c_ppix = static_cast<double>(i % 5);
  }
  SplitResult s = split_dataset(samples, 0.85, 9);
  CHECK(s.train.size() == 85);
  CHECK(s.test.size() == 15);
  std::set<int> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 100);

  SplitResult again = split_dataset(samples, 0.85, 9);
  CHECK(s.train == again.train);
  CHECK(s.test == again.test);

  // stratified: each of the 5 levels contributes 17 train / 3 test
  for (int level = 0; level < 5; ++level) {
    int n_train = 0;
    for (int i : s.train)
      if (*samples[static_cast<std::size_t>(i)].c_ppix == level) ++n_train;
    CHECK(n_train == 17);
  }
  CHECK_THROWS_AS(split_dataset(samples, 1.5, 9), ConfigError);
}

TEST_CASE("cube save/load round-trips bit-exactly; header arithmetic checks out") {
  DataCube cube = random_cube(8, 8, 10, 77, CubeKind::fluorescence);
  const std::string path = "test_cube.bin";
  save_cube(cube, path);
  DataCube loaded = load_cube(path);
  CHECK(loaded.width == 8);
  CHECK(loaded.height == 8);
  CHECK(loaded.kind == CubeKind::fluorescence);
  for (int b = 0; b < 10; ++b)
    CHECK((loaded.planes[static_cast<std::size_t>(b)] -
           cube.planes[static_cast<std::size_t>(b)])
              .lpNorm<Eigen::Infinity>() == 0.0);

  // saving the loaded cube reproduces the identical byte stream
  const std::string path2 = "test_cube2.bin";
  save_cube(loaded, path2);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(bytes_a == bytes_b);
  std::remove(path2.c_str());

  CHECK(cube_payload_bytes(2048, 2048, 100) == 2048ull * 2048ull * 100ull * 4ull);

  // truncated payload names the expected and found byte counts
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes_a.data(), static_cast<std::streamsize>(bytes_a.size() - 21));
  }
  try {
    load_cube(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("truncated") != std::string::npos);
    CHECK(msg.find(std::to_string(cube_payload_bytes(8, 8, 10))) != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("dark_subtract: identity, self-cancellation, elementwise oracle") {
  DataCube cube = random_cube(5, 4, 6, 3, CubeKind::fluorescence);
  DataCube zero = cube;
  for (auto& p : zero.planes) p.setZero();
  zero.kind = CubeKind::dark;

  DataCube same = dark_subtract(cube, zero);
  for (int b = 0; b < 6; ++b)
    CHECK((same.planes[static_cast<std::size_t>(b)] -
           cube.planes[static_cast<std::size_t>(b)])
              .lpNorm<Eigen::Infinity>() == 0.0);

  DataCube cancel = dark_subtract(cube, cube);
  for (const auto& p : cancel.planes) CHECK(p.lpNorm<Eigen::Infinity>() == 0.0);

  DataCube dark = random_cube(5, 4, 6, 4, CubeKind::dark);
  DataCube out = dark_subtract(cube, dark);
  for (int b = 0; b < 6; ++b)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x)
        CHECK(out.planes[static_cast<std::size_t>(b)](y, x) ==
              std::max(cube.planes[static_cast<std::size_t>(b)](y, x) -
                           dark.planes[static_cast<std::size_t>(b)](y, x),
                       0.0));

  DataCube mismatched = random_cube(4, 4, 6, 5, CubeKind::dark);
  CHECK_THROWS_AS(dark_subtract(cube, mismatched), DimensionError);
}

TEST_CASE("sensor_correct: identity, halving, masking below threshold") {
  DataCube cube = random_cube(4, 3, 5, 8, CubeKind::fluorescence);
  Spectrum ones{cube.grid, Eigen::VectorXd::Ones(5), SpectrumRole::reflectance};
  SensorCorrectResult r = sensor_correct(cube, ones);
  CHECK(r.masked_bands.empty());
  for (int b = 0; b < 5; ++b)
    CHECK((r.cube.planes[static_cast<std::size_t>(b)] -
           cube.planes[static_cast<std::size_t>(b)])
              .lpNorm<Eigen::Infinity>() == 0.0);

  Spectrum twos{cube.grid, Eigen::VectorXd::Constant(5, 2.0), SpectrumRole::reflectance};
  r = sensor_correct(cube, twos);
  for (int b = 0; b < 5; ++b)
    CHECK((r.cube.planes[static_cast<std::size_t>(b)] -
           0.5 * cube.planes[static_cast<std::size_t>(b)])
              .lpNorm<Eigen::Infinity>() <= 1e-15);

  Eigen::VectorXd resp = Eigen::VectorXd::Constant(5, 0.5);
  resp[2] = 1e-4;  // below the mask threshold
  r = sensor_correct(cube, Spectrum{cube.grid, resp, SpectrumRole::reflectance});
  REQUIRE(r.masked_bands.size() == 1);
  CHECK(r.masked_bands[0] == 2);
  CHECK(r.cube.planes[2].lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("foreground_mask: bright disk, constant cube, isolated noise pixel") {
  const int W = 48, H = 48;
  DataCube cube;
  cube.width = W;
  cube.height = H;
  cube.grid = small_grid(3);
  cube.kind = CubeKind::white;
  cube.planes.assign(3, Eigen::MatrixXd::Zero(H, W));
  Rng rng(12);
  const double cx = 24, cy = 24, R = 14;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const bool inside = std::hypot(x - cx, y - cy) <= R;
      for (int b = 0; b < 3; ++b)
        cube.planes[static_cast<std::size_t>(b)](y, x) =
            (inside ? 1.0 : 0.02) + 0.01 * rng.uniform();
    }
  // a lone bright pixel far from the disk: opening + largest component drop it
  for (int b = 0; b < 3; ++b) cube.planes[static_cast<std::size_t>(b)](3, 44) = 1.0;

  ForegroundMask fg = foreground_mask(cube);
  CHECK_FALSE(fg.degenerate);
  CHECK(fg.mask(3, 44) == 0);

  long inter = 0, uni = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const bool truth = std::hypot(x - cx, y - cy) <= R;
      const bool got = fg.mask(y, x) != 0;
      inter += (truth && got) ? 1 : 0;
      uni += (truth || got) ? 1 : 0;
    }
  CHECK(static_cast<double>(inter) / static_cast<double>(uni) >= 0.95);

  DataCube constant;
  constant.width = 8;
  constant.height = 8;
  constant.grid = small_grid(2);
  constant.kind = CubeKind::white;
  constant.planes.assign(2, Eigen::MatrixXd::Constant(8, 8, 0.7));
  ForegroundMask empty = foreground_mask(constant);
  CHECK(empty.degenerate);
  CHECK(empty.count() == 0);
}

TEST_CASE("extract_regions: tiling arithmetic, constant average, mean oracle") {
  const int W = 30, H = 30, bands = 4;
  DataCube fluo = random_cube(W, H, bands, 21, CubeKind::fluorescence);
  DataCube white = random_cube(W, H, bands, 22, CubeKind::white);
  ForegroundMask all;
  all.mask.setOnes(H, W);

  std::vector<LabeledSample> tiles = extract_regions(fluo, white, all, 10);
  CHECK(tiles.size() == 9);

  // constant cube: the tile average equals the constant
  DataCube constant = fluo;
  for (auto& p : constant.planes) p.setConstant(0.625);
  std::vector<LabeledSample> ct = extract_regions(constant, white, all, 10);
  for (const auto& t : ct)
    CHECK((t.fluo.values.array() - 0.625).abs().maxCoeff() <= 1e-15);

  // random cube: every tile equals the 100-pixel mean oracle
  for (const auto& t : tiles) {
    int y0 = 0, x0 = 0;
    REQUIRE(std::sscanf(t.id.c_str(), "tile_y%d_x%d", &y0, &x0) == 2);
    for (int b = 0; b < bands; ++b) {
      double acc = 0.0;
      for (int y = y0; y < y0 + 10; ++y)
        for (int x = x0; x < x0 + 10; ++x)
          acc += fluo.planes[static_cast<std::size_t>(b)](y, x);
      CHECK(t.fluo.values[b] == doctest::Approx(acc / 100.0).epsilon(1e-12));
    }
  }

  // partial mask: tiles overlapping background are dropped
  ForegroundMask half = all;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < 15; ++x) half.mask(y, x) = 0;
  CHECK(extract_regions(fluo, white, half, 10).size() == 3);

  ForegroundMask none;
  none.mask.setZero(H, W);
  CHECK(extract_regions(fluo, white, none, 10).empty());
}

TEST_CASE("unmix_cube: baseline engine inverts a known noise-free render") {
  GridPtr g = WavelengthGrid::default_grid();
  LibraryPtr lib = default_library_ptr(g);
  const int W = 12, H = 10;

  DataCube fluo, white;
  for (DataCube* c : {&fluo, &white}) {
    c->width = W;
    c->height = H;
    c->grid = g;
    c->planes.assign(static_cast<std::size_t>(g->size()), Eigen::MatrixXd::Zero(H, W));
  }
  fluo.kind = CubeKind::fluorescence;
  white.kind = CubeKind::white;

  Rng rng(31);
  Eigen::MatrixXd truth_map(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      Eigen::VectorXd z(5);
      z << rng.uniform(0.2, 2.0), rng.uniform(0.0, 0.4), rng.uniform(0.05, 0.4),
          rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4);
      truth_map(y, x) = z[kPpix634];
      Eigen::VectorXd spec = lib->B() * z;
      for (int b = 0; b < g->size(); ++b) {
        fluo.planes[static_cast<std::size_t>(b)](y, x) = spec[b];
        white.planes[static_cast<std::size_t>(b)](y, x) = 1.0;
      }
    }

  BaselineEngine engine(lib, DualBandParams{});
  ForegroundMask all;
  all.mask.setOnes(H, W);
  CubeUnmixResult maps = unmix_cube(fluo, white, engine, 1, &all);
  CHECK((maps.abundance[kPpix634] - truth_map).lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK(maps.validity.cast<int>().sum() == W * H);

  // per-pixel cube unmixing matches unmix_baseline on the pixel spectra
  std::vector<LabeledSample> pixel_samples;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      LabeledSample s;
      s.id = "px";
      s.fluo = Spectrum{g, fluo.pixel_spectrum(x, y), SpectrumRole::fluorescence};
      s.ref = Spectrum{g, white.pixel_spectrum(x, y), SpectrumRole::reflectance};
      pixel_samples.push_back(std::move(s));
    }
  std::vector<AbundanceVector> direct = unmix_baseline(pixel_samples, *lib, DualBandParams{});
  int i = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x, ++i)
      CHECK(maps.abundance[kPpix634](y, x) == direct[static_cast<std::size_t>(i)].z[kPpix634]);

  // an all-background mask produces empty maps with empty validity
  ForegroundMask none;
  none.mask.setZero(H, W);
  CubeUnmixResult blank = unmix_cube(fluo, white, engine, 1, &none);
  CHECK(blank.validity.cast<int>().sum() == 0);
  CHECK(blank.abundance[kPpix634].lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("render_map: constant map, endpoint mapping, rank-order round trip") {
  const std::string pgm = "test_map.pgm", csv = "test_map.csv";
  {
    Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(3, 3, 4.2);
    render_map(constant, pgm, csv);
    std::ifstream in(pgm, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == "P5");
    std::string dims, maxval;
    std::getline(in, dims);
    std::getline(in, maxval);
    CHECK(dims == "3 3");
    CHECK(maxval == "255");
    std::string payload((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    REQUIRE(payload.size() == 9);
    for (char c : payload) CHECK(static_cast<unsigned char>(c) == 128);
  }
  {
    Eigen::MatrixXd map(2, 1);
    map << 0.0, 1.0;
    render_map(map, pgm, csv);
    std::ifstream in(pgm, std::ios::binary);
    std::string skip;
    std::getline(in, skip);
    std::getline(in, skip);
    std::getline(in, skip);
    std::string payload((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    REQUIRE(payload.size() == 2);
    CHECK(static_cast<unsigned char>(payload[0]) == 0);
    CHECK(static_cast<unsigned char>(payload[1]) == 255);
  }
  {
    Rng rng(3);
    Eigen::MatrixXd map(6, 7);
    for (Eigen::Index i = 0; i < map.size(); ++i) map.data()[i] = rng.normal();
    render_map(map, pgm, csv);
    Eigen::MatrixXd reloaded = load_map_csv(csv);
    CHECK((reloaded - map).lpNorm<Eigen::Infinity>() == 0.0);

    std::ifstream in(pgm, std::ios::binary);
    std::string skip;
    std::getline(in, skip);
    std::getline(in, skip);
    std::getline(in, skip);
    std::string payload((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    // affine 8-bit quantization preserves the weak rank order
    for (Eigen::Index a = 0; a < map.size(); ++a)
      for (Eigen::Index b = 0; b < map.size(); ++b) {
        const auto pa = static_cast<unsigned char>(
            payload[static_cast<std::size_t>((a % 6) * 7 + a / 6)]);
        const auto pb = static_cast<unsigned char>(
            payload[static_cast<std::size_t>((b % 6) * 7 + b / 6)]);
        if (map.data()[a] < map.data()[b]) CHECK(pa <= pb);
      }
  }
  std::remove(pgm.c_str());
  std::remove(csv.c_str());
}

TEST_CASE("evaluate: perfect predictor, constant predictor, permutation invariance") {
  GridPtr g = WavelengthGrid::default_grid();
  LibraryPtr lib = default_library_ptr(g);
  SimConfig cfg = default_phantom_config(g, 61);
  cfg.samples_per_cell = 4;
  cfg.optics_presets.resize(2);
  cfg.noise.read_sigma = 0.0;
  cfg.noise.shot_coeff = 0.0;
  cfg.saturation.probability = 0.0;
  cfg.optics_jitter = 0.0;
  cfg.exponent_jitter = 0.0;
  cfg.g_min = cfg.g_max = 1.0;
  SimDataset ds = simulate_dataset(cfg);
  DualBandParams p = calibrate_beta(ds.samples, *lib, DualBandParams{});
  BaselineEngine engine(lib, p);

  EvalReport report = evaluate(engine, ds.samples);
  CHECK(report.r_defined);
  CHECK(report.pearson >= 0.999);
  CHECK(report.n == static_cast<int>(ds.samples.size()));
  CHECK(report.per_level.size() == cfg.concentration_levels.size());

  std::vector<LabeledSample> reversed(ds.samples.rbegin(), ds.samples.rend());
  EvalReport flipped = evaluate(engine, reversed);
  CHECK(flipped.pearson == doctest::Approx(report.pearson).epsilon(1e-12));
  CHECK(flipped.mse_recon_mean == doctest::Approx(report.mse_recon_mean).epsilon(1e-9));

  // a constant predictor surfaces the degenerate-variance condition in the report
  struct ConstantEngine final : UnmixEngine {
    LibraryPtr lib_;
    explicit ConstantEngine(LibraryPtr lib) : lib_(std::move(lib)) {}
    std::string name() const override { return "constant"; }
    const EndmemberLibrary& library() const override { return *lib_; }
    std::vector<UnmixOutput> unmix(const std::vector<LabeledSample>& s) const override {
      std::vector<UnmixOutput> out(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        out[i].z = AbundanceVector{Eigen::VectorXd::Ones(5)};
        out[i].corrected = s[i].fluo;
      }
      return out;
    }
  } constant_engine(lib);
  EvalReport degenerate = evaluate(constant_engine, ds.samples);
  CHECK_FALSE(degenerate.r_defined);

  std::vector<LabeledSample> unlabeled = ds.samples;
  unlabeled[0].c_ppix.reset();
  CHECK_THROWS_AS(evaluate(engine, unlabeled), UsageError);
}
