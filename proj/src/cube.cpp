#include "luxmix/cube.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <sstream>

#include "luxmix/errors.hpp"

namespace luxmix {

Eigen::VectorXd DataCube::pixel_spectrum(int x, int y) const {
  Eigen::VectorXd s(bands());
  for (int b = 0; b < bands(); ++b) s[b] = planes[static_cast<std::size_t>(b)](y, x);
  return s;
}

void DataCube::validate() const {
  if (!grid) throw DimensionError("cube: missing grid");
  if (bands() != grid->size()) throw DimensionError("cube: plane count does not match grid");
  if (width < 1 || height < 1) throw DimensionError("cube: empty dimensions");
  for (const auto& p : planes) {
    if (p.rows() != height || p.cols() != width)
      throw DimensionError("cube: plane dimensions do not match W x H");
    if (!p.allFinite()) throw RangeError("cube: non-finite values");
  }
}

std::uint64_t cube_payload_bytes(std::uint64_t w, std::uint64_t h, std::uint64_t bands) {
  return w * h * bands * 4;
}

namespace {
constexpr char kCubeMagic[4] = {'H', 'S', 'C', '1'};
}

void save_cube(const DataCube& cube, const std::string& path) {
  cube.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write cube: " + path);
  out.write(kCubeMagic, 4);
  const std::uint32_t w = static_cast<std::uint32_t>(cube.width);
  const std::uint32_t h = static_cast<std::uint32_t>(cube.height);
  const std::uint32_t nb = static_cast<std::uint32_t>(cube.bands());
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&nb), 4);
  const std::uint8_t kind = static_cast<std::uint8_t>(cube.kind);
  const char pad[3] = {0, 0, 0};
  out.write(reinterpret_cast<const char*>(&kind), 1);
  out.write(pad, 3);
  for (int b = 0; b < cube.bands(); ++b) {
    const double lambda = (*cube.grid)[b];
    out.write(reinterpret_cast<const char*>(&lambda), 8);
  }
  std::vector<float> row(static_cast<std::size_t>(cube.width));
  for (int b = 0; b < cube.bands(); ++b)
    for (int y = 0; y < cube.height; ++y) {
      for (int x = 0; x < cube.width; ++x)
        row[static_cast<std::size_t>(x)] =
            static_cast<float>(cube.planes[static_cast<std::size_t>(b)](y, x));
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(4 * row.size()));
    }
  if (!out) throw FormatError("failed writing cube: " + path);
}

DataCube load_cube(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open cube: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCubeMagic, 4) != 0)
    throw FormatError("bad cube magic in " + path);
  std::uint32_t w = 0, h = 0, nb = 0;
  std::uint8_t kind = 0;
  char pad[3];
  if (!in.read(reinterpret_cast<char*>(&w), 4) || !in.read(reinterpret_cast<char*>(&h), 4) ||
      !in.read(reinterpret_cast<char*>(&nb), 4) ||
      !in.read(reinterpret_cast<char*>(&kind), 1) || !in.read(pad, 3))
    throw FormatError("truncated cube header in " + path);
  if (w == 0 || h == 0 || nb == 0) throw FormatError("empty cube dimensions in " + path);
  if (kind > 2) throw FormatError("unknown cube kind in " + path);

  std::vector<double> wavelengths(nb);
  if (!in.read(reinterpret_cast<char*>(wavelengths.data()),
               static_cast<std::streamsize>(8 * nb)))
    throw FormatError("truncated cube wavelength table in " + path);

  DataCube cube;
  cube.width = static_cast<int>(w);
  cube.height = static_cast<int>(h);
  cube.kind = static_cast<CubeKind>(kind);
  cube.grid = std::make_shared<const WavelengthGrid>(std::move(wavelengths));

  const std::uint64_t expected = cube_payload_bytes(w, h, nb);
  std::vector<float> row(static_cast<std::size_t>(w));
  cube.planes.assign(nb, Eigen::MatrixXd(h, w));
  std::uint64_t read_bytes = 0;
  for (std::uint32_t b = 0; b < nb; ++b)
    for (std::uint32_t y = 0; y < h; ++y) {
      if (!in.read(reinterpret_cast<char*>(row.data()),
                   static_cast<std::streamsize>(4 * row.size()))) {
        read_bytes += static_cast<std::uint64_t>(in.gcount());
        throw FormatError("cube file truncated: expected " + std::to_string(expected) +
                          " payload bytes, found " + std::to_string(read_bytes) + " (" + path +
                          ")");
      }
      read_bytes += 4ull * w;
      for (std::uint32_t x = 0; x < w; ++x)
        cube.planes[b](static_cast<int>(y), static_cast<int>(x)) =
            static_cast<double>(row[x]);
    }
  cube.validate();
  return cube;
}

DataCube dark_subtract(const DataCube& cube, const DataCube& dark) {
  if (cube.width != dark.width || cube.height != dark.height ||
      cube.bands() != dark.bands() || !same_grid(cube.grid, dark.grid))
    throw DimensionError("dark_subtract: cube and dark dimensions differ");
  DataCube out = cube;
  for (int b = 0; b < cube.bands(); ++b)
    out.planes[static_cast<std::size_t>(b)] =
        (cube.planes[static_cast<std::size_t>(b)] - dark.planes[static_cast<std::size_t>(b)])
            .cwiseMax(0.0);
  return out;
}

SensorCorrectResult sensor_correct(const DataCube& cube, const Spectrum& response,
                                   double threshold) {
  if (!same_grid(cube.grid, response.grid))
    throw DimensionError("sensor_correct: response is not on the cube grid");
  SensorCorrectResult out;
  out.cube = cube;
  for (int b = 0; b < cube.bands(); ++b) {
    const double r = response.values[b];
    if (r <= threshold) {
      out.cube.planes[static_cast<std::size_t>(b)].setZero();
      out.masked_bands.push_back(b);
    } else {
      out.cube.planes[static_cast<std::size_t>(b)] /= r;
    }
  }
  return out;
}

int ForegroundMask::count() const { return static_cast<int>(mask.cast<int>().sum()); }

namespace {

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// threshold maximizing between-class variance over a 256-bin histogram
double otsu_threshold(const Eigen::MatrixXd& img) {
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  constexpr int kBins = 256;
  std::vector<long> hist(kBins, 0);
  const double scale = (kBins - 1) / (hi - lo);
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    int bin = static_cast<int>((img.data()[i] - lo) * scale);
    bin = std::clamp(bin, 0, kBins - 1);
    ++hist[static_cast<std::size_t>(bin)];
  }
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[b]);
  double w0 = 0.0, sum0 = 0.0, best_var = -1.0;
  int best_bin = 0;
  for (int b = 0; b < kBins - 1; ++b) {
    w0 += static_cast<double>(hist[b]);
    if (w0 == 0.0) continue;
    const double w1 = total - w0;
    if (w1 == 0.0) break;
    sum0 += b * static_cast<double>(hist[b]);
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best_var) {
      best_var = between;
      best_bin = b;
    }
  }
  return lo + (best_bin + 0.5) / scale;
}

MaskMatrix erode3(const MaskMatrix& m) {
  MaskMatrix out = MaskMatrix::Zero(m.rows(), m.cols());
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) {
      bool keep = true;
      for (int dy = -1; dy <= 1 && keep; ++dy)
        for (int dx = -1; dx <= 1 && keep; ++dx) {
          const Eigen::Index yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= m.rows() || xx < 0 || xx >= m.cols() || m(yy, xx) == 0)
            keep = false;  // outside counts as background
        }
      out(y, x) = keep ? 1 : 0;
    }
  return out;
}

MaskMatrix dilate3(const MaskMatrix& m) {
  MaskMatrix out = MaskMatrix::Zero(m.rows(), m.cols());
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) {
      bool set = false;
      for (int dy = -1; dy <= 1 && !set; ++dy)
        for (int dx = -1; dx <= 1 && !set; ++dx) {
          const Eigen::Index yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < m.rows() && xx >= 0 && xx < m.cols() && m(yy, xx) != 0)
            set = true;
        }
      out(y, x) = set ? 1 : 0;
    }
  return out;
}

MaskMatrix largest_component8(const MaskMatrix& m) {
  MaskMatrix labels = MaskMatrix::Zero(m.rows(), m.cols());  // 1 = visited
  MaskMatrix best = MaskMatrix::Zero(m.rows(), m.cols());
  long best_count = 0;
  std::deque<std::pair<Eigen::Index, Eigen::Index>> queue;
  for (Eigen::Index y0 = 0; y0 < m.rows(); ++y0)
    for (Eigen::Index x0 = 0; x0 < m.cols(); ++x0) {
      if (m(y0, x0) == 0 || labels(y0, x0) != 0) continue;
      MaskMatrix current = MaskMatrix::Zero(m.rows(), m.cols());
      long count = 0;
      queue.emplace_back(y0, x0);
      labels(y0, x0) = 1;
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        current(y, x) = 1;
        ++count;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const Eigen::Index yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= m.rows() || xx < 0 || xx >= m.cols()) continue;
            if (m(yy, xx) != 0 && labels(yy, xx) == 0) {
              labels(yy, xx) = 1;
              queue.emplace_back(yy, xx);
            }
          }
      }
      if (count > best_count) {  // ties keep the first component in scan order
        best_count = count;
        best = std::move(current);
      }
    }
  return best;
}

}  // namespace

ForegroundMask foreground_mask(const DataCube& cube) {
  cube.validate();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(cube.height, cube.width);
  for (const auto& p : cube.planes) mean += p;
  mean /= static_cast<double>(cube.bands());

  ForegroundMask out;
  if (mean.maxCoeff() - mean.minCoeff() <= 0.0) {
    out.mask = MaskMatrix::Zero(cube.height, cube.width);
    out.degenerate = true;  // constant image: no foreground separable
    return out;
  }
  const double thr = otsu_threshold(mean);
  MaskMatrix m(cube.height, cube.width);
  for (int y = 0; y < cube.height; ++y)
    for (int x = 0; x < cube.width; ++x) m(y, x) = mean(y, x) > thr ? 1 : 0;
  m = dilate3(erode3(m));  // opening
  m = largest_component8(m);
  out.mask = std::move(m);
  out.degenerate = out.count() == 0;
  return out;
}

std::vector<LabeledSample> extract_regions(const DataCube& fluo_cube, const DataCube& white_cube,
                                           const ForegroundMask& mask, int region,
                                           Domain domain) {
  if (region < 1) throw ConfigError("extract_regions: region must be >= 1");
  if (fluo_cube.width != white_cube.width || fluo_cube.height != white_cube.height ||
      !same_grid(fluo_cube.grid, white_cube.grid))
    throw DimensionError("extract_regions: cube dimensions differ");
  if (mask.mask.rows() != fluo_cube.height || mask.mask.cols() != fluo_cube.width)
    throw DimensionError("extract_regions: mask dimensions differ");

  // bounding box of the mask
  int y_min = fluo_cube.height, y_max = -1, x_min = fluo_cube.width, x_max = -1;
  for (int y = 0; y < fluo_cube.height; ++y)
    for (int x = 0; x < fluo_cube.width; ++x)
      if (mask.mask(y, x)) {
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
      }
  std::vector<LabeledSample> out;
  if (y_max < 0) return out;

  const int m = fluo_cube.bands();
  for (int y0 = y_min; y0 + region - 1 <= y_max; y0 += region)
    for (int x0 = x_min; x0 + region - 1 <= x_max; x0 += region) {
      bool inside = true;
      for (int y = y0; y < y0 + region && inside; ++y)
        for (int x = x0; x < x0 + region && inside; ++x)
          if (!mask.mask(y, x)) inside = false;
      if (!inside) continue;

      Eigen::VectorXd f = Eigen::VectorXd::Zero(m), r = Eigen::VectorXd::Zero(m);
      for (int y = y0; y < y0 + region; ++y)
        for (int x = x0; x < x0 + region; ++x) {
          f += fluo_cube.pixel_spectrum(x, y);
          r += white_cube.pixel_spectrum(x, y);
        }
      const double inv = 1.0 / (static_cast<double>(region) * region);
      LabeledSample s;
      s.id = "tile_y" + std::to_string(y0) + "_x" + std::to_string(x0);
      s.fluo = Spectrum{fluo_cube.grid, f * inv, SpectrumRole::fluorescence};
      s.ref = Spectrum{fluo_cube.grid, r * inv, SpectrumRole::reflectance};
      s.domain = domain;
      out.push_back(std::move(s));
    }
  return out;
}

CubeUnmixResult unmix_cube(const DataCube& fluo_cube, const DataCube& white_cube,
                           const UnmixEngine& engine, int region, const ForegroundMask* mask) {
  if (fluo_cube.width != white_cube.width || fluo_cube.height != white_cube.height ||
      !same_grid(fluo_cube.grid, white_cube.grid))
    throw DimensionError("unmix_cube: cube dimensions differ");
  if (!same_grid(fluo_cube.grid, engine.library().grid()))
    throw DimensionError("unmix_cube: engine grid does not match the cubes");

  ForegroundMask local;
  if (!mask) {
    local = foreground_mask(white_cube);
    mask = &local;
  }

  const int K = engine.library().K();
  const int peak_band = fluo_cube.grid->nearest_index(634.0);
  CubeUnmixResult result;
  result.abundance.assign(static_cast<std::size_t>(K),
                          Eigen::MatrixXd::Zero(fluo_cube.height, fluo_cube.width));
  result.corrected_intensity = Eigen::MatrixXd::Zero(fluo_cube.height, fluo_cube.width);
  result.validity =
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(fluo_cube.height,
                                                                        fluo_cube.width);

  struct Cell {
    int x0, y0, size;
  };
  std::vector<LabeledSample> batch;
  std::vector<Cell> cells;
  if (region <= 1) {
    for (int y = 0; y < fluo_cube.height; ++y)
      for (int x = 0; x < fluo_cube.width; ++x) {
        if (!mask->mask(y, x)) continue;
        LabeledSample s;
        s.id = "px_" + std::to_string(x) + "_" + std::to_string(y);
        s.fluo = Spectrum{fluo_cube.grid, fluo_cube.pixel_spectrum(x, y),
                          SpectrumRole::fluorescence};
        s.ref = Spectrum{fluo_cube.grid, white_cube.pixel_spectrum(x, y),
                         SpectrumRole::reflectance};
        batch.push_back(std::move(s));
        cells.push_back({x, y, 1});
      }
  } else {
    batch = extract_regions(fluo_cube, white_cube, *mask, region);
    for (const auto& s : batch) {
      // ids encode the anchor: tile_y<y0>_x<x0>
      int y0 = 0, x0 = 0;
      std::sscanf(s.id.c_str(), "tile_y%d_x%d", &y0, &x0);
      cells.push_back({x0, y0, region});
    }
  }
  if (batch.empty()) return result;

  const std::vector<UnmixOutput> outputs = engine.unmix(batch);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& cell = cells[i];
    const auto& o = outputs[i];
    const double peak =
        o.degenerate ? 0.0 : o.corrected.values[peak_band];
    for (int y = cell.y0; y < cell.y0 + cell.size; ++y)
      for (int x = cell.x0; x < cell.x0 + cell.size; ++x) {
        for (int k = 0; k < K; ++k)
          result.abundance[static_cast<std::size_t>(k)](y, x) = o.z.z[k];
        result.corrected_intensity(y, x) = peak;
        result.validity(y, x) = o.degenerate ? 0 : 1;
      }
  }
  return result;
}

void render_map(const Eigen::MatrixXd& map, const std::string& pgm_path,
                const std::string& csv_path) {
  double v_min = std::numeric_limits<double>::infinity();
  double v_max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    const double v = map.data()[i];
    if (std::isnan(v)) continue;
    if (!std::isfinite(v)) throw RangeError("render_map: non-finite map value");
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
  }
  const bool constant = !(v_max > v_min);

  std::ofstream pgm(pgm_path, std::ios::binary);
  if (!pgm) throw FormatError("cannot write image: " + pgm_path);
  pgm << "P5\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(map.cols()));
  for (Eigen::Index y = 0; y < map.rows(); ++y) {
    for (Eigen::Index x = 0; x < map.cols(); ++x) {
      const double v = map(y, x);
      unsigned char byte = 0;
      if (!std::isnan(v))
        byte = constant ? 128
                        : static_cast<unsigned char>(
                              std::lround(255.0 * (v - v_min) / (v_max - v_min)));
      row[static_cast<std::size_t>(x)] = byte;
    }
    pgm.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!pgm) throw FormatError("failed writing image: " + pgm_path);

  std::ofstream csv(csv_path);
  if (!csv) throw FormatError("cannot write map CSV: " + csv_path);
  char buf[64];
  for (Eigen::Index y = 0; y < map.rows(); ++y) {
    for (Eigen::Index x = 0; x < map.cols(); ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", map(y, x));
      csv << (x ? "," : "") << buf;
    }
    csv << '\n';
  }
  if (!csv) throw FormatError("failed writing map CSV: " + csv_path);
}

Eigen::MatrixXd load_map_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open map CSV: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) {
      try {
        row.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw FormatError(path + ": bad numeric field '" + tok + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError(path + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": empty map");
  Eigen::MatrixXd map(rows.size(), rows.front().size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x)
      map(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = rows[y][x];
  return map;
}

}  // namespace luxmix
