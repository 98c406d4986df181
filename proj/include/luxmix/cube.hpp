#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "luxmix/engines.hpp"
#include "luxmix/sample.hpp"

namespace luxmix {

enum class CubeKind : std::uint8_t { fluorescence = 0, white = 1, dark = 2 };

// W x H x bands intensity volume; planes[band] is (H rows, W cols).
struct DataCube {
  int width = 0;
  int height = 0;
  GridPtr grid;
  CubeKind kind = CubeKind::fluorescence;
  std::vector<Eigen::MatrixXd> planes;

  int bands() const { return static_cast<int>(planes.size()); }
  Eigen::VectorXd pixel_spectrum(int x, int y) const;
  void validate() const;
};

// Cube file: magic "HSC1", u32 W, u32 H, u32 bands, u8 kind, 3 pad bytes,
// bands x f64 wavelengths (nm), then band-major f32 planes, each W*H
// row-major. All integers and reals little-endian.
void save_cube(const DataCube& cube, const std::string& path);
DataCube load_cube(const std::string& path);
std::uint64_t cube_payload_bytes(std::uint64_t w, std::uint64_t h, std::uint64_t bands);

// max(cube - dark, 0) elementwise
DataCube dark_subtract(const DataCube& cube, const DataCube& dark);

// Divide each band plane by response(lambda). Bands with response below the
// threshold are masked to zero and reported instead of dividing by noise.
struct SensorCorrectResult {
  DataCube cube;
  std::vector<int> masked_bands;
};
SensorCorrectResult sensor_correct(const DataCube& cube, const Spectrum& response,
                                   double threshold = 1e-3);

// Mean over bands -> Otsu threshold -> 3x3 binary opening -> largest
// 8-connected component.
struct ForegroundMask {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;  // (H, W)
  bool degenerate = false;

  int count() const;
};
ForegroundMask foreground_mask(const DataCube& cube);

// Non-overlapping region x region tiles anchored at the mask bounding box in
// row-major order; only tiles fully inside the mask are kept. Each sample is
// the per-tile pixel average of both cubes.
std::vector<LabeledSample> extract_regions(const DataCube& fluo_cube, const DataCube& white_cube,
                                           const ForegroundMask& mask, int region = 10,
                                           Domain domain = Domain::synthetic);

struct CubeUnmixResult {
  std::vector<Eigen::MatrixXd> abundance;  // K planes (H, W), background = 0
  Eigen::MatrixXd corrected_intensity;     // corrected spectrum sampled near 634 nm
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> validity;
};

// Per-pixel (region = 1) or per-tile application of the engine over the
// foreground. The mask defaults to foreground_mask(white_cube).
CubeUnmixResult unmix_cube(const DataCube& fluo_cube, const DataCube& white_cube,
                           const UnmixEngine& engine, int region = 1,
                           const ForegroundMask* mask = nullptr);

// 8-bit binary PGM, value = round(255 (v - min)/(max - min)); NaN entries are
// invalid and render 0; a constant map renders mid-gray 128. The raw values
// always go to the companion CSV.
void render_map(const Eigen::MatrixXd& map, const std::string& pgm_path,
                const std::string& csv_path);
Eigen::MatrixXd load_map_csv(const std::string& path);

}  // namespace luxmix
