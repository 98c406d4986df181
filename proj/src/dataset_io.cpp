#include "luxmix/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "luxmix/errors.hpp"

namespace luxmix {

std::string grid_sidecar_path(const std::string& dataset_path) {
  const auto dot = dataset_path.rfind('.');
  const std::string stem =
      (dot == std::string::npos) ? dataset_path : dataset_path.substr(0, dot);
  return stem + ".grid.json";
}

void save_dataset_csv(const std::vector<LabeledSample>& samples, const std::string& path) {
  if (samples.empty()) throw UsageError("save_dataset_csv: empty dataset");
  const GridPtr& grid = samples.front().fluo.grid;
  const int m = grid->size();

  std::ofstream out(path);
  if (!out) throw FormatError("cannot write dataset: " + path);
  out << "id,domain,c_ppix,saturated";
  for (int i = 0; i < m; ++i) out << ",f_" << i;
  for (int i = 0; i < m; ++i) out << ",r_" << i;
  out << '\n';

  char buf[64];
  for (const auto& s : samples) {
    if (!same_grid(s.fluo.grid, grid))
      throw DimensionError("save_dataset_csv: sample " + s.id + " is on a different grid");
    out << s.id << ',' << to_string(s.domain) << ',';
    if (s.c_ppix) {
      std::snprintf(buf, sizeof buf, "%.17g", *s.c_ppix);
      out << buf;
    }
    out << ',' << (s.saturated ? 1 : 0);
    for (int i = 0; i < m; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s.fluo.values[i]);
      out << ',' << buf;
    }
    for (int i = 0; i < m; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s.ref.values[i]);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw FormatError("failed writing dataset: " + path);

  nlohmann::json sidecar;
  sidecar["wavelengths_nm"] = grid->wavelengths_nm();
  std::ofstream side(grid_sidecar_path(path));
  if (!side) throw FormatError("cannot write grid sidecar for: " + path);
  side << sidecar.dump() << '\n';
}

std::vector<LabeledSample> load_dataset_csv(const std::string& path) {
  const std::string side_path = grid_sidecar_path(path);
  std::ifstream side(side_path);
  if (!side) throw FormatError("missing grid sidecar: " + side_path);
  nlohmann::json sidecar;
  try {
    side >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad grid sidecar " + side_path + ": " + e.what());
  }
  if (!sidecar.contains("wavelengths_nm"))
    throw FormatError("grid sidecar missing wavelengths_nm: " + side_path);
  auto grid = std::make_shared<const WavelengthGrid>(
      sidecar["wavelengths_nm"].get<std::vector<double>>());
  const int m = grid->size();

  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset: " + path);
  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty dataset: " + path);
  {
    int commas = 0;
    for (char c : header)
      if (c == ',') ++commas;
    if (commas != 3 + 2 * m)
      throw FormatError("dataset " + path + ": header has " + std::to_string(commas + 1) +
                        " columns, sidecar grid implies " + std::to_string(4 + 2 * m));
  }

  std::vector<LabeledSample> samples;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> f;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (!line.empty() && line.back() == ',') f.push_back("");
    if (static_cast<int>(f.size()) != 4 + 2 * m)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(4 + 2 * m) + " fields, got " + std::to_string(f.size()));
    LabeledSample s;
    s.id = f[0];
    s.domain = domain_from_string(f[1]);
    try {
      if (!f[2].empty()) s.c_ppix = std::stod(f[2]);
      s.saturated = std::stoi(f[3]) != 0;
      Eigen::VectorXd fluo(m), ref(m);
      for (int i = 0; i < m; ++i) fluo[i] = std::stod(f[4 + i]);
      for (int i = 0; i < m; ++i) ref[i] = std::stod(f[4 + m + i]);
      s.fluo = Spectrum{grid, std::move(fluo), SpectrumRole::fluorescence};
      s.ref = Spectrum{grid, std::move(ref), SpectrumRole::reflectance};
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad numeric field");
    }
    s.validate();
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace luxmix
