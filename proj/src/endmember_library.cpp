#include "luxmix/endmember_library.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "luxmix/errors.hpp"

namespace luxmix {

namespace {
constexpr double kMinSingularValue = 1e-6;
constexpr double kPeakTolerance = 1e-9;
}  // namespace

EndmemberLibrary::EndmemberLibrary(GridPtr grid, std::vector<std::string> names,
                                   Eigen::MatrixXd B)
    : grid_(std::move(grid)), names_(std::move(names)), B_(std::move(B)) {
  if (!grid_) throw DimensionError("endmember library requires a grid");
  if (B_.cols() < 1) throw DimensionError("endmember library needs K >= 1 columns");
  if (static_cast<int>(names_.size()) != B_.cols())
    throw DimensionError("endmember library: name count does not match K");
  if (B_.rows() != grid_->size())
    throw DimensionError("endmember library: row count does not match the grid");
  if (!B_.allFinite()) throw RangeError("endmember library: non-finite values");
  for (int k = 0; k < K(); ++k) {
    if (B_.col(k).minCoeff() < 0.0)
      throw RangeError("endmember '" + names_[k] + "' has negative values");
    if (std::abs(B_.col(k).maxCoeff() - 1.0) > kPeakTolerance)
      throw RangeError("endmember '" + names_[k] + "' is not peak-normalized to 1");
  }
  if (min_singular_value() <= kMinSingularValue)
    throw DegenerateError("endmember library columns are not linearly independent");
}

Spectrum EndmemberLibrary::column(int k) const {
  if (k < 0 || k >= K()) throw DimensionError("endmember column index out of range");
  return {grid_, B_.col(k), SpectrumRole::endmember};
}

double EndmemberLibrary::min_singular_value() const {
  Eigen::MatrixXd N = B_;
  for (int k = 0; k < N.cols(); ++k) {
    double n = N.col(k).norm();
    if (n > 0.0) N.col(k) /= n;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(N);
  return svd.singularValues().minCoeff();
}

EndmemberLibrary load_endmember_csv(const std::string& path, const GridPtr& session_grid) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open endmember file: " + path);

  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty endmember file: " + path);
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.size() < 2 || cols[0] != "wavelength_nm")
    throw FormatError("endmember file header must start with wavelength_nm: " + path);
  std::vector<std::string> names(cols.begin() + 1, cols.end());
  const int K = static_cast<int>(names.size());

  std::vector<double> wavelengths;
  std::vector<double> flat;  // row-major rows of K values
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    int col = 0;
    while (std::getline(ss, tok, ',')) {
      double v;
      try {
        v = std::stod(tok);
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
      if (col == 0)
        wavelengths.push_back(v);
      else
        flat.push_back(v);
      ++col;
    }
    if (col != K + 1)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(K + 1) + " columns, got " + std::to_string(col));
  }
  if (wavelengths.size() < 2) throw FormatError("endmember file has too few rows: " + path);

  auto file_grid = std::make_shared<const WavelengthGrid>(wavelengths);
  const int m_file = file_grid->size();
  Eigen::MatrixXd B_file(m_file, K);
  for (int i = 0; i < m_file; ++i)
    for (int k = 0; k < K; ++k) B_file(i, k) = flat[static_cast<std::size_t>(i) * K + k];

  // resample each column to the session grid, then restore the peak contract
  Eigen::MatrixXd B(session_grid->size(), K);
  for (int k = 0; k < K; ++k) {
    Spectrum s{file_grid, B_file.col(k), SpectrumRole::endmember};
    Eigen::VectorXd v = resample(s, session_grid).values;
    double peak = v.maxCoeff();
    if (peak <= 0.0)
      throw DegenerateError("endmember '" + names[k] + "' is nonpositive after resampling");
    B.col(k) = v / peak;
  }
  return {session_grid, std::move(names), std::move(B)};
}

void save_endmember_csv(const EndmemberLibrary& lib, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write endmember file: " + path);
  out << "wavelength_nm";
  for (const auto& n : lib.names()) out << ',' << n;
  out << '\n';
  char buf[64];
  for (int i = 0; i < lib.m(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", (*lib.grid())[i]);
    out << buf;
    for (int k = 0; k < lib.K(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", lib.B()(i, k));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw FormatError("failed writing endmember file: " + path);
}

}  // namespace luxmix
