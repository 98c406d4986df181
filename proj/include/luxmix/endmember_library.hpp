#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "luxmix/spectrum.hpp"

namespace luxmix {

// Known endmember emission spectra, one per column of B (m x K). Columns are
// nonnegative, peak-normalized to 1 and must be linearly independent.
class EndmemberLibrary {
 public:
  EndmemberLibrary(GridPtr grid, std::vector<std::string> names, Eigen::MatrixXd B);

  const GridPtr& grid() const { return grid_; }
  const std::vector<std::string>& names() const { return names_; }
  const Eigen::MatrixXd& B() const { return B_; }
  int m() const { return static_cast<int>(B_.rows()); }
  int K() const { return static_cast<int>(B_.cols()); }

  Spectrum column(int k) const;

  // smallest singular value of B after column L2-normalization
  double min_singular_value() const;

 private:
  GridPtr grid_;
  std::vector<std::string> names_;
  Eigen::MatrixXd B_;
};

// CSV format: header `wavelength_nm,<name1>,...,<nameK>`, one row per
// wavelength, ascending. Loading resamples onto `session_grid` and re-applies
// peak normalization (linear interpolation can shift column maxima).
EndmemberLibrary load_endmember_csv(const std::string& path, const GridPtr& session_grid);
void save_endmember_csv(const EndmemberLibrary& lib, const std::string& path);

}  // namespace luxmix
