#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>

namespace luxmix {

// Ordered sampling wavelengths (nm) shared by every spectrum in a session.
class WavelengthGrid {
 public:
  explicit WavelengthGrid(std::vector<double> wavelengths_nm);

  // 450..747 nm inclusive, 3 nm step, 100 samples
  static std::shared_ptr<const WavelengthGrid> default_grid();

  int size() const { return static_cast<int>(wavelengths_entries_.size()); }
  double operator[](int i) const { return wavelengths_entries_[i]; }
  const std::vector<double>& wavelengths_nm() const { return wavelengths_entries_; }
  double front() const { return wavelengths_entries_.front(); }
  double back() const { return wavelengths_entries_.back(); }

  // index of the grid point closest to lambda
  int nearest_index(double lambda_nm) const;

  bool covers(double lo_nm, double hi_nm) const { return front() <= lo_nm && back() >= hi_nm; }

  bool operator==(const WavelengthGrid& other) const {
    return wavelengths_entries_ == other.wavelengths_entries_;
  }

  Eigen::Map<const Eigen::VectorXd> as_vector() const {
    return {wavelengths_entries_.data(), static_cast<Eigen::Index>(wavelengths_entries_.size())};
  }

 private:
  std::vector<double> wavelengths_entries_;
};

using GridPtr = std::shared_ptr<const WavelengthGrid>;

inline bool same_grid(const GridPtr& a, const GridPtr& b) {
  return a == b || (a && b && *a == *b);
}

}  // namespace luxmix
