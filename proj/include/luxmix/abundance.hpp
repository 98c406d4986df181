#pragma once

#include <Eigen/Core>

namespace luxmix {

// K nonnegative endmember abundances. Index 0 is PpIX634 by convention.
struct AbundanceVector {
  Eigen::VectorXd z;
  bool degenerate = false;  // set by ops that hit a degenerate input

  AbundanceVector() = default;
  explicit AbundanceVector(Eigen::VectorXd values) : z(std::move(values)) {}

  int size() const { return static_cast<int>(z.size()); }
};

// z / ||z||_2. An all-zero input is returned unchanged and flagged degenerate
// rather than producing NaN.
AbundanceVector normalize_l2(const AbundanceVector& a);

}  // namespace luxmix
