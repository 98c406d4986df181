#pragma once

#include <vector>

#include "luxmix/abundance.hpp"
#include "luxmix/endmember_library.hpp"
#include "luxmix/sample.hpp"

namespace luxmix {

// Dual-band normalization: s = mean(ref over band1)^alpha * mean(ref over
// band2)^beta, corrected = fluo / s. Band edges in nm, inclusive.
struct DualBandParams {
  double band1_lo = 450.0, band1_hi = 480.0;
  double band2_lo = 610.0, band2_hi = 640.0;
  double alpha = 1.0;
  double beta = 0.0;
};

double dual_band_scale(const Spectrum& ref, const DualBandParams& p);
Spectrum dual_band_correct(const Spectrum& fluo, const Spectrum& ref, const DualBandParams& p);

// Grid-search beta over [-2, 2] step 0.05 (alpha fixed) maximizing the Pearson
// correlation between the NNLS PpIX634 abundance of corrected spectra and the
// concentration labels. Ties break toward smaller |beta|, then toward the
// earlier grid point.
DualBandParams calibrate_beta(const std::vector<LabeledSample>& train,
                              const EndmemberLibrary& lib, const DualBandParams& p0);

struct NnlsResult {
  Eigen::VectorXd z;
  double residual_norm = 0.0;  // ||Bz - y||_2
  int iterations = 0;
};

// Lawson-Hanson active-set nonnegative least squares:
//   z = argmin_{z >= 0} ||B z - y||^2
// Throws SolverError if the active-set loop exceeds 3*K passes.
NnlsResult nnls(const Eigen::MatrixXd& B, const Eigen::VectorXd& y);
AbundanceVector nnls(const EndmemberLibrary& lib, const Spectrum& y);

// Per-sample dual-band correction followed by NNLS. Degenerate reflectances
// yield a flagged zero abundance instead of failing the batch.
struct BaselineUnmix {
  AbundanceVector z;
  Spectrum corrected;      // empty when degenerate
  double residual = 0.0;   // NNLS residual norm
  bool degenerate = false;
};

BaselineUnmix baseline_unmix_sample(const LabeledSample& sample, const EndmemberLibrary& lib,
                                    const DualBandParams& p);
std::vector<AbundanceVector> unmix_baseline(const std::vector<LabeledSample>& samples,
                                            const EndmemberLibrary& lib,
                                            const DualBandParams& p);

}  // namespace luxmix
