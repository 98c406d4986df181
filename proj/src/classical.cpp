#include "luxmix/classical.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/QR>

#include "luxmix/errors.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/simulate.hpp"

namespace luxmix {

namespace {

double band_mean(const Spectrum& s, double lo, double hi) {
  const WavelengthGrid& grid = *s.grid;
  if (lo >= hi) throw ConfigError("dual band: band_lo must be < band_hi");
  if (lo < grid.front() || hi > grid.back())
    throw ConfigError("dual band: band lies outside the grid");
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < grid.size(); ++i)
    if (grid[i] >= lo && grid[i] <= hi) {
      sum += s.values[i];
      ++count;
    }
  if (count == 0) throw ConfigError("dual band: no grid samples inside band");
  return sum / count;
}

}  // namespace

double dual_band_scale(const Spectrum& ref, const DualBandParams& p) {
  const double m1 = band_mean(ref, p.band1_lo, p.band1_hi);
  const double m2 = band_mean(ref, p.band2_lo, p.band2_hi);
  if (!(m1 > 0.0) || !(m2 > 0.0))
    throw DegenerateError("dual_band_scale: nonpositive band mean");
  return std::pow(m1, p.alpha) * std::pow(m2, p.beta);
}

Spectrum dual_band_correct(const Spectrum& fluo, const Spectrum& ref, const DualBandParams& p) {
  if (!same_grid(fluo.grid, ref.grid))
    throw DimensionError("dual_band_correct: fluo and ref grids differ");
  const double s = dual_band_scale(ref, p);
  return {fluo.grid, fluo.values / s, SpectrumRole::corrected};
}

NnlsResult nnls(const Eigen::MatrixXd& B, const Eigen::VectorXd& y) {
  const int K = static_cast<int>(B.cols());
  if (B.rows() != y.size()) throw DimensionError("nnls: B rows do not match y length");

  const Eigen::VectorXd Bty = B.transpose() * y;
  const double scale = Bty.lpNorm<Eigen::Infinity>() + 1.0;
  const double tol = 1e-10 * scale;
  const int max_iter = 3 * K;

  Eigen::VectorXd z = Eigen::VectorXd::Zero(K);
  std::vector<bool> passive(K, false);
  int n_passive = 0;

  // least squares restricted to the passive set, zeros elsewhere
  auto solve_passive = [&](Eigen::VectorXd& s) {
    Eigen::MatrixXd Bp(B.rows(), n_passive);
    std::vector<int> cols;
    cols.reserve(n_passive);
    for (int j = 0; j < K; ++j)
      if (passive[j]) {
        Bp.col(static_cast<int>(cols.size())) = B.col(j);
        cols.push_back(j);
      }
    Eigen::VectorXd sp = Bp.colPivHouseholderQr().solve(y);
    s.setZero();
    for (std::size_t i = 0; i < cols.size(); ++i) s[cols[i]] = sp[static_cast<int>(i)];
  };

  NnlsResult result;
  int iter = 0;
  while (true) {
    const Eigen::VectorXd w = Bty - B.transpose() * (B * z);
    int best = -1;
    double wmax = tol;
    for (int j = 0; j < K; ++j)
      if (!passive[j] && w[j] > wmax) {
        wmax = w[j];
        best = j;
      }
    if (best < 0) break;  // KKT satisfied

    if (++iter > max_iter)
      throw SolverError("nnls: active-set loop did not converge within 3K iterations");

    passive[best] = true;
    ++n_passive;

    Eigen::VectorXd s(K);
    solve_passive(s);
    // restore feasibility; each pass removes at least one passive index
    while (true) {
      double min_s = 0.0;
      for (int j = 0; j < K; ++j)
        if (passive[j] && s[j] < min_s) min_s = s[j];
      if (min_s >= 0.0) break;

      double alpha = 1.0;
      int blocker = -1;
      for (int j = 0; j < K; ++j)
        if (passive[j] && s[j] < 0.0) {
          const double t = z[j] / (z[j] - s[j]);
          if (t < alpha) {
            alpha = t;
            blocker = j;
          }
        }
      for (int j = 0; j < K; ++j)
        if (passive[j]) z[j] += alpha * (s[j] - z[j]);
      for (int j = 0; j < K; ++j)
        if (passive[j] && (j == blocker || z[j] <= 0.0)) {
          passive[j] = false;
          z[j] = 0.0;
          --n_passive;
        }
      if (n_passive == 0) break;
      solve_passive(s);
    }
    if (n_passive > 0)
      for (int j = 0; j < K; ++j) z[j] = passive[j] ? std::max(s[j], 0.0) : 0.0;
  }

  result.z = z;
  result.residual_norm = (B * z - y).norm();
  result.iterations = iter;
  return result;
}

AbundanceVector nnls(const EndmemberLibrary& lib, const Spectrum& y) {
  if (!same_grid(lib.grid(), y.grid)) throw DimensionError("nnls: spectrum is not on B's grid");
  return AbundanceVector{nnls(lib.B(), y.values).z};
}

BaselineUnmix baseline_unmix_sample(const LabeledSample& sample, const EndmemberLibrary& lib,
                                    const DualBandParams& p) {
  BaselineUnmix out;
  try {
    out.corrected = dual_band_correct(sample.fluo, sample.ref, p);
  } catch (const DegenerateError&) {
    out.z = AbundanceVector{Eigen::VectorXd::Zero(lib.K())};
    out.z.degenerate = true;
    out.degenerate = true;
    return out;
  }
  NnlsResult r = nnls(lib.B(), out.corrected.values);
  out.z = AbundanceVector{std::move(r.z)};
  out.residual = r.residual_norm;
  return out;
}

std::vector<AbundanceVector> unmix_baseline(const std::vector<LabeledSample>& samples,
                                            const EndmemberLibrary& lib,
                                            const DualBandParams& p) {
  std::vector<AbundanceVector> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(baseline_unmix_sample(s, lib, p).z);
  return out;
}

DualBandParams calibrate_beta(const std::vector<LabeledSample>& train,
                              const EndmemberLibrary& lib, const DualBandParams& p0) {
  int n_labeled = 0;
  double first_label = 0.0;
  bool distinct = false;
  for (const auto& s : train)
    if (s.c_ppix) {
      if (n_labeled == 0)
        first_label = *s.c_ppix;
      else if (*s.c_ppix != first_label)
        distinct = true;
      ++n_labeled;
    }
  if (n_labeled < 2 || !distinct)
    throw UsageError("calibrate_beta: need >= 2 distinct c_ppix labels");

  // NNLS is positively homogeneous, so solve each sample once on the raw fluo
  // and rescale by 1/s(beta) instead of re-solving per grid point.
  std::vector<double> base_abundance(train.size(), 0.0);
  std::vector<double> band1(train.size(), 0.0), band2(train.size(), 0.0);
  std::vector<bool> usable(train.size(), false);
  int n_usable = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& s = train[i];
    if (!s.c_ppix) continue;
    double m1, m2;
    try {
      m1 = band_mean(s.ref, p0.band1_lo, p0.band1_hi);
      m2 = band_mean(s.ref, p0.band2_lo, p0.band2_hi);
    } catch (const ConfigError&) {
      throw;
    }
    if (!(m1 > 0.0) || !(m2 > 0.0)) continue;
    band1[i] = m1;
    band2[i] = m2;
    base_abundance[i] = nnls(lib.B(), s.fluo.values).z[kPpix634];
    usable[i] = true;
    ++n_usable;
  }
  if (n_usable < 2) throw DegenerateError("calibrate_beta: all reflectances degenerate");

  DualBandParams best = p0;
  double best_r = -2.0;
  bool found = false;
  for (int k = 0; k <= 80; ++k) {
    const double beta = (k - 40) * 5.0 / 100.0;
    std::vector<double> pred, label;
    pred.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!usable[i]) continue;
      const double s = std::pow(band1[i], p0.alpha) * std::pow(band2[i], beta);
      pred.push_back(base_abundance[i] / s);
      label.push_back(*train[i].c_ppix);
    }
    double r;
    try {
      r = pearson_r(pred, label);
    } catch (const DegenerateError&) {
      continue;  // constant predictions at this exponent
    }
    if (!found || r > best_r || (r == best_r && std::abs(beta) < std::abs(best.beta))) {
      best.beta = beta;
      best_r = r;
      found = true;
    }
  }
  if (!found) throw DegenerateError("calibrate_beta: no usable exponent found");
  return best;
}

}  // namespace luxmix
