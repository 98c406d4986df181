#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "luxmix/engines.hpp"
#include "luxmix/sample.hpp"

namespace luxmix {

struct SplitResult {
  std::vector<int> train;
  std::vector<int> test;
};

// Seeded permutation + prefix split.
SplitResult split_indices(int n, double fraction, std::uint64_t seed);

// Stratified by concentration level when every sample is labeled (level
// proportions preserved within one sample), plain split otherwise.
// Disjoint and exhaustive either way.
SplitResult split_dataset(const std::vector<LabeledSample>& samples, double fraction,
                          std::uint64_t seed);

std::vector<LabeledSample> gather(const std::vector<LabeledSample>& samples,
                                  const std::vector<int>& idx);

struct LevelStat {
  double level;
  int count;
  double mean_pred;
  double var_pred;  // population variance of z[PpIX634]
};

struct PredictionRow {
  std::string id;
  double c_ppix;
  Eigen::VectorXd z;
  double residual;  // ||B z - corrected||
  bool degenerate;
  bool saturated;
};

struct EvalReport {
  std::string method;
  int n = 0;
  bool r_defined = false;
  double pearson = 0.0;
  double mse_recon_mean = 0.0;  // mean over samples of mse(Bz, corrected)
  std::vector<LevelStat> per_level;
  int n_saturated = 0;
  bool r_saturated_defined = false;
  double pearson_saturated = 0.0;
  std::vector<PredictionRow> rows;
};

// Pearson R between predicted PpIX634 abundance and c_ppix, reconstruction
// MSE against the method's corrected input, per-level variance table, and a
// separate saturated stratum. Degenerate prediction variance is surfaced in
// the report rather than thrown.
EvalReport evaluate(const UnmixEngine& engine, const std::vector<LabeledSample>& test_samples);

// CSV: id,c_ppix,abundance_<name>...,residual,flags
void save_eval_csv(const EvalReport& report, const std::vector<std::string>& endmember_names,
                   const std::string& path);
// Table-3-style text block comparing methods side by side.
std::string format_eval_summary(const std::vector<EvalReport>& reports);

}  // namespace luxmix
