#pragma once

#include <cstdint>
#include <vector>

#include "luxmix/models.hpp"
#include "luxmix/nn/optim.hpp"

namespace luxmix {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  nn::AdamWConfig opt;
  nn::PlateauConfig sched;
  double split_fraction = 0.85;
  std::uint64_t seed = 42;
  // Batches are split into this many fixed sub-graphs whose gradients are
  // reduced in order, so results do not depend on the worker thread count.
  int grad_chunks = 8;

  void validate() const;
};

struct EpochStats {
  int epoch;
  double train_loss;
  double test_loss;
  double test_r;  // NaN when undefined (degenerate predictions)
  double lr;
};

struct TrainResult {
  std::vector<EpochStats> history;
  nn::ParamStore best_params;  // snapshot at the best test R (values only)
  int best_epoch = -1;
  double best_test_r = std::numeric_limits<double>::quiet_NaN();
};

// Supervised ACU-Net training on labeled samples (Eq.-3-style loss). The
// dataset is split internally with tc.seed; history reports held-out loss/R.
TrainResult train_acunet(AcuNetModel& model, const std::vector<LabeledSample>& samples,
                         const EndmemberLibrary& lib, const TrainConfig& tc);

// Self-supervised stage-1 corpus: corrected-role spectra with their known
// abundances (for the held-out R diagnostic only; the loss never sees them).
struct Stage1Data {
  Eigen::MatrixXd rows;    // n x m corrected spectra
  Eigen::MatrixXd z_true;  // n x K
};

TrainResult train_acusa_stage1(AcuSaModel& model, const Stage1Data& data,
                               const TrainConfig& tc);

// Stage 2 trains only the normalization CNN; the HU encoder stays bit-frozen.
TrainResult train_acusa_stage2(AcuSaModel& model, const std::vector<LabeledSample>& samples,
                               const TrainConfig& tc);

// CSV: epoch,train_loss,test_loss,test_r,lr
void save_history_csv(const std::vector<EpochStats>& history, const std::string& path);

// LUXMIX_THREADS env override, else hardware concurrency.
int worker_thread_count();

}  // namespace luxmix
