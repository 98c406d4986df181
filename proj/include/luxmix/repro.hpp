#pragma once

#include <string>

#include "luxmix/config.hpp"
#include "luxmix/cube.hpp"
#include "luxmix/eval.hpp"

namespace luxmix {

// Everything the acceptance suite needs from one end-to-end run.
struct ReproResult {
  EvalReport baseline;
  EvalReport acunet;
  EvalReport acusa;

  bool eg_onehot_ok = false;        // argmax(softmax(twin(E_k))) == k for all k
  Eigen::MatrixXd eg_response;      // K x K softmaxed twin responses

  double acusa_recon_mse = 0.0;     // mean mse(B f(y), y) on the corrected test set
  double nnls_recon_mse = 0.0;      // mean mse(B nnls(y), y) on the same set

  // squared coefficient of variation of the 634 nm intensity on the
  // constant-concentration set (scale-free Fig.-1-style variance)
  double cv2_raw = 0.0;
  double cv2_baseline = 0.0;
  double cv2_acusa = 0.0;

  double p99_ratio_baseline = 0.0;  // 99th percentile / median over foreground
  double p99_ratio_acusa = 0.0;

  std::uint64_t hu_checksum_before_stage2 = 0;
  std::uint64_t hu_checksum_after_stage2 = 0;

  double beta_calibrated = 0.0;
  std::string summary;              // the acceptance_summary.txt content
};

// Runs synth -> baseline calibration -> ACU-Net -> ACU-SA stage 1/2 ->
// evaluations -> variance and saturated-cube experiments, writing every
// artifact (datasets, checkpoints, histories, reports, maps, summary) under
// out_dir. Fully determined by cfg.
ReproResult run_repro(const RunConfig& cfg, const std::string& out_dir);

// The saturated synthetic cube used by the Fig.-7-style robustness check.
struct SaturatedScene {
  DataCube fluo;
  DataCube white;
};
SaturatedScene make_saturated_scene(const RunConfig& cfg);

}  // namespace luxmix
