#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "luxmix/abundance.hpp"
#include "luxmix/nn/checkpoint.hpp"
#include "luxmix/nn/graph.hpp"
#include "luxmix/sample.hpp"
#include "luxmix/simulate.hpp"

namespace luxmix {

// Four residual blocks of same-convolutions bounded by channel-doubling
// transition convs, then three fully connected layers and a final ReLU.
// The stem conv lifts the input channels to the first block width so the
// residual adds stay at constant channel count.
struct AcuNetConfig {
  int m = 100;
  int K = 5;
  int in_channels = 2;
  std::vector<int> block_channels = {16, 32, 64, 128};
  std::vector<int> block_convs = {2, 2, 3, 2};
  std::vector<int> block_kernels = {5, 5, 3, 3};
  std::vector<int> fc = {256, 64};
  std::uint64_t seed = 42;
  bool recon_normalized = true;   // reconstruct from z_hat (the prose's
                                  // B z_hat); the raw-z variant collapses
                                  // the concentration head

  void validate() const;
  int flat_features() const;  // block_channels.back() * (m / 2^blocks)
  nlohmann::json to_json() const;
  static AcuNetConfig from_json(const nlohmann::json& j);
};

struct AcuNetModel {
  AcuNetConfig cfg;
  nn::ParamStore params;  // architecture weights + loss.log_sigma_c / _rec
};

AcuNetModel build_acunet(const AcuNetConfig& cfg);

// x rank3 (b, in_channels, m) -> abundances rank2 (b, K), z >= 0.
nn::Tensor acunet_forward(nn::Graph& g, nn::ParamStore& params, const AcuNetConfig& cfg,
                          nn::Tensor x, bool trainable = true);

// L = (z1 - c)^2/(2 sigma_c^2) + ||Bz - fluo||^2/(2 sigma_rec^2)
//     + log(sigma_c sigma_rec), batch-averaged per task.
nn::Tensor acunet_loss(nn::Graph& g, nn::ParamStore& params, const AcuNetConfig& cfg,
                       nn::Tensor z, const Eigen::MatrixXd& B,
                       const Eigen::VectorXd& c_labels, const Eigen::MatrixXd& fluo_rows);

// Shallow normalization CNN: four conv layers, ReLU after every layer, no
// pooling; maps (b, 2, m) -> (b, 1, m).
struct AcuSaConfig {
  AcuNetConfig hu;  // in_channels forced to 1 by build_acusa
  std::vector<int> norm_channels = {16, 16, 16, 1};
  std::vector<int> norm_kernels = {5, 5, 3, 3};
  std::uint64_t norm_seed = 43;

  void validate() const;
  nlohmann::json to_json() const;
  static AcuSaConfig from_json(const nlohmann::json& j);
};

struct AcuSaModel {
  AcuSaConfig cfg;
  nn::ParamStore hu_params;    // encoder weights + loss.log_sigma_eg / _rec
  nn::ParamStore norm_params;  // "norm."-prefixed conv weights
  LibraryPtr library;          // fixed decoder: z -> B z, never trained
};

AcuSaModel build_acusa(const AcuSaConfig& cfg, LibraryPtr library);

nn::Tensor norm_forward(nn::Graph& g, nn::ParamStore& params, const AcuSaConfig& cfg,
                        nn::Tensor x, bool trainable = true);

// Eq.-4-style stage-1 loss on a batch of corrected spectra (rows of batch_rows):
// endmember-guidance CE through the twin encoder + self-reconstruction, with
// learned log-sigma weights.
nn::Tensor acusa_stage1_loss(nn::Graph& g, AcuSaModel& model, const Eigen::MatrixXd& batch_rows);

// Stage 2: squared error between [f(g(fluo, ref))]_0 and c_ppix. HU encoder
// parameters are frozen; gradients flow only into the normalization model.
nn::Tensor acusa_stage2_loss(nn::Graph& g, AcuSaModel& model,
                             const Eigen::MatrixXd& fluo_rows, const Eigen::MatrixXd& ref_rows,
                             const Eigen::VectorXd& c_labels);

// ---- prediction ------------------------------------------------------------

// (n, m) row matrices -> (n*m, 2) storage with channel 0 = fluo, 1 = ref.
Eigen::MatrixXd pack_two_channel(const Eigen::MatrixXd& fluo_rows,
                                 const Eigen::MatrixXd& ref_rows);
Eigen::MatrixXd pack_one_channel(const Eigen::MatrixXd& rows);
Eigen::MatrixXd rows_from_samples_fluo(const std::vector<LabeledSample>& samples);
Eigen::MatrixXd rows_from_samples_ref(const std::vector<LabeledSample>& samples);

Eigen::MatrixXd predict_acunet_batch(const AcuNetModel& model, const Eigen::MatrixXd& fluo_rows,
                                     const Eigen::MatrixXd& ref_rows);
AbundanceVector predict_acunet(const AcuNetModel& model, const LabeledSample& sample);

struct AcuSaBatchPrediction {
  Eigen::MatrixXd corrected_rows;  // g output, (n, m)
  Eigen::MatrixXd z;               // f(g(...)), (n, K)
};
AcuSaBatchPrediction predict_acusa_batch(const AcuSaModel& model,
                                         const Eigen::MatrixXd& fluo_rows,
                                         const Eigen::MatrixXd& ref_rows);

struct AcuSaPrediction {
  Spectrum corrected;
  AbundanceVector z;
};
AcuSaPrediction predict_acusa(const AcuSaModel& model, const LabeledSample& sample);

// HU encoder alone on corrected spectra (the stage-1 mapping f).
Eigen::MatrixXd predict_hu_batch(const AcuSaModel& model, const Eigen::MatrixXd& corrected_rows);

// Softmaxed twin-encoder response to each pure endmember column; row k is the
// K-vector for endmember k.
Eigen::MatrixXd endmember_guidance_response(const AcuSaModel& model);

// ---- checkpoints -----------------------------------------------------------

nn::Checkpoint acunet_checkpoint(const AcuNetModel& model, const nn::ParamStore& params,
                                 const nlohmann::json& provenance, const std::string& dtype);
AcuNetModel acunet_from_checkpoint(const nn::Checkpoint& ckpt);

nn::Checkpoint acusa_hu_checkpoint(const AcuSaModel& model, const nn::ParamStore& params,
                                   const nlohmann::json& provenance, const std::string& dtype);
nn::Checkpoint acusa_norm_checkpoint(const AcuSaModel& model, const nn::ParamStore& params,
                                     const nlohmann::json& provenance, const std::string& dtype);
// Rebuilds the full model; norm checkpoint optional (stage-1-only model).
AcuSaModel acusa_from_checkpoints(const nn::Checkpoint& hu, const nn::Checkpoint* norm);

nlohmann::json library_to_json(const EndmemberLibrary& lib);
LibraryPtr library_from_json(const nlohmann::json& j);

}  // namespace luxmix
