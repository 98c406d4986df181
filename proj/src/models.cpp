#include "luxmix/models.hpp"

#include <cmath>

#include "luxmix/errors.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/rng.hpp"

namespace luxmix {

using nn::Graph;
using nn::ParamStore;
using nn::Shape;
using nn::Tensor;

// ---- configs ----------------------------------------------------------------

void AcuNetConfig::validate() const {
  if (m < 16) throw ConfigError("AcuNetConfig: m must be >= 16 for four pool-by-2 stages");
  if (K < 1) throw ConfigError("AcuNetConfig: K must be >= 1");
  if (in_channels < 1) throw ConfigError("AcuNetConfig: in_channels must be >= 1");
  const std::size_t nb = block_channels.size();
  if (nb != 4) throw ConfigError("AcuNetConfig: exactly four residual blocks expected");
  if (block_convs.size() != nb || block_kernels.size() != nb)
    throw ConfigError("AcuNetConfig: block plan arrays must have equal length");
  for (std::size_t i = 0; i < nb; ++i) {
    if (block_channels[i] < 1 || block_convs[i] < 2 || block_convs[i] > 3)
      throw ConfigError("AcuNetConfig: blocks hold 2-3 same-convolutions");
    if (block_kernels[i] != 3 && block_kernels[i] != 5)
      throw ConfigError("AcuNetConfig: kernel sizes are 5 (early) or 3 (late)");
  }
  if (fc.size() != 2) throw ConfigError("AcuNetConfig: two hidden dense layers expected");
}

int AcuNetConfig::flat_features() const {
  int L = m;
  for (std::size_t i = 0; i < block_channels.size(); ++i) L /= 2;
  return block_channels.back() * L;
}

nlohmann::json AcuNetConfig::to_json() const {
  return {{"m", m},
          {"K", K},
          {"in_channels", in_channels},
          {"block_channels", block_channels},
          {"block_convs", block_convs},
          {"block_kernels", block_kernels},
          {"fc", fc},
          {"seed", seed},
          {"recon_normalized", recon_normalized}};
}

AcuNetConfig AcuNetConfig::from_json(const nlohmann::json& j) {
  AcuNetConfig cfg;
  cfg.m = j.at("m").get<int>();
  cfg.K = j.at("K").get<int>();
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.block_channels = j.at("block_channels").get<std::vector<int>>();
  cfg.block_convs = j.at("block_convs").get<std::vector<int>>();
  cfg.block_kernels = j.at("block_kernels").get<std::vector<int>>();
  cfg.fc = j.at("fc").get<std::vector<int>>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.recon_normalized = j.at("recon_normalized").get<bool>();
  cfg.validate();
  return cfg;
}

void AcuSaConfig::validate() const {
  hu.validate();
  if (norm_channels.size() != 4 || norm_kernels.size() != 4)
    throw ConfigError("AcuSaConfig: the normalization CNN has four conv layers");
  if (norm_channels.back() != 1)
    throw ConfigError("AcuSaConfig: the normalization CNN must end in one channel");
  for (int k : norm_kernels)
    if (k < 1 || k % 2 == 0) throw ConfigError("AcuSaConfig: norm kernels must be odd");
}

nlohmann::json AcuSaConfig::to_json() const {
  return {{"hu", hu.to_json()},
          {"norm_channels", norm_channels},
          {"norm_kernels", norm_kernels},
          {"norm_seed", norm_seed}};
}

AcuSaConfig AcuSaConfig::from_json(const nlohmann::json& j) {
  AcuSaConfig cfg;
  cfg.hu = AcuNetConfig::from_json(j.at("hu"));
  cfg.norm_channels = j.at("norm_channels").get<std::vector<int>>();
  cfg.norm_kernels = j.at("norm_kernels").get<std::vector<int>>();
  cfg.norm_seed = j.at("norm_seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

// ---- initialization ----------------------------------------------------------

namespace {

// He-uniform over fan-in, filled in storage order from the model seed.
Eigen::MatrixXd he_uniform(Eigen::Index rows, Eigen::Index cols, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  return w;
}

// Hidden layers: He-uniform weights, zero biases. Output layers feeding the
// final ReLU start with damped weights and a small positive bias; at full
// scale a narrow head (the K abundance units, the norm CNN's single channel)
// otherwise has a real chance of being born dead, with zero gradient
// everywhere and no way to recover.
constexpr double kOutputBiasInit = 0.1;
constexpr double kOutputWeightDamping = 0.1;

void add_conv(ParamStore& store, const std::string& name, int cin, int cout, int k, Rng& rng,
              bool output_layer = false) {
  Eigen::MatrixXd w = he_uniform(static_cast<Eigen::Index>(cin) * k, cout, cin * k, rng);
  if (output_layer) w *= kOutputWeightDamping;
  store.add(name + ".w", std::move(w), {cout, cin, k});
  store.add(name + ".b",
            Eigen::MatrixXd::Constant(1, cout, output_layer ? kOutputBiasInit : 0.0), {cout});
}

void add_dense(ParamStore& store, const std::string& name, int fin, int fout, Rng& rng,
               bool output_layer = false) {
  Eigen::MatrixXd w = he_uniform(fout, fin, fin, rng);
  if (output_layer) w *= kOutputWeightDamping;
  store.add(name + ".w", std::move(w), {fout, fin});
  store.add(name + ".b",
            Eigen::MatrixXd::Constant(1, fout, output_layer ? kOutputBiasInit : 0.0), {fout});
}

void init_encoder_params(ParamStore& store, const AcuNetConfig& cfg, Rng& rng) {
  const int nb = static_cast<int>(cfg.block_channels.size());
  add_conv(store, "stem", cfg.in_channels, cfg.block_channels[0], cfg.block_kernels[0], rng);
  for (int i = 0; i < nb; ++i) {
    const int ch = cfg.block_channels[i];
    for (int j = 0; j < cfg.block_convs[i]; ++j)
      add_conv(store, "block" + std::to_string(i) + ".conv" + std::to_string(j), ch, ch,
               cfg.block_kernels[i], rng);
    if (i + 1 < nb)
      add_conv(store, "trans" + std::to_string(i), ch, cfg.block_channels[i + 1],
               cfg.block_kernels[i + 1], rng);
  }
  int fin = cfg.flat_features();
  for (std::size_t j = 0; j < cfg.fc.size(); ++j) {
    add_dense(store, "fc" + std::to_string(j), fin, cfg.fc[j], rng);
    fin = cfg.fc[j];
  }
  add_dense(store, "fc" + std::to_string(cfg.fc.size()), fin, cfg.K, rng, true);
}

Tensor encoder_param(Graph& g, ParamStore& store, const std::string& name, bool trainable) {
  return g.param(store, name, trainable);
}

}  // namespace

AcuNetModel build_acunet(const AcuNetConfig& cfg) {
  cfg.validate();
  AcuNetModel model;
  model.cfg = cfg;
  Rng rng(cfg.seed);
  init_encoder_params(model.params, cfg, rng);
  model.params.add("loss.log_sigma_c", Eigen::MatrixXd::Zero(1, 1), {}, true);
  model.params.add("loss.log_sigma_rec", Eigen::MatrixXd::Zero(1, 1), {}, true);
  return model;
}

Tensor acunet_forward(Graph& g, ParamStore& params, const AcuNetConfig& cfg, Tensor x,
                      bool trainable) {
  const Shape xs = g.shape(x);
  if (!xs.is_rank3() || xs.channels != cfg.in_channels || xs.length != cfg.m)
    throw DimensionError("acunet_forward: input must be (b, " +
                         std::to_string(cfg.in_channels) + ", " + std::to_string(cfg.m) + ")");
  const int nb = static_cast<int>(cfg.block_channels.size());
  auto P = [&](const std::string& n) { return encoder_param(g, params, n, trainable); };

  Tensor h = relu(conv1d_same(x, P("stem.w"), P("stem.b"), cfg.block_kernels[0]));
  for (int i = 0; i < nb; ++i) {
    const int k = cfg.block_kernels[i];
    Tensor skip = h;
    for (int j = 0; j < cfg.block_convs[i]; ++j) {
      const std::string base = "block" + std::to_string(i) + ".conv" + std::to_string(j);
      h = conv1d_same(h, P(base + ".w"), P(base + ".b"), k);
      if (j + 1 < cfg.block_convs[i]) h = relu(h);
    }
    h = relu(add(h, skip));
    h = maxpool1d(h, 2);
    if (i + 1 < nb) {
      const std::string base = "trans" + std::to_string(i);
      h = relu(conv1d_same(h, P(base + ".w"), P(base + ".b"), cfg.block_kernels[i + 1]));
    }
  }
  Tensor flat = flatten(h);
  for (std::size_t j = 0; j <= cfg.fc.size(); ++j) {
    const std::string base = "fc" + std::to_string(j);
    flat = relu(dense(flat, P(base + ".w"), P(base + ".b")));
  }
  return flat;
}

Tensor acunet_loss(Graph& g, ParamStore& params, const AcuNetConfig& cfg, Tensor z,
                   const Eigen::MatrixXd& B, const Eigen::VectorXd& c_labels,
                   const Eigen::MatrixXd& fluo_rows) {
  const Shape zs = g.shape(z);
  if (zs.is_rank3() || zs.length != static_cast<int>(B.cols()))
    throw DimensionError("acunet_loss: z must be (b, K)");
  if (c_labels.size() != zs.batch) throw UsageError("acunet_loss: missing c_ppix labels");

  Tensor conc = index_sq_err(z, kPpix634, c_labels);
  Tensor zr = cfg.recon_normalized ? l2_normalize_rows(z) : z;
  Tensor recon = fixed_linear(zr, B);
  Tensor target = g.input(Shape::rank2(static_cast<int>(fluo_rows.rows()),
                                       static_cast<int>(fluo_rows.cols())),
                          fluo_rows);
  // mean over batch of the squared L2 norm = m * elementwise MSE
  Tensor rec = scale(mse_loss(recon, target), static_cast<double>(B.rows()));
  return nn::homoscedastic({conc, rec},
                       {g.param(params, "loss.log_sigma_c"),
                        g.param(params, "loss.log_sigma_rec")});
}

AcuSaModel build_acusa(const AcuSaConfig& cfg_in, LibraryPtr library) {
  AcuSaConfig cfg = cfg_in;
  cfg.hu.in_channels = 1;
  cfg.validate();
  if (!library) throw ConfigError("build_acusa: missing endmember library");
  if (library->K() != cfg.hu.K || library->m() != cfg.hu.m)
    throw DimensionError("build_acusa: library dimensions do not match the HU config");

  AcuSaModel model;
  model.cfg = cfg;
  model.library = std::move(library);
  Rng hu_rng(cfg.hu.seed);
  init_encoder_params(model.hu_params, cfg.hu, hu_rng);
  model.hu_params.add("loss.log_sigma_eg", Eigen::MatrixXd::Zero(1, 1), {}, true);
  model.hu_params.add("loss.log_sigma_rec", Eigen::MatrixXd::Zero(1, 1), {}, true);

  Rng norm_rng(cfg.norm_seed);
  int cin = 2;
  for (std::size_t j = 0; j < cfg.norm_channels.size(); ++j) {
    const bool last = j + 1 == cfg.norm_channels.size();
    add_conv(model.norm_params, "norm.conv" + std::to_string(j), cin, cfg.norm_channels[j],
             cfg.norm_kernels[j], norm_rng, last);
    cin = cfg.norm_channels[j];
  }
  return model;
}

Tensor norm_forward(Graph& g, ParamStore& params, const AcuSaConfig& cfg, Tensor x,
                    bool trainable) {
  const Shape xs = g.shape(x);
  if (!xs.is_rank3() || xs.channels != 2)
    throw DimensionError("norm_forward: input must be (b, 2, m)");
  Tensor h = x;
  for (std::size_t j = 0; j < cfg.norm_channels.size(); ++j) {
    const std::string base = "norm.conv" + std::to_string(j);
    h = relu(conv1d_same(h, g.param(params, base + ".w", trainable),
                         g.param(params, base + ".b", trainable), cfg.norm_kernels[j]));
  }
  return h;
}

Tensor acusa_stage1_loss(Graph& g, AcuSaModel& model, const Eigen::MatrixXd& batch_rows) {
  const int b = static_cast<int>(batch_rows.rows());
  const int m = model.cfg.hu.m;
  const int K = model.cfg.hu.K;
  if (static_cast<int>(batch_rows.cols()) != m)
    throw DimensionError("acusa_stage1_loss: batch rows must have length m");
  const Eigen::MatrixXd& B = model.library->B();

  Tensor x = g.input(Shape::rank3(b, 1, m), pack_one_channel(batch_rows));
  Tensor z = acunet_forward(g, model.hu_params, model.cfg.hu, x);
  Tensor recon = fixed_linear(z, B);
  Tensor target = g.input(Shape::rank2(b, m), batch_rows);
  Tensor rec = scale(mse_loss(recon, target), static_cast<double>(m));

  // twin encoder: pure endmember columns through the shared parameter set
  Eigen::MatrixXd pure_rows = B.transpose();  // row k = endmember k
  Tensor xp = g.input(Shape::rank3(K, 1, m), pack_one_channel(pure_rows));
  Tensor zp = acunet_forward(g, model.hu_params, model.cfg.hu, xp);
  std::vector<int> targets(K);
  for (int k = 0; k < K; ++k) targets[k] = k;
  Tensor eg = softmax_ce(zp, targets);

  return nn::homoscedastic({eg, rec},
                       {g.param(model.hu_params, "loss.log_sigma_eg"),
                        g.param(model.hu_params, "loss.log_sigma_rec")});
}

Tensor acusa_stage2_loss(Graph& g, AcuSaModel& model, const Eigen::MatrixXd& fluo_rows,
                         const Eigen::MatrixXd& ref_rows, const Eigen::VectorXd& c_labels) {
  const int b = static_cast<int>(fluo_rows.rows());
  const int m = model.cfg.hu.m;
  if (c_labels.size() != b) throw UsageError("acusa_stage2_loss: missing c_ppix labels");
  Tensor x = g.input(Shape::rank3(b, 2, m), pack_two_channel(fluo_rows, ref_rows));
  Tensor corrected = norm_forward(g, model.norm_params, model.cfg, x, true);
  // HU weights are frozen here; gradients flow only into the norm model
  Tensor z = acunet_forward(g, model.hu_params, model.cfg.hu, corrected, false);
  return index_sq_err(z, kPpix634, c_labels);
}

// ---- packing and prediction --------------------------------------------------

Eigen::MatrixXd pack_two_channel(const Eigen::MatrixXd& fluo_rows,
                                 const Eigen::MatrixXd& ref_rows) {
  if (fluo_rows.rows() != ref_rows.rows() || fluo_rows.cols() != ref_rows.cols())
    throw DimensionError("pack_two_channel: fluo/ref dimensions differ");
  const Eigen::Index n = fluo_rows.rows(), m = fluo_rows.cols();
  Eigen::MatrixXd out(n * m, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.col(0).segment(i * m, m) = fluo_rows.row(i).transpose();
    out.col(1).segment(i * m, m) = ref_rows.row(i).transpose();
  }
  return out;
}

Eigen::MatrixXd pack_one_channel(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows(), m = rows.cols();
  Eigen::MatrixXd out(n * m, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    out.col(0).segment(i * m, m) = rows.row(i).transpose();
  return out;
}

Eigen::MatrixXd rows_from_samples_fluo(const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw UsageError("rows_from_samples_fluo: empty sample set");
  Eigen::MatrixXd rows(samples.size(), samples.front().fluo.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = samples[i].fluo.values.transpose();
  return rows;
}

Eigen::MatrixXd rows_from_samples_ref(const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw UsageError("rows_from_samples_ref: empty sample set");
  Eigen::MatrixXd rows(samples.size(), samples.front().ref.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = samples[i].ref.values.transpose();
  return rows;
}

Eigen::MatrixXd predict_acunet_batch(const AcuNetModel& model, const Eigen::MatrixXd& fluo_rows,
                                     const Eigen::MatrixXd& ref_rows) {
  if (fluo_rows.cols() != model.cfg.m)
    throw DimensionError("predict: spectra are not on the model grid length");
  Graph g;
  auto& params = const_cast<ParamStore&>(model.params);
  Tensor x = g.input(Shape::rank3(static_cast<int>(fluo_rows.rows()), 2, model.cfg.m),
                     pack_two_channel(fluo_rows, ref_rows));
  Tensor z = acunet_forward(g, params, model.cfg, x, false);
  return g.value(z);
}

AbundanceVector predict_acunet(const AcuNetModel& model, const LabeledSample& sample) {
  Eigen::MatrixXd z = predict_acunet_batch(model, sample.fluo.values.transpose(),
                                           sample.ref.values.transpose());
  return AbundanceVector{z.row(0).transpose()};
}

AcuSaBatchPrediction predict_acusa_batch(const AcuSaModel& model,
                                         const Eigen::MatrixXd& fluo_rows,
                                         const Eigen::MatrixXd& ref_rows) {
  const int m = model.cfg.hu.m;
  if (fluo_rows.cols() != m)
    throw DimensionError("predict: spectra are not on the model grid length");
  const int n = static_cast<int>(fluo_rows.rows());
  Graph g;
  auto& norm_params = const_cast<ParamStore&>(model.norm_params);
  auto& hu_params = const_cast<ParamStore&>(model.hu_params);
  Tensor x = g.input(Shape::rank3(n, 2, m), pack_two_channel(fluo_rows, ref_rows));
  Tensor corrected =
      norm_forward(g, norm_params, model.cfg, x, false);
  Tensor z = acunet_forward(g, hu_params, model.cfg.hu, corrected, false);

  AcuSaBatchPrediction out;
  out.z = g.value(z);
  out.corrected_rows.resize(n, m);
  const Eigen::MatrixXd& cv = g.value(corrected);  // (n*m, 1)
  for (int i = 0; i < n; ++i)
    out.corrected_rows.row(i) = cv.col(0).segment(static_cast<Eigen::Index>(i) * m, m);
  return out;
}

AcuSaPrediction predict_acusa(const AcuSaModel& model, const LabeledSample& sample) {
  AcuSaBatchPrediction batch = predict_acusa_batch(model, sample.fluo.values.transpose(),
                                                   sample.ref.values.transpose());
  AcuSaPrediction out;
  out.corrected = Spectrum{sample.fluo.grid, batch.corrected_rows.row(0).transpose(),
                           SpectrumRole::corrected};
  out.z = AbundanceVector{batch.z.row(0).transpose()};
  return out;
}

Eigen::MatrixXd predict_hu_batch(const AcuSaModel& model, const Eigen::MatrixXd& corrected_rows) {
  const int m = model.cfg.hu.m;
  if (corrected_rows.cols() != m)
    throw DimensionError("predict_hu_batch: spectra are not on the model grid length");
  Graph g;
  auto& hu_params = const_cast<ParamStore&>(model.hu_params);
  Tensor x = g.input(Shape::rank3(static_cast<int>(corrected_rows.rows()), 1, m),
                     pack_one_channel(corrected_rows));
  Tensor z = acunet_forward(g, hu_params, model.cfg.hu, x, false);
  return g.value(z);
}

Eigen::MatrixXd endmember_guidance_response(const AcuSaModel& model) {
  Eigen::MatrixXd z = predict_hu_batch(model, model.library->B().transpose());
  Eigen::MatrixXd probs(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::ArrayXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
    probs.row(i) = (e / e.sum()).matrix();
  }
  return probs;
}

// ---- checkpoints --------------------------------------------------------------

nlohmann::json library_to_json(const EndmemberLibrary& lib) {
  std::vector<std::vector<double>> cols(lib.K());
  for (int k = 0; k < lib.K(); ++k) {
    cols[k].resize(lib.m());
    for (int i = 0; i < lib.m(); ++i) cols[k][i] = lib.B()(i, k);
  }
  return {{"wavelengths_nm", lib.grid()->wavelengths_nm()},
          {"names", lib.names()},
          {"columns", cols}};
}

LibraryPtr library_from_json(const nlohmann::json& j) {
  auto grid = std::make_shared<const WavelengthGrid>(
      j.at("wavelengths_nm").get<std::vector<double>>());
  auto names = j.at("names").get<std::vector<std::string>>();
  auto cols = j.at("columns").get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd B(grid->size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (static_cast<int>(cols[k].size()) != grid->size())
      throw FormatError("library column length does not match the grid");
    for (int i = 0; i < grid->size(); ++i) B(i, static_cast<Eigen::Index>(k)) = cols[k][i];
  }
  return std::make_shared<const EndmemberLibrary>(grid, std::move(names), std::move(B));
}

namespace {

ParamStore copy_values(const ParamStore& src) {
  ParamStore dst;
  for (const auto& [name, e] : src) dst.add(name, e.value, e.logical_shape, e.no_decay);
  return dst;
}

}  // namespace

nn::Checkpoint acunet_checkpoint(const AcuNetModel& model, const ParamStore& params,
                                 const nlohmann::json& provenance, const std::string& dtype) {
  nn::Checkpoint ckpt;
  ckpt.arch = "acu-net";
  ckpt.config = model.cfg.to_json();
  ckpt.provenance = provenance;
  ckpt.dtype = dtype;
  ckpt.params = copy_values(params);
  return ckpt;
}

AcuNetModel acunet_from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.arch != "acu-net")
    throw FormatError("expected an acu-net checkpoint, found '" + ckpt.arch + "'");
  AcuNetModel model = build_acunet(AcuNetConfig::from_json(ckpt.config));
  for (auto& [name, e] : model.params) e.value = ckpt.params.at(name).value;
  return model;
}

nn::Checkpoint acusa_hu_checkpoint(const AcuSaModel& model, const ParamStore& params,
                                   const nlohmann::json& provenance, const std::string& dtype) {
  nn::Checkpoint ckpt;
  ckpt.arch = "acu-sa-hu";
  ckpt.config = model.cfg.to_json();
  ckpt.config["library"] = library_to_json(*model.library);
  ckpt.provenance = provenance;
  ckpt.dtype = dtype;
  ckpt.params = copy_values(params);
  return ckpt;
}

nn::Checkpoint acusa_norm_checkpoint(const AcuSaModel& model, const ParamStore& params,
                                     const nlohmann::json& provenance, const std::string& dtype) {
  nn::Checkpoint ckpt;
  ckpt.arch = "acu-sa-norm";
  ckpt.config = model.cfg.to_json();
  ckpt.provenance = provenance;
  ckpt.dtype = dtype;
  ckpt.params = copy_values(params);
  return ckpt;
}

AcuSaModel acusa_from_checkpoints(const nn::Checkpoint& hu, const nn::Checkpoint* norm) {
  if (hu.arch != "acu-sa-hu")
    throw FormatError("expected an acu-sa-hu checkpoint, found '" + hu.arch + "'");
  AcuSaConfig cfg = AcuSaConfig::from_json(hu.config);
  LibraryPtr lib = library_from_json(hu.config.at("library"));
  AcuSaModel model = build_acusa(cfg, std::move(lib));
  for (auto& [name, e] : model.hu_params) e.value = hu.params.at(name).value;
  if (norm) {
    if (norm->arch != "acu-sa-norm")
      throw FormatError("expected an acu-sa-norm checkpoint, found '" + norm->arch + "'");
    for (auto& [name, e] : model.norm_params) e.value = norm->params.at(name).value;
  }
  return model;
}

}  // namespace luxmix
