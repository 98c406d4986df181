#include "luxmix/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "luxmix/errors.hpp"
#include "luxmix/rng.hpp"

namespace luxmix {

namespace {

void check_keys(const nlohmann::json& j, const std::string& ctx,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + ctx + "." + key + "'");
}

OpticsConfig parse_optics(const nlohmann::json& j, const std::string& ctx) {
  check_keys(j, ctx,
             {"mu_a_405", "mu_s_635", "absorption_exponent", "scattering_exponent", "path_cm",
              "excitation_path_cm"});
  OpticsConfig o;
  o.mu_a_405 = j.value("mu_a_405", o.mu_a_405);
  o.mu_s_635 = j.value("mu_s_635", o.mu_s_635);
  o.absorption_exponent = j.value("absorption_exponent", o.absorption_exponent);
  o.scattering_exponent = j.value("scattering_exponent", o.scattering_exponent);
  o.path_cm = j.value("path_cm", o.path_cm);
  o.excitation_path_cm = j.value("excitation_path_cm", o.excitation_path_cm);
  return o;
}

nlohmann::json optics_json(const OpticsConfig& o) {
  return {{"mu_a_405", o.mu_a_405},
          {"mu_s_635", o.mu_s_635},
          {"absorption_exponent", o.absorption_exponent},
          {"scattering_exponent", o.scattering_exponent},
          {"path_cm", o.path_cm},
          {"excitation_path_cm", o.excitation_path_cm}};
}

}  // namespace

void RunConfig::finalize() {
  if (!(grid_step_nm > 0.0) || !(grid_stop_nm > grid_start_nm))
    throw ConfigError("config: invalid grid range");
  std::vector<double> w;
  for (double l = grid_start_nm; l <= grid_stop_nm + 1e-9; l += grid_step_nm) w.push_back(l);
  grid = std::make_shared<const WavelengthGrid>(std::move(w));

  if (sim.concentration_levels.empty() || sim.optics_presets.empty()) {
    SimConfig defaults = default_phantom_config(grid, 0);
    if (sim.concentration_levels.empty())
      sim.concentration_levels = defaults.concentration_levels;
    if (sim.optics_presets.empty()) sim.optics_presets = defaults.optics_presets;
  }
  sim.library = default_library_ptr(grid);
  sim.seed = Rng::mix(seed, 0x51);
  sim.validate();

  acu_net.m = grid->size();
  acu_net.K = sim.library->K();
  acu_net.in_channels = 2;
  acu_net.seed = Rng::mix(seed, 0xA1);
  acu_net.validate();

  acu_sa.hu = acu_net;
  acu_sa.hu.in_channels = 1;
  acu_sa.hu.seed = Rng::mix(seed, 0xA2);
  acu_sa.norm_seed = Rng::mix(seed, 0xA3);
  acu_sa.validate();

  train.seed = seed;
  train.validate();

  if (stage1_noise_sigma < 0.0) stage1_noise_sigma = sim.noise.read_sigma;
}

RunConfig parse_run_config(const nlohmann::json& j, std::uint64_t seed) {
  check_keys(j, "$",
             {"seed", "grid", "sim", "dual_band", "train", "acu_net", "acu_sa", "stage1",
              "repro"});
  RunConfig cfg;
  cfg.seed = j.value("seed", seed);

  if (j.contains("grid")) {
    const auto& g = j["grid"];
    check_keys(g, "grid", {"start_nm", "stop_nm", "step_nm"});
    cfg.grid_start_nm = g.value("start_nm", cfg.grid_start_nm);
    cfg.grid_stop_nm = g.value("stop_nm", cfg.grid_stop_nm);
    cfg.grid_step_nm = g.value("step_nm", cfg.grid_step_nm);
  }
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    check_keys(s, "sim",
               {"concentration_levels", "samples_per_cell", "g_min", "g_max", "noise",
                "saturation", "optics_jitter", "exponent_jitter", "optics_presets",
                "domain"});
    cfg.sim.concentration_levels =
        s.value("concentration_levels", cfg.sim.concentration_levels);
    cfg.sim.samples_per_cell = s.value("samples_per_cell", cfg.sim.samples_per_cell);
    cfg.sim.g_min = s.value("g_min", cfg.sim.g_min);
    cfg.sim.g_max = s.value("g_max", cfg.sim.g_max);
    if (s.contains("noise")) {
      check_keys(s["noise"], "sim.noise", {"read_sigma", "shot_coeff"});
      cfg.sim.noise.read_sigma = s["noise"].value("read_sigma", cfg.sim.noise.read_sigma);
      cfg.sim.noise.shot_coeff = s["noise"].value("shot_coeff", cfg.sim.noise.shot_coeff);
    }
    if (s.contains("saturation")) {
      check_keys(s["saturation"], "sim.saturation", {"probability", "cap"});
      cfg.sim.saturation.probability =
          s["saturation"].value("probability", cfg.sim.saturation.probability);
      cfg.sim.saturation.cap = s["saturation"].value("cap", cfg.sim.saturation.cap);
    }
    cfg.sim.optics_jitter = s.value("optics_jitter", cfg.sim.optics_jitter);
    cfg.sim.exponent_jitter = s.value("exponent_jitter", cfg.sim.exponent_jitter);
    if (s.contains("domain")) cfg.sim.domain = domain_from_string(s["domain"].get<std::string>());
    if (s.contains("optics_presets")) {
      cfg.sim.optics_presets.clear();
      int i = 0;
      for (const auto& p : s["optics_presets"])
        cfg.sim.optics_presets.push_back(
            parse_optics(p, "sim.optics_presets[" + std::to_string(i++) + "]"));
    }
  }
  if (j.contains("dual_band")) {
    const auto& d = j["dual_band"];
    check_keys(d, "dual_band", {"band1", "band2", "alpha", "beta"});
    if (d.contains("band1")) {
      auto b = d["band1"].get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("config: dual_band.band1 must be [lo, hi]");
      cfg.dual_band.band1_lo = b[0];
      cfg.dual_band.band1_hi = b[1];
    }
    if (d.contains("band2")) {
      auto b = d["band2"].get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("config: dual_band.band2 must be [lo, hi]");
      cfg.dual_band.band2_lo = b[0];
      cfg.dual_band.band2_hi = b[1];
    }
    cfg.dual_band.alpha = d.value("alpha", cfg.dual_band.alpha);
    cfg.dual_band.beta = d.value("beta", cfg.dual_band.beta);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train",
               {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "weight_decay",
                "split_fraction", "plateau", "grad_chunks"});
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.opt.lr = t.value("lr", cfg.train.opt.lr);
    cfg.train.opt.beta1 = t.value("beta1", cfg.train.opt.beta1);
    cfg.train.opt.beta2 = t.value("beta2", cfg.train.opt.beta2);
    cfg.train.opt.eps = t.value("eps", cfg.train.opt.eps);
    cfg.train.opt.weight_decay = t.value("weight_decay", cfg.train.opt.weight_decay);
    cfg.train.split_fraction = t.value("split_fraction", cfg.train.split_fraction);
    cfg.train.grad_chunks = t.value("grad_chunks", cfg.train.grad_chunks);
    if (t.contains("plateau")) {
      const auto& p = t["plateau"];
      check_keys(p, "train.plateau", {"factor", "patience", "min_lr", "threshold"});
      cfg.train.sched.factor = p.value("factor", cfg.train.sched.factor);
      cfg.train.sched.patience = p.value("patience", cfg.train.sched.patience);
      cfg.train.sched.min_lr = p.value("min_lr", cfg.train.sched.min_lr);
      cfg.train.sched.threshold = p.value("threshold", cfg.train.sched.threshold);
    }
  }
  if (j.contains("acu_net")) {
    const auto& a = j["acu_net"];
    // m, K, in_channels and seed are derived from the grid/library/seed during
    // finalize(); they are accepted so a resolved config parses back cleanly.
    check_keys(a, "acu_net",
               {"block_channels", "block_convs", "block_kernels", "fc", "recon_normalized",
                "m", "K", "in_channels", "seed"});
    cfg.acu_net.block_channels = a.value("block_channels", cfg.acu_net.block_channels);
    cfg.acu_net.block_convs = a.value("block_convs", cfg.acu_net.block_convs);
    cfg.acu_net.block_kernels = a.value("block_kernels", cfg.acu_net.block_kernels);
    cfg.acu_net.fc = a.value("fc", cfg.acu_net.fc);
    cfg.acu_net.recon_normalized = a.value("recon_normalized", cfg.acu_net.recon_normalized);
  }
  if (j.contains("acu_sa")) {
    const auto& a = j["acu_sa"];
    check_keys(a, "acu_sa", {"norm_channels", "norm_kernels", "hu", "norm_seed"});
    cfg.acu_sa.norm_channels = a.value("norm_channels", cfg.acu_sa.norm_channels);
    cfg.acu_sa.norm_kernels = a.value("norm_kernels", cfg.acu_sa.norm_kernels);
  }
  if (j.contains("stage1")) {
    const auto& s = j["stage1"];
    check_keys(s, "stage1", {"n_augment", "noise_sigma"});
    cfg.stage1_n_augment = s.value("n_augment", cfg.stage1_n_augment);
    cfg.stage1_noise_sigma = s.value("noise_sigma", cfg.stage1_noise_sigma);
  }
  if (j.contains("repro")) {
    const auto& r = j["repro"];
    check_keys(r, "repro", {"acunet_epochs", "stage1_epochs", "stage2_epochs"});
    cfg.repro_acunet_epochs = r.value("acunet_epochs", cfg.repro_acunet_epochs);
    cfg.repro_stage1_epochs = r.value("stage1_epochs", cfg.repro_stage1_epochs);
    cfg.repro_stage2_epochs = r.value("stage2_epochs", cfg.repro_stage2_epochs);
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const std::string& config_path, std::uint64_t seed) {
  if (config_path.empty()) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.finalize();
    return cfg;
  }
  std::ifstream in(config_path);
  if (!in) throw FormatError("cannot open config: " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad JSON in " + config_path + ": " + e.what());
  }
  try {
    return parse_run_config(j, seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + config_path + ": " + e.what());
  }
}

nlohmann::json resolved_json(const RunConfig& cfg) {
  nlohmann::json presets = nlohmann::json::array();
  for (const auto& o : cfg.sim.optics_presets) presets.push_back(optics_json(o));
  return {
      {"seed", cfg.seed},
      {"grid",
       {{"start_nm", cfg.grid_start_nm},
        {"stop_nm", cfg.grid_stop_nm},
        {"step_nm", cfg.grid_step_nm}}},
      {"sim",
       {{"concentration_levels", cfg.sim.concentration_levels},
        {"samples_per_cell", cfg.sim.samples_per_cell},
        {"g_min", cfg.sim.g_min},
        {"g_max", cfg.sim.g_max},
        {"noise",
         {{"read_sigma", cfg.sim.noise.read_sigma}, {"shot_coeff", cfg.sim.noise.shot_coeff}}},
        {"saturation",
         {{"probability", cfg.sim.saturation.probability}, {"cap", cfg.sim.saturation.cap}}},
        {"optics_jitter", cfg.sim.optics_jitter},
        {"exponent_jitter", cfg.sim.exponent_jitter},
        {"domain", to_string(cfg.sim.domain)},
        {"optics_presets", presets}}},
      {"dual_band",
       {{"band1", {cfg.dual_band.band1_lo, cfg.dual_band.band1_hi}},
        {"band2", {cfg.dual_band.band2_lo, cfg.dual_band.band2_hi}},
        {"alpha", cfg.dual_band.alpha},
        {"beta", cfg.dual_band.beta}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"lr", cfg.train.opt.lr},
        {"beta1", cfg.train.opt.beta1},
        {"beta2", cfg.train.opt.beta2},
        {"eps", cfg.train.opt.eps},
        {"weight_decay", cfg.train.opt.weight_decay},
        {"split_fraction", cfg.train.split_fraction},
        {"grad_chunks", cfg.train.grad_chunks},
        {"plateau",
         {{"factor", cfg.train.sched.factor},
          {"patience", cfg.train.sched.patience},
          {"min_lr", cfg.train.sched.min_lr},
          {"threshold", cfg.train.sched.threshold}}}}},
      {"acu_net", cfg.acu_net.to_json()},
      {"acu_sa", cfg.acu_sa.to_json()},
      {"stage1",
       {{"n_augment", cfg.stage1_n_augment}, {"noise_sigma", cfg.stage1_noise_sigma}}},
      {"repro",
       {{"acunet_epochs", cfg.repro_acunet_epochs},
        {"stage1_epochs", cfg.repro_stage1_epochs},
        {"stage2_epochs", cfg.repro_stage2_epochs}}}};
}

RunConfig small_scale(RunConfig cfg) {
  cfg.sim.samples_per_cell = 6;
  cfg.stage1_n_augment = 150;
  cfg.repro_acunet_epochs = 2;
  cfg.repro_stage1_epochs = 2;
  cfg.repro_stage2_epochs = 2;
  cfg.train.epochs = 2;
  cfg.finalize();
  return cfg;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write: " + path);
  out << content;
  if (!out) throw FormatError("failed writing: " + path);
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw FormatError("cannot create directory " + path + ": " + ec.message());
}

}  // namespace luxmix
