#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "luxmix/classical.hpp"
#include "luxmix/models.hpp"
#include "luxmix/simulate.hpp"
#include "luxmix/training.hpp"

namespace luxmix {

// Everything a run needs, resolved from defaults + optional JSON + --seed.
// Unknown JSON keys are rejected anywhere in the document; the fully resolved
// config is echoed into every output directory as config.resolved.json.
struct RunConfig {
  std::uint64_t seed = 42;

  double grid_start_nm = 450.0;
  double grid_stop_nm = 747.0;
  double grid_step_nm = 3.0;

  SimConfig sim;  // library filled in by finalize()
  DualBandParams dual_band;
  TrainConfig train;
  AcuNetConfig acu_net;
  AcuSaConfig acu_sa;

  int stage1_n_augment = 4000;
  double stage1_noise_sigma = -1.0;  // <0: follow sim.noise.read_sigma

  // per-stage epoch budgets for the end-to-end repro pipeline
  int repro_acunet_epochs = 120;
  int repro_stage1_epochs = 60;
  int repro_stage2_epochs = 90;

  GridPtr grid;  // built by finalize()

  void finalize();  // derives grid, library, per-component seeds
};

RunConfig parse_run_config(const nlohmann::json& j, std::uint64_t seed);
RunConfig load_run_config(const std::string& config_path, std::uint64_t seed);
nlohmann::json resolved_json(const RunConfig& cfg);

// Scaled-down variant exercising the identical code path (used by the
// determinism checks).
RunConfig small_scale(RunConfig cfg);

void write_text_file(const std::string& path, const std::string& content);
void ensure_directory(const std::string& path);

}  // namespace luxmix
