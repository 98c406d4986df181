#include <doctest.h>

#include "luxmix/config.hpp"
#include "luxmix/errors.hpp"

using namespace luxmix;

TEST_CASE("run config: defaults finalize into a consistent session") {
  RunConfig cfg = load_run_config("", 42);
  CHECK(cfg.grid->size() == 100);
  CHECK(cfg.sim.concentration_levels.size() == 5);
  CHECK(cfg.sim.optics_presets.size() == 9);
  CHECK(cfg.acu_net.m == 100);
  CHECK(cfg.acu_net.K == 5);
  CHECK(cfg.acu_sa.hu.in_channels == 1);
  CHECK(cfg.train.split_fraction == 0.85);
  CHECK(cfg.stage1_noise_sigma == cfg.sim.noise.read_sigma);
}

TEST_CASE("run config: unknown keys are rejected at any depth") {
  CHECK_THROWS_AS(parse_run_config({{"sedd", 42}}, 42), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"sim", {{"g_minn", 0.5}}}}, 42), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"train", {{"plateau", {{"patince", 5}}}}}}, 42),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"sim", {{"noise", {{"sigma", 1.0}}}}}}, 42), ConfigError);
}

TEST_CASE("run config: overrides land in the resolved document") {
  nlohmann::json j = {{"sim", {{"samples_per_cell", 7}, {"g_max", 3.5}}},
                      {"train", {{"epochs", 12}, {"lr", 5e-4}}},
                      {"stage1", {{"n_augment", 99}}}};
  RunConfig cfg = parse_run_config(j, 17);
  CHECK(cfg.seed == 17);
  CHECK(cfg.sim.samples_per_cell == 7);
  CHECK(cfg.sim.g_max == 3.5);
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.train.opt.lr == 5e-4);
  CHECK(cfg.stage1_n_augment == 99);

  nlohmann::json echo = resolved_json(cfg);
  CHECK(echo["sim"]["samples_per_cell"] == 7);
  CHECK(echo["train"]["lr"] == 5e-4);
  CHECK(echo["seed"] == 17);
  // the echo parses back to the identical resolved document
  RunConfig round = parse_run_config(echo, 0);
  CHECK(resolved_json(round) == echo);
}

TEST_CASE("run config: explicit seed key wins over the flag") {
  RunConfig cfg = parse_run_config({{"seed", 1234}}, 42);
  CHECK(cfg.seed == 1234);
}
