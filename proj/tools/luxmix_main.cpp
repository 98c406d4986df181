#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "luxmix/dataset_io.hpp"
#include "luxmix/errors.hpp"
#include "luxmix/nn/gradcheck.hpp"
#include "luxmix/repro.hpp"
#include "luxmix/rng.hpp"
#include "luxmix/version.hpp"

namespace lux = luxmix;

namespace {

struct CommonArgs {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 42;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out = true) {
  cmd->add_option("--config", args.config, "JSON run configuration");
  cmd->add_option("--seed", args.seed, "master random seed")->capture_default_str();
  auto* out = cmd->add_option("--out", args.out, "output directory");
  if (needs_out) out->required();
}

lux::RunConfig resolve(const CommonArgs& args) {
  lux::RunConfig cfg = lux::load_run_config(args.config, args.seed);
  lux::ensure_directory(args.out);
  lux::write_text_file(args.out + "/config.resolved.json",
                       lux::resolved_json(cfg).dump(2) + "\n");
  return cfg;
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path))
    throw lux::FormatError(what + " not found: " + path);
}

lux::SplitResult resolve_split(const std::vector<lux::LabeledSample>& samples,
                               const lux::RunConfig& cfg, const std::string& which) {
  lux::SplitResult split =
      lux::split_dataset(samples, cfg.train.split_fraction, cfg.train.seed);
  if (which == "train") return {split.train, split.train};
  if (which == "all") {
    std::vector<int> all(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) all[i] = static_cast<int>(i);
    return {all, all};
  }
  if (which != "test") throw lux::UsageError("--split must be train, test or all");
  return split;
}

std::unique_ptr<lux::UnmixEngine> make_engine(const std::string& engine,
                                              const std::string& params_path,
                                              const std::string& checkpoint_path,
                                              const std::string& norm_checkpoint_path,
                                              const lux::RunConfig& cfg) {
  if (engine == "baseline") {
    lux::DualBandParams p = cfg.dual_band;
    if (!params_path.empty()) {
      require_file(params_path, "baseline params");
      std::ifstream in(params_path);
      nlohmann::json j;
      try {
        in >> j;
        auto b1 = j.at("band1").get<std::vector<double>>();
        auto b2 = j.at("band2").get<std::vector<double>>();
        p.band1_lo = b1.at(0);
        p.band1_hi = b1.at(1);
        p.band2_lo = b2.at(0);
        p.band2_hi = b2.at(1);
        p.alpha = j.at("alpha").get<double>();
        p.beta = j.at("beta").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw lux::FormatError("bad baseline params " + params_path + ": " + e.what());
      }
    }
    return std::make_unique<lux::BaselineEngine>(cfg.sim.library, p);
  }
  if (engine == "acu-net") {
    require_file(checkpoint_path, "checkpoint");
    lux::AcuNetModel model =
        lux::acunet_from_checkpoint(lux::nn::load_checkpoint(checkpoint_path));
    return std::make_unique<lux::AcuNetEngine>(std::move(model), cfg.sim.library);
  }
  if (engine == "acu-sa") {
    require_file(checkpoint_path, "checkpoint");
    lux::nn::Checkpoint hu = lux::nn::load_checkpoint(checkpoint_path);
    std::unique_ptr<lux::nn::Checkpoint> norm;
    if (!norm_checkpoint_path.empty()) {
      require_file(norm_checkpoint_path, "norm checkpoint");
      norm = std::make_unique<lux::nn::Checkpoint>(
          lux::nn::load_checkpoint(norm_checkpoint_path));
    }
    return std::make_unique<lux::AcuSaEngine>(lux::acusa_from_checkpoints(hu, norm.get()));
  }
  throw lux::UsageError("unknown engine '" + engine + "' (baseline, acu-net, acu-sa)");
}

int run_gradcheck_sweep();

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"luxmix: attenuation correction and unmixing of fluorescence spectra"};
  app.set_version_flag("--version", std::string(lux::kVersion));
  app.require_subcommand(1);

  CommonArgs synth_args, baseline_args, train_args, eval_args, cube_args, repro_args;
  std::string train_model = "acu-net";
  int train_stage = 1;
  std::string train_dataset, hu_checkpoint;
  std::string eval_dataset, eval_engine = "baseline", eval_params, eval_ckpt, eval_norm_ckpt;
  std::string eval_split = "test";
  std::string cube_fluo, cube_white, cube_dark, cube_engine = "baseline", cube_params;
  std::string cube_ckpt, cube_norm_ckpt;
  int cube_region = 1;
  std::string render_input, render_out;
  std::string repro_scale = "full";

  auto* synth = app.add_subcommand("synth", "generate a synthetic phantom dataset");
  add_common(synth, synth_args);

  auto* baseline = app.add_subcommand("baseline", "calibrate and evaluate the classical method");
  add_common(baseline, baseline_args);
  baseline->add_option("--dataset", train_dataset, "dataset CSV")->required();

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_args);
  train->add_option("--model", train_model, "acu-net or acu-sa")->required();
  train->add_option("--stage", train_stage, "acu-sa stage (1 or 2)");
  train->add_option("--dataset", train_dataset, "dataset CSV")->required();
  train->add_option("--hu-checkpoint", hu_checkpoint, "stage-1 checkpoint (acu-sa stage 2)");

  auto* eval = app.add_subcommand("eval", "evaluate an engine on a labeled dataset");
  add_common(eval, eval_args);
  eval->add_option("--dataset", eval_dataset, "dataset CSV")->required();
  eval->add_option("--engine", eval_engine, "baseline, acu-net or acu-sa");
  eval->add_option("--params", eval_params, "baseline params JSON");
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  eval->add_option("--norm-checkpoint", eval_norm_ckpt, "acu-sa norm checkpoint");
  eval->add_option("--split", eval_split, "train, test or all")->capture_default_str();

  auto* unmix = app.add_subcommand("unmix-cube", "unmix a data cube into abundance maps");
  add_common(unmix, cube_args);
  unmix->add_option("--fluo", cube_fluo, "fluorescence cube")->required();
  unmix->add_option("--white", cube_white, "white-light cube")->required();
  unmix->add_option("--dark", cube_dark, "dark cube (optional)");
  unmix->add_option("--engine", cube_engine, "baseline, acu-net or acu-sa");
  unmix->add_option("--params", cube_params, "baseline params JSON");
  unmix->add_option("--checkpoint", cube_ckpt, "model checkpoint");
  unmix->add_option("--norm-checkpoint", cube_norm_ckpt, "acu-sa norm checkpoint");
  unmix->add_option("--region", cube_region, "tile size in pixels")->capture_default_str();

  auto* render = app.add_subcommand("render", "render an abundance CSV as a PGM image");
  render->add_option("--input", render_input, "abundance CSV")->required();
  render->add_option("--out", render_out, "output prefix")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference sweep over all kernels");

  auto* repro = app.add_subcommand("repro", "run the end-to-end benchmark pipeline");
  add_common(repro, repro_args);
  repro->add_option("--scale", repro_scale, "full or small")->capture_default_str();

  try {
    app.parse(argc, argv);

    if (*synth) {
      lux::RunConfig cfg = resolve(synth_args);
      lux::SimDataset ds = lux::simulate_dataset(cfg.sim);
      lux::save_dataset_csv(ds.samples, synth_args.out + "/dataset.csv");
      lux::save_endmember_csv(*cfg.sim.library, synth_args.out + "/endmembers.csv");
      std::cout << "wrote " << ds.samples.size() << " samples to " << synth_args.out
                << "/dataset.csv\n";
    } else if (*baseline) {
      lux::RunConfig cfg = resolve(baseline_args);
      require_file(train_dataset, "dataset");
      auto samples = lux::load_dataset_csv(train_dataset);
      lux::SplitResult split =
          lux::split_dataset(samples, cfg.train.split_fraction, cfg.train.seed);
      lux::DualBandParams p =
          lux::calibrate_beta(lux::gather(samples, split.train), *cfg.sim.library,
                              cfg.dual_band);
      nlohmann::json pj = {{"band1", {p.band1_lo, p.band1_hi}},
                           {"band2", {p.band2_lo, p.band2_hi}},
                           {"alpha", p.alpha},
                           {"beta", p.beta}};
      lux::write_text_file(baseline_args.out + "/baseline_params.json", pj.dump(2) + "\n");
      lux::BaselineEngine engine(cfg.sim.library, p);
      lux::EvalReport report = lux::evaluate(engine, lux::gather(samples, split.test));
      lux::save_eval_csv(report, cfg.sim.library->names(),
                         baseline_args.out + "/baseline_report.csv");
      lux::write_text_file(baseline_args.out + "/baseline_summary.txt",
                           lux::format_eval_summary({report}));
      std::cout << lux::format_eval_summary({report});
    } else if (*train) {
      lux::RunConfig cfg = resolve(train_args);
      require_file(train_dataset, "dataset");
      auto samples = lux::load_dataset_csv(train_dataset);
      const auto& out = train_args.out;
      if (train_model == "acu-net") {
        lux::AcuNetModel model = lux::build_acunet(cfg.acu_net);
        lux::TrainResult r = lux::train_acunet(model, samples, *cfg.sim.library, cfg.train);
        lux::save_history_csv(r.history, out + "/history.csv");
        nlohmann::json prov = {{"seed", cfg.seed},
                               {"epochs", cfg.train.epochs},
                               {"best_epoch", r.best_epoch},
                               {"best_test_r", r.best_test_r}};
        lux::nn::save_checkpoint(lux::acunet_checkpoint(model, r.best_params, prov, "f32"),
                                 out + "/acu_net.ckpt");
        lux::nn::save_checkpoint(lux::acunet_checkpoint(model, model.params, prov, "f32"),
                                 out + "/acu_net_final.ckpt");
        std::printf("best test R %.6f at epoch %d\n", r.best_test_r, r.best_epoch);
      } else if (train_model == "acu-sa" && train_stage == 1) {
        lux::AcuSaModel model = lux::build_acusa(cfg.acu_sa, cfg.sim.library);
        lux::AugmentedSet aug = lux::augment_linear_labeled(
            *cfg.sim.library, cfg.stage1_n_augment, lux::Rng::mix(cfg.seed, 0x57),
            cfg.stage1_noise_sigma);
        lux::Stage1Data data;
        data.rows.resize(aug.spectra.size(), cfg.sim.library->m());
        for (std::size_t i = 0; i < aug.spectra.size(); ++i)
          data.rows.row(static_cast<Eigen::Index>(i)) = aug.spectra[i].values.transpose();
        data.z_true = aug.abundances;
        lux::TrainResult r = lux::train_acusa_stage1(model, data, cfg.train);
        lux::save_history_csv(r.history, out + "/history.csv");
        nlohmann::json prov = {{"seed", cfg.seed},
                               {"epochs", cfg.train.epochs},
                               {"best_epoch", r.best_epoch},
                               {"best_test_r", r.best_test_r}};
        lux::nn::save_checkpoint(
            lux::acusa_hu_checkpoint(model, model.hu_params, prov, "f32"),
            out + "/acu_sa_hu.ckpt");
        std::printf("best test R %.6f at epoch %d\n", r.best_test_r, r.best_epoch);
      } else if (train_model == "acu-sa" && train_stage == 2) {
        if (hu_checkpoint.empty())
          throw lux::UsageError("acu-sa stage 2 requires --hu-checkpoint");
        require_file(hu_checkpoint, "hu checkpoint");
        lux::AcuSaModel model =
            lux::acusa_from_checkpoints(lux::nn::load_checkpoint(hu_checkpoint), nullptr);
        lux::TrainResult r = lux::train_acusa_stage2(model, samples, cfg.train);
        lux::save_history_csv(r.history, out + "/history.csv");
        nlohmann::json prov = {{"seed", cfg.seed},
                               {"epochs", cfg.train.epochs},
                               {"best_epoch", r.best_epoch},
                               {"best_test_r", r.best_test_r}};
        for (auto& [name, e] : model.norm_params) e.value = r.best_params.at(name).value;
        lux::nn::save_checkpoint(
            lux::acusa_norm_checkpoint(model, model.norm_params, prov, "f32"),
            out + "/acu_sa_norm.ckpt");
        std::printf("best test R %.6f at epoch %d\n", r.best_test_r, r.best_epoch);
      } else {
        throw lux::UsageError("unknown --model/--stage combination");
      }
    } else if (*eval) {
      lux::RunConfig cfg = resolve(eval_args);
      require_file(eval_dataset, "dataset");
      auto samples = lux::load_dataset_csv(eval_dataset);
      auto engine = make_engine(eval_engine, eval_params, eval_ckpt, eval_norm_ckpt, cfg);
      lux::SplitResult split = resolve_split(samples, cfg, eval_split);
      lux::EvalReport report = lux::evaluate(*engine, lux::gather(samples, split.test));
      lux::save_eval_csv(report, cfg.sim.library->names(),
                         eval_args.out + "/eval_report.csv");
      lux::write_text_file(eval_args.out + "/eval_summary.txt",
                           lux::format_eval_summary({report}));
      std::cout << lux::format_eval_summary({report});
    } else if (*unmix) {
      lux::RunConfig cfg = resolve(cube_args);
      require_file(cube_fluo, "fluorescence cube");
      require_file(cube_white, "white cube");
      lux::DataCube fluo = lux::load_cube(cube_fluo);
      lux::DataCube white = lux::load_cube(cube_white);
      if (!cube_dark.empty()) {
        require_file(cube_dark, "dark cube");
        lux::DataCube dark = lux::load_cube(cube_dark);
        fluo = lux::dark_subtract(fluo, dark);
        white = lux::dark_subtract(white, dark);
      }
      auto engine = make_engine(cube_engine, cube_params, cube_ckpt, cube_norm_ckpt, cfg);
      lux::CubeUnmixResult maps = lux::unmix_cube(fluo, white, *engine, cube_region);
      const auto& names = engine->library().names();
      for (std::size_t k = 0; k < maps.abundance.size(); ++k) {
        std::string lower = names[k];
        for (char& c : lower)
          c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        lux::render_map(maps.abundance[k], cube_args.out + "/abundance_" + lower + ".pgm",
                        cube_args.out + "/abundance_" + lower + ".csv");
      }
      lux::render_map(maps.corrected_intensity, cube_args.out + "/corrected_intensity.pgm",
                      cube_args.out + "/corrected_intensity.csv");
      lux::render_map(maps.validity.cast<double>(), cube_args.out + "/validity.pgm",
                      cube_args.out + "/validity.csv");
      std::cout << "wrote abundance maps to " << cube_args.out << "\n";
    } else if (*render) {
      Eigen::MatrixXd map = lux::load_map_csv(render_input);
      lux::render_map(map, render_out + ".pgm", render_out + ".csv");
      std::cout << "wrote " << render_out << ".pgm\n";
    } else if (*gradcheck) {
      return run_gradcheck_sweep();
    } else if (*repro) {
      lux::RunConfig cfg = lux::load_run_config(repro_args.config, repro_args.seed);
      if (repro_scale == "small")
        cfg = lux::small_scale(cfg);
      else if (repro_scale != "full")
        throw lux::UsageError("--scale must be full or small");
      lux::ReproResult result = lux::run_repro(cfg, repro_args.out);
      std::cout << result.summary;
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // CLI11 prints usage; nonzero on bad flags
  } catch (const lux::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lux::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

namespace {

// kernel-by-kernel finite-difference sweep; mirrors the acceptance criterion
int run_gradcheck_sweep() {
  using namespace luxmix::nn;
  struct Case {
    const char* name;
    double err;
  };
  std::vector<Case> cases;
  lux::Rng seeder(20240521);

  auto fill = [&](Eigen::MatrixXd& m, double scale = 1.0) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * seeder.normal();
  };

  {
    ParamStore p;
    Eigen::MatrixXd x(12, 2), w(6, 4), b(1, 4);
    fill(x);
    fill(w);
    fill(b);
    p.add("x", x, {});
    p.add("w", w, {});
    p.add("b", b, {});
    cases.push_back({"conv1d_same", gradcheck(
                                        [](Graph& g, ParamStore& ps) {
                                          Tensor xt = as_rank3(g.param(ps, "x"), 2, 2, 6);
                                          Tensor c = conv1d_same(
                                              xt, g.param(ps, "w"), g.param(ps, "b"), 3);
                                          return mse_loss(
                                              c, g.input(g.shape(c),
                                                         Eigen::MatrixXd::Zero(12, 4)));
                                        },
                                        p, 0, 1e-5, 1)});
  }
  {
    ParamStore p;
    Eigen::MatrixXd x(12, 3);
    fill(x);  // continuous draws: pooling ties have measure zero
    p.add("x", x, {});
    cases.push_back({"maxpool1d", gradcheck(
                                      [](Graph& g, ParamStore& ps) {
                                        Tensor xt = as_rank3(g.param(ps, "x"), 2, 3, 6);
                                        Tensor y = maxpool1d(xt, 2);
                                        return sum(y);
                                      },
                                      p, 0, 1e-5, 2)});
  }
  {
    ParamStore p;
    Eigen::MatrixXd x(3, 4), w(2, 4), b(1, 2);
    fill(x);
    fill(w);
    fill(b);
    p.add("x", x, {});
    p.add("w", w, {});
    p.add("b", b, {});
    cases.push_back({"dense", gradcheck(
                                  [](Graph& g, ParamStore& ps) {
                                    Tensor y = dense(g.param(ps, "x"), g.param(ps, "w"),
                                                     g.param(ps, "b"));
                                    return mse_loss(
                                        y, g.input(g.shape(y), Eigen::MatrixXd::Ones(3, 2)));
                                  },
                                  p, 0, 1e-5, 3)});
  }
  {
    ParamStore p;
    Eigen::MatrixXd x(4, 5);
    fill(x);
    // keep probe points clear of the ReLU kink at 0
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (std::abs(x.data()[i]) < 1e-3) x.data()[i] += 0.5;
    p.add("x", x, {});
    cases.push_back({"relu", gradcheck(
                                 [](Graph& g, ParamStore& ps) {
                                   return sum(relu(g.param(ps, "x")));
                                 },
                                 p, 0, 1e-5, 4)});
    cases.push_back({"softmax_ce", gradcheck(
                                       [](Graph& g, ParamStore& ps) {
                                         return softmax_ce(g.param(ps, "x"), {0, 2, 4, 1});
                                       },
                                       p, 0, 1e-5, 5)});
    cases.push_back({"mse_loss", gradcheck(
                                     [](Graph& g, ParamStore& ps) {
                                       Tensor xt = g.param(ps, "x");
                                       return mse_loss(
                                           xt, g.input(g.shape(xt),
                                                       Eigen::MatrixXd::Ones(4, 5)));
                                     },
                                     p, 0, 1e-5, 6)});
  }
  {
    ParamStore p;
    p.add("L1", Eigen::MatrixXd::Constant(1, 1, 2.0), {});
    p.add("L2", Eigen::MatrixXd::Constant(1, 1, 8.0), {});
    p.add("s1", Eigen::MatrixXd::Constant(1, 1, 0.1), {});
    p.add("s2", Eigen::MatrixXd::Constant(1, 1, -0.2), {});
    cases.push_back({"homoscedastic",
                     gradcheck(
                         [](Graph& g, ParamStore& ps) {
                           return homoscedastic({g.param(ps, "L1"), g.param(ps, "L2")},
                                                {g.param(ps, "s1"), g.param(ps, "s2")});
                         },
                         p, 0, 1e-5, 7)});
  }

  // full model losses on a small batch
  {
    lux::GridPtr grid = lux::WavelengthGrid::default_grid();
    lux::LibraryPtr lib = lux::default_library_ptr(grid);
    lux::AcuNetConfig nc;
    nc.seed = 7;
    lux::AcuNetModel net = lux::build_acunet(nc);
    lux::Rng rng(99);
    Eigen::MatrixXd fluo(4, nc.m), ref(4, nc.m);
    for (Eigen::Index i = 0; i < fluo.size(); ++i) {
      fluo.data()[i] = std::abs(rng.normal());
      ref.data()[i] = std::abs(rng.normal());
    }
    Eigen::VectorXd labels(4);
    labels << 0.0, 0.6, 1.25, 2.5;
    cases.push_back(
        {"acu-net loss", gradcheck(
                             [&](Graph& g, ParamStore& ps) {
                               Tensor x = g.input(Shape::rank3(4, 2, nc.m),
                                                  lux::pack_two_channel(fluo, ref));
                               Tensor z = lux::acunet_forward(g, ps, nc, x);
                               return lux::acunet_loss(g, ps, nc, z, lib->B(), labels, fluo);
                             },
                             net.params, 100, 1e-5, 8)});

    lux::AcuSaConfig sc;
    sc.hu = nc;
    sc.hu.seed = 8;
    sc.norm_seed = 9;
    lux::AcuSaModel sa = lux::build_acusa(sc, lib);
    cases.push_back({"acu-sa stage-1 loss",
                     gradcheck(
                         [&](Graph& g, ParamStore&) {
                           return lux::acusa_stage1_loss(g, sa, fluo);
                         },
                         sa.hu_params, 100, 1e-5, 9)});
    // a live operating point for the Eq.-5 path: stage-1 training guarantees
    // responsive abundance heads in the pipeline, an untrained encoder does
    // not, so let the positive output bias dominate
    sa.hu_params.at("fc2.w").value *= 0.01;
    cases.push_back({"acu-sa stage-2 loss",
                     gradcheck(
                         [&](Graph& g, ParamStore&) {
                           return lux::acusa_stage2_loss(g, sa, fluo, ref, labels);
                         },
                         sa.norm_params, 100, 1e-5, 10)});
  }

  bool ok = true;
  for (const auto& c : cases) {
    const bool pass = c.err <= 1e-4;
    ok = ok && pass;
    std::printf("[%s] %-22s max relative error %.3e\n", pass ? "PASS" : "FAIL", c.name,
                c.err);
  }
  return ok ? 0 : 3;
}

}  // namespace
