// Exercises the installed binary end to end: exit codes, file outputs,
// determinism of emitted artifacts.
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  if (!ok) {
    ++failures;
    std::cerr << "[FAIL] " << what << "\n";
  } else {
    std::cout << "[ ok ] " << what << "\n";
  }
}

int run(const std::string& args) {
  const std::string cmd = std::string(LUXMIX_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "luxmix_cli_tests";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string base = work.string();

  // synth: dataset + sidecar + resolved config, deterministic per seed
  {
    std::ofstream cfg(work / "tiny.json");
    cfg << R"({"sim": {"samples_per_cell": 2}, "train": {"epochs": 2}})";
    cfg.close();
    check(run("synth --config " + base + "/tiny.json --seed 7 --out " + base + "/s1") == 0,
          "synth exits 0");
    check(fs::exists(work / "s1/dataset.csv"), "synth writes dataset.csv");
    check(fs::exists(work / "s1/dataset.grid.json"), "synth writes the grid sidecar");
    check(fs::exists(work / "s1/config.resolved.json"), "synth echoes the resolved config");
    check(run("synth --config " + base + "/tiny.json --seed 7 --out " + base + "/s2") == 0,
          "second synth exits 0");
    check(slurp(work / "s1/dataset.csv") == slurp(work / "s2/dataset.csv"),
          "same seed gives a bit-identical dataset");
    check(run("synth --config " + base + "/tiny.json --seed 8 --out " + base + "/s3") == 0,
          "third synth exits 0");
    check(slurp(work / "s1/dataset.csv") != slurp(work / "s3/dataset.csv"),
          "different seed changes the dataset");
  }

  // usage errors: unknown key -> 1; missing checkpoint -> 2
  {
    std::ofstream bad(work / "bad.json");
    bad << R"({"sim": {"samples_per_cel": 2}})";
    bad.close();
    check(run("synth --config " + base + "/bad.json --out " + base + "/bad") == 1,
          "unknown config key exits 1");
    const int code = run("eval --dataset " + base + "/s1/dataset.csv --engine acu-net " +
                         "--checkpoint " + base + "/missing.ckpt --out " + base + "/e1");
    check(code == 2, "missing checkpoint exits 2");
    check(run("nonsense") != 0, "unknown subcommand fails");
  }

  // baseline on a small but learnable dataset
  {
    std::ofstream cfg(work / "base.json");
    cfg << R"({"sim": {"samples_per_cell": 8, "noise": {"read_sigma": 0.0,
              "shot_coeff": 0.0}, "saturation": {"probability": 0.0},
              "optics_jitter": 0.0}})";
    cfg.close();
    check(run("synth --config " + base + "/base.json --seed 3 --out " + base + "/b") == 0,
          "synth for baseline");
    check(run("baseline --config " + base + "/base.json --seed 3 --dataset " + base +
              "/b/dataset.csv --out " + base + "/b") == 0,
          "baseline exits 0");
    check(fs::exists(work / "b/baseline_params.json"), "baseline writes params");
    check(fs::exists(work / "b/baseline_report.csv"), "baseline writes the report");
    check(run("eval --config " + base + "/base.json --seed 3 --dataset " + base +
              "/b/dataset.csv --engine baseline --params " + base +
              "/b/baseline_params.json --out " + base + "/b_eval") == 0,
          "eval with the calibrated params exits 0");
  }

  // render: CSV -> PGM
  {
    std::ofstream csv(work / "map.csv");
    csv << "0.0,0.5\n1.0,0.25\n";
    csv.close();
    check(run("render --input " + base + "/map.csv --out " + base + "/map") == 0,
          "render exits 0");
    const std::string pgm = slurp(work / "map.pgm");
    check(pgm.rfind("P5\n2 2\n255\n", 0) == 0, "render emits a P5 header");
  }

  // truncated cube through unmix-cube -> exit 2
  {
    std::ofstream cube(work / "broken.cube", std::ios::binary);
    cube << "HSC1";
    const std::uint32_t dims[3] = {4, 4, 2};
    cube.write(reinterpret_cast<const char*>(dims), 12);
    const char kindpad[4] = {0, 0, 0, 0};
    cube.write(kindpad, 4);
    const double w[2] = {450.0, 453.0};
    cube.write(reinterpret_cast<const char*>(w), 16);
    const float some[5] = {1, 2, 3, 4, 5};  // far short of 4*4*2 floats
    cube.write(reinterpret_cast<const char*>(some), 20);
    cube.close();
    check(run("unmix-cube --fluo " + base + "/broken.cube --white " + base +
              "/broken.cube --out " + base + "/u") == 2,
          "truncated cube exits 2");
  }

  // gradcheck sweep
  check(run("gradcheck") == 0, "gradcheck sweep exits 0");

  // version flag
  check(run("--version") == 0, "--version exits 0");

  if (failures == 0) std::cout << "cli tests passed\n";
  return failures == 0 ? 0 : 1;
}
