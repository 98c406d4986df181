#pragma once

#include <string>

#include <json.hpp>

#include "luxmix/nn/param_store.hpp"

namespace luxmix::nn {

// Checkpoint file layout:
//   bytes 0..7   magic "LUXMCKP1"
//   bytes 8..15  u64 little-endian manifest length N
//   N bytes      UTF-8 JSON manifest: arch, config, provenance, dtype,
//                tensors [{name, rows, cols, logical, offset, count}]
//   payload      raw little-endian tensor data in manifest order,
//                column-major per tensor, offsets relative to payload start
// dtype "f32" stores float, "f64" stores double. A 32-bit checkpoint
// round-trips bit-exactly (the doubles written back are float-exact).
struct Checkpoint {
  std::string arch;  // acu-net | acu-sa-hu | acu-sa-norm
  nlohmann::json config;
  nlohmann::json provenance;
  std::string dtype = "f32";
  ParamStore params;  // values only; optimizer state is not persisted
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace luxmix::nn
