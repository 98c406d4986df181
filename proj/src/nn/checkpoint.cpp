#include "luxmix/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "luxmix/errors.hpp"

namespace luxmix::nn {

namespace {
constexpr char kMagic[8] = {'L', 'U', 'X', 'M', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (ckpt.dtype != "f32" && ckpt.dtype != "f64")
    throw ConfigError("checkpoint dtype must be f32 or f64");
  const std::size_t elem = ckpt.dtype == "f32" ? 4 : 8;

  nlohmann::json manifest;
  manifest["arch"] = ckpt.arch;
  manifest["config"] = ckpt.config;
  manifest["provenance"] = ckpt.provenance;
  manifest["dtype"] = ckpt.dtype;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, e] : ckpt.params) {
    nlohmann::json t;
    t["name"] = name;
    t["rows"] = e.value.rows();
    t["cols"] = e.value.cols();
    t["logical"] = e.logical_shape;
    t["offset"] = offset;
    t["count"] = e.value.size();
    tensors.push_back(std::move(t));
    offset += static_cast<std::uint64_t>(e.value.size()) * elem;
  }
  manifest["tensors"] = std::move(tensors);
  const std::string mjson = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  const std::uint64_t mlen = mjson.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  for (const auto& [name, e] : ckpt.params) {
    if (ckpt.dtype == "f64") {
      out.write(reinterpret_cast<const char*>(e.value.data()),
                static_cast<std::streamsize>(sizeof(double) * e.value.size()));
    } else {
      std::vector<float> buf(static_cast<std::size_t>(e.value.size()));
      for (Eigen::Index i = 0; i < e.value.size(); ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<float>(e.value.data()[i]);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(sizeof(float) * buf.size()));
    }
  }
  if (!out) throw FormatError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("bad checkpoint magic in " + path);
  std::uint64_t mlen = 0;
  if (!in.read(reinterpret_cast<char*>(&mlen), 8))
    throw FormatError("truncated checkpoint header in " + path);
  std::string mjson(mlen, '\0');
  if (!in.read(mjson.data(), static_cast<std::streamsize>(mlen)))
    throw FormatError("truncated checkpoint manifest in " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mjson);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint manifest in " + path + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.arch = manifest.at("arch").get<std::string>();
    ckpt.config = manifest.at("config");
    ckpt.provenance = manifest.value("provenance", nlohmann::json::object());
    ckpt.dtype = manifest.at("dtype").get<std::string>();
    if (ckpt.dtype != "f32" && ckpt.dtype != "f64")
      throw FormatError("unknown checkpoint dtype '" + ckpt.dtype + "' in " + path);
    const std::size_t elem = ckpt.dtype == "f32" ? 4 : 8;
    for (const auto& t : manifest.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const Eigen::Index rows = t.at("rows").get<Eigen::Index>();
      const Eigen::Index cols = t.at("cols").get<Eigen::Index>();
      const std::uint64_t count = t.at("count").get<std::uint64_t>();
      if (static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) != count)
        throw FormatError("inconsistent tensor shape for '" + name + "' in " + path);
      Eigen::MatrixXd value(rows, cols);
      if (ckpt.dtype == "f64") {
        if (!in.read(reinterpret_cast<char*>(value.data()),
                     static_cast<std::streamsize>(count * elem)))
          throw FormatError("truncated payload for tensor '" + name + "' in " + path);
      } else {
        std::vector<float> buf(count);
        if (!in.read(reinterpret_cast<char*>(buf.data()),
                     static_cast<std::streamsize>(count * elem)))
          throw FormatError("truncated payload for tensor '" + name + "' in " + path);
        for (std::uint64_t i = 0; i < count; ++i)
          value.data()[i] = static_cast<double>(buf[i]);
      }
      ckpt.params.add(name, std::move(value), t.value("logical", std::vector<int>{}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint manifest in " + path + ": " + e.what());
  }
  return ckpt;
}

}  // namespace luxmix::nn
