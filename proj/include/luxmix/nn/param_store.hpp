#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace luxmix::nn {

// One named parameter tensor plus its AdamW state. `value` holds the storage
// layout used by the kernels (e.g. conv weights as (c_in*k, c_out));
// `logical_shape` records the architecture-level shape for checkpoints.
struct ParamEntry {
  Eigen::MatrixXd value;
  std::vector<int> logical_shape;
  bool no_decay = false;
  Eigen::MatrixXd m;  // first moment
  Eigen::MatrixXd v;  // second moment
  long step = 0;
};

class ParamStore {
 public:
  ParamEntry& add(const std::string& name, Eigen::MatrixXd value,
                  std::vector<int> logical_shape, bool no_decay = false);
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  // deterministic (name-ordered) iteration
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  long total_coefficients() const;

  // FNV-1a over the raw value bytes; used by the freeze contracts
  std::uint64_t value_checksum() const;

 private:
  std::map<std::string, ParamEntry> entries_;
};

using GradMap = std::map<std::string, Eigen::MatrixXd>;

}  // namespace luxmix::nn
