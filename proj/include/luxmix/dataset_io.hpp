#pragma once

#include <string>
#include <vector>

#include "luxmix/sample.hpp"

namespace luxmix {

// Dataset CSV: header `id,domain,c_ppix,saturated,f_0..f_{m-1},r_0..r_{m-1}`.
// c_ppix is empty for unlabeled samples. A sidecar `<name>.grid.json` with
// {"wavelengths_nm":[...]} accompanies every dataset file; the reader
// validates m against it.
void save_dataset_csv(const std::vector<LabeledSample>& samples, const std::string& path);
std::vector<LabeledSample> load_dataset_csv(const std::string& path);

std::string grid_sidecar_path(const std::string& dataset_path);

}  // namespace luxmix
