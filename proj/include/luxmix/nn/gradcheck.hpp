#pragma once

#include <cstdint>
#include <functional>

#include "luxmix/nn/graph.hpp"

namespace luxmix::nn {

// Builds a scalar loss over the store's parameters on a fresh graph.
using LossBuilder = std::function<Tensor(Graph&, ParamStore&)>;

// Central finite differences against reverse-mode gradients. `probes` random
// parameter coordinates are tested (probes <= 0 checks every coordinate).
// Returns max |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
double gradcheck(const LossBuilder& builder, ParamStore& params, int probes = 100,
                 double eps = 1e-5, std::uint64_t seed = 0);

}  // namespace luxmix::nn
