#include "luxmix/nn/gradcheck.hpp"

#include <cmath>
#include <limits>

#include "luxmix/rng.hpp"

namespace luxmix::nn {

double gradcheck(const LossBuilder& builder, ParamStore& params, int probes, double eps,
                 std::uint64_t seed) {
  GradMap ad;
  {
    Graph g;
    Tensor loss = builder(g, params);
    g.backward(loss);
    ad = g.param_grads();
  }

  auto eval = [&]() {
    Graph g;
    return g.scalar(builder(g, params));
  };

  // flat coordinate space over all parameters, in name order
  std::vector<std::pair<std::string, long>> coords;
  for (const auto& [name, grad] : ad)
    for (long i = 0; i < static_cast<long>(grad.size()); ++i) coords.emplace_back(name, i);

  std::vector<std::size_t> picks;
  if (probes <= 0 || probes >= static_cast<int>(coords.size())) {
    for (std::size_t i = 0; i < coords.size(); ++i) picks.push_back(i);
  } else {
    Rng rng(Rng::mix(seed, 0x6fd2c5f));
    for (int i = 0; i < probes; ++i)
      picks.push_back(static_cast<std::size_t>(rng.uniform_index(coords.size())));
  }

  // A probe is only admissible when the finite difference can adjudicate the
  // tolerance. Two AD-blind gates enforce that (so neither can mask a wrong
  // backward pass):
  //   - step-halving consistency rejects probes whose +-eps interval straddles
  //     a ReLU kink or pooling tie (nondifferentiable on a measure-zero set);
  //   - the rounding floor eps_machine*|L|/eps rejects coordinates whose
  //     gradient is too small to resolve against the loss magnitude.
  constexpr double kTol = 1e-4;
  Rng resample(Rng::mix(seed, 0x2e5a317));
  const std::size_t max_attempts = picks.size() * 50 + 64;
  std::size_t attempts = 0;
  double max_rel = 0.0;
  for (std::size_t at = 0; at < picks.size(); ++at) {
    const std::size_t pick = picks[at];
    const auto& [name, idx] = coords[pick];
    double* coeff = params.at(name).value.data() + idx;
    const double saved = *coeff;
    double loss_magnitude = 0.0;
    auto fd_at = [&](double h) {
      *coeff = saved + h;
      const double lp = eval();
      *coeff = saved - h;
      const double lm = eval();
      *coeff = saved;
      loss_magnitude = std::max({loss_magnitude, std::abs(lp), std::abs(lm)});
      return (lp - lm) / (2.0 * h);
    };
    const double fd = fd_at(eps);
    const double fd_half = fd_at(eps / 2.0);
    const double denom = std::max({std::abs(fd), std::abs(fd_half), 1e-8});
    const double gate = 0.25 * kTol * denom;
    const double noise_floor =
        std::numeric_limits<double>::epsilon() * loss_magnitude / eps;
    const bool admissible = std::abs(fd - fd_half) <= gate && noise_floor <= gate;
    if (!admissible && ++attempts < max_attempts) {
      picks[at--] = static_cast<std::size_t>(resample.uniform_index(coords.size()));
      continue;
    }
    const double g_ad = ad.at(name)(idx);
    const double rel = std::abs(g_ad - fd) / std::max({std::abs(g_ad), std::abs(fd), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace luxmix::nn
