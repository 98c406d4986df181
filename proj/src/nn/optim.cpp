#include "luxmix/nn/optim.hpp"

#include <cmath>

#include "luxmix/errors.hpp"

namespace luxmix::nn {

void adamw_step(ParamStore& params, const GradMap& grads, const AdamWConfig& hp) {
  for (const auto& [name, g] : grads) {
    ParamEntry& e = params.at(name);
    if (g.rows() != e.value.rows() || g.cols() != e.value.cols())
      throw DimensionError("adamw_step: gradient shape mismatch for '" + name + "'");
    e.step += 1;
    e.m = hp.beta1 * e.m + (1.0 - hp.beta1) * g;
    e.v = hp.beta2 * e.v + (1.0 - hp.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(e.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(e.step));
    const Eigen::ArrayXXd m_hat = e.m.array() / bc1;
    const Eigen::ArrayXXd v_hat = e.v.array() / bc2;
    Eigen::ArrayXXd update = m_hat / (v_hat.sqrt() + hp.eps);
    if (!e.no_decay && hp.weight_decay != 0.0) update += hp.weight_decay * e.value.array();
    e.value.array() -= hp.lr * update;
  }
}

}  // namespace luxmix::nn
