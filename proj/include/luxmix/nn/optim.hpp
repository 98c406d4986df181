#pragma once

#include <cmath>
#include <limits>

#include "luxmix/nn/param_store.hpp"

namespace luxmix::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Decoupled weight decay (applied to the parameters, not the gradients),
// bias-corrected moments. Only entries present in `grads` are stepped.
void adamw_step(ParamStore& params, const GradMap& grads, const AdamWConfig& hp);

struct PlateauConfig {
  double factor = 0.5;
  int patience = 10;
  double min_lr = 1e-6;
  double threshold = 1e-4;  // relative improvement required to reset patience
};

// lr <- lr * factor whenever the best loss has not improved by `threshold`
// (relative) for `patience` observations. Monotone nonincreasing.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, const PlateauConfig& cfg) : cfg_(cfg), lr_(initial_lr) {}

  double observe(double loss) {
    const bool improved =
        !std::isfinite(best_) || loss < best_ - cfg_.threshold * std::abs(best_);
    if (improved) {
      best_ = loss;
      bad_ = 0;
    } else if (++bad_ >= cfg_.patience) {
      lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
      bad_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }

 private:
  PlateauConfig cfg_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

}  // namespace luxmix::nn
