// SPDX-License-Identifier: Apache-2.0
#include "t2s/diff/optim.hpp"

#include <cmath>
#include <string>

#include "t2s/error.hpp"

namespace t2s::diff {

double scheduled_lr(const AdamConfig& config, std::int64_t step) {
  if (config.decay_steps <= 0) return config.lr;
  return config.lr * std::pow(config.decay_rate, static_cast<double>(step / config.decay_steps));
}

Adam::Adam(const ParamStore& store, AdamConfig config)
    : params_(store.param_tensors()), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (double g : params_[i].grad()) {
      if (!std::isfinite(g)) {
        throw DivergenceError("non-finite gradient in parameter " + std::to_string(i) +
                              " at optimizer step " + std::to_string(step_));
      }
    }
  }
  const double lr = scheduled_lr(config_, step_);
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i].grad();
    if (g.empty()) continue;
    auto& w = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1 - config_.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
    params_[i].zero_grad();
  }
}

}  // namespace t2s::diff
