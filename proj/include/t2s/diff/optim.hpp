// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "t2s/diff/nn.hpp"

namespace t2s::diff {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// lr(step) = lr * decay_rate^floor(step / decay_steps).
  double decay_rate = 1.0;
  std::int64_t decay_steps = 10000;
};

double scheduled_lr(const AdamConfig& config, std::int64_t step);

/// Adam over the parameters of one store, driven by their accumulated grad().
class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig config);

  /// Applies one update and clears the gradients. A non-finite gradient
  /// throws DivergenceError before any parameter is touched.
  void step();
  std::int64_t steps_taken() const { return step_; }
  double current_lr() const { return scheduled_lr(config_, step_); }
  const AdamConfig& config() const { return config_; }

  // State access for checkpointing; moments are ordered like store.params().
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps_taken(std::int64_t s) { step_ = s; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace t2s::diff
