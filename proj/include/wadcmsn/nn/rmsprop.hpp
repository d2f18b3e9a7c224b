// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "wadcmsn/nn/matrix.hpp"
#include "wadcmsn/nn/mlp.hpp"

namespace wadcmsn {

struct RmsPropConfig {
  Real learning_rate = Real{1e-4};
  Real decay = Real{0.99};
  Real epsilon = Real{1e-8};
};

// Squared-gradient accumulators, one block per parameter block.
struct RmsPropState {
  RmsPropConfig config;
  std::vector<std::vector<Real>> accumulators;

  static RmsPropState for_blocks(const RmsPropConfig& config,
                                 const std::vector<std::span<const Real>>& params);
  static RmsPropState for_net(const RmsPropConfig& config, const Mlp& net);

  friend bool operator==(const RmsPropState& a, const RmsPropState& b) {
    return a.config.learning_rate == b.config.learning_rate && a.config.decay == b.config.decay &&
           a.config.epsilon == b.config.epsilon && a.accumulators == b.accumulators;
  }
};

// acc <- decay * acc + (1 - decay) * g^2
// p   <- p - lr * g / (sqrt(acc) + eps)
void rmsprop_step(const std::vector<std::span<Real>>& params,
                  const std::vector<std::span<const Real>>& grads, RmsPropState& state);

void rmsprop_step(Mlp& net, const MlpGrads& grads, RmsPropState& state);

}  // namespace wadcmsn
