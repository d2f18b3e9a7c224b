// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/nn/rmsprop.hpp"

#include <cmath>
#include <string>

#include "wadcmsn/error.hpp"

namespace wadcmsn {

RmsPropState RmsPropState::for_blocks(const RmsPropConfig& config,
                                      const std::vector<std::span<const Real>>& params) {
  if (!(config.decay > 0 && config.decay < 1)) throw ValidationError("rmsprop decay must lie in (0, 1)");
  if (!(config.epsilon > 0)) throw ValidationError("rmsprop epsilon must be positive");
  if (!(config.learning_rate >= 0)) throw ValidationError("rmsprop learning rate must be nonnegative");
  RmsPropState state;
  state.config = config;
  state.accumulators.reserve(params.size());
  for (const auto& block : params) state.accumulators.emplace_back(block.size(), Real{0});
  return state;
}

RmsPropState RmsPropState::for_net(const RmsPropConfig& config, const Mlp& net) {
  return for_blocks(config, net.parameters());
}

void rmsprop_step(const std::vector<std::span<Real>>& params,
                  const std::vector<std::span<const Real>>& grads, RmsPropState& state) {
  if (params.size() != grads.size() || params.size() != state.accumulators.size()) {
    throw ShapeError("rmsprop_step: parameter, gradient and accumulator block counts differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.accumulators[b].size()) {
      throw ShapeError("rmsprop_step: block " + std::to_string(b) + " sizes differ");
    }
  }
  const Real lr = state.config.learning_rate;
  const Real decay = state.config.decay;
  const Real eps = state.config.epsilon;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Real* p = params[b].data();
    const Real* g = grads[b].data();
    Real* acc = state.accumulators[b].data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(params[b].size());
#pragma omp parallel for simd schedule(static) if (n >= 65536)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      acc[i] = decay * acc[i] + (Real{1} - decay) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
    }
  }
}

void rmsprop_step(Mlp& net, const MlpGrads& grads, RmsPropState& state) {
  rmsprop_step(net.parameters(), grads.blocks(), state);
}

}  // namespace wadcmsn
