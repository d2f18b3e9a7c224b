// SPDX-License-Identifier: Apache-2.0
//
// Alternating optimisation: each iteration first moves the three critics up
// their objective (one RMSprop step on -dis_total followed by weight
// clipping), then moves the generators and classifier head down ps_total.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wadcmsn/data/features.hpp"
#include "wadcmsn/losses/losses.hpp"
#include "wadcmsn/losses/networks.hpp"
#include "wadcmsn/nn/rmsprop.hpp"
#include "wadcmsn/retrieval/retrieval.hpp"
#include "wadcmsn/semantics/semantic_table.hpp"

namespace wadcmsn {

struct OptimizerStates {
  RmsPropState sketch_encoder, image_encoder, sketch_decoder, image_decoder;
  RmsPropState semantic_critic, sketch_critic, image_critic;
  RmsPropState head;
  std::optional<RmsPropState> image_head;

  friend bool operator==(const OptimizerStates&, const OptimizerStates&) = default;
};

struct ModelBundle {
  Networks nets;
  OptimizerStates optimizers;
  std::vector<std::string> classes;  // seen classes in label order
  std::uint64_t iteration = 0;       // completed training iterations

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

struct TrainConfig {
  RmsPropConfig optimizer;  // learning rate 1e-4, decay 0.99, epsilon 1e-8
  Real clip_c = Real{0.01};
  std::size_t batch_size = 64;
  std::size_t max_iterations = 2000;
  std::size_t n_critic = 1;
  std::uint64_t seed = 0;
  LossWeights weights;
  Architecture architecture;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// Fresh networks (Glorot, drawn from `seed`) with zeroed optimizer state.
ModelBundle initialize_bundle(const TrainConfig& config, std::vector<std::string> classes);

struct IterationLog {
  std::uint64_t iteration = 0;  // 1-based
  LossReport report;            // all terms at the pre-update parameters
  Real domain_gap = 0;          // mean per-coordinate W1 between G_sk(x) and G_im(y)
};

struct EpochLog {
  std::size_t epoch = 0;        // 1-based
  std::uint64_t iteration = 0;  // iterations completed when the epoch ended
  Real validation_map = 0;
};

struct TrainLog {
  std::vector<IterationLog> iterations;
  std::vector<EpochLog> epochs;

  nlohmann::json to_json() const;
};

// Retrieval split evaluated after every epoch.
struct Validation {
  std::vector<FeatureRecord> queries;  // sketches
  std::vector<FeatureRecord> gallery;  // images
  EvalOptions options;
};

struct TrainHooks {
  // After each critic step and clipping; `step` counts critic steps from 1.
  std::function<void(std::uint64_t iteration, std::size_t step, const ModelBundle&)> after_critic_step;
  // After the generator/head step of each iteration.
  std::function<void(std::uint64_t iteration, const ModelBundle&)> after_generator_step;
};

struct TrainResult {
  ModelBundle bundle;
  TrainLog log;
};

// One critic update at the current parameters. Returns the phase values from
// before the update. Throws NumericError if any critic objective is not finite.
CriticPhase critic_update(ModelBundle& bundle, const Batch& batch, const GeneratorForward& fwd,
                          const TrainConfig& config, std::uint64_t iteration = 0);

// One generator and classifier update. `fwd` must match the current generator
// parameters. Returns the phase values from before the update.
GeneratorPhase generator_update(ModelBundle& bundle, const Batch& batch, const GeneratorForward& fwd,
                                const TrainConfig& config, std::uint64_t iteration = 0);

TrainResult train(const ZeroShotSplit& split, const SemanticTable& semantic, const TrainConfig& config,
                  const std::optional<Validation>& validation = std::nullopt,
                  const TrainHooks& hooks = {});

// Continues training `bundle` for config.max_iterations more iterations.
TrainResult train_from(ModelBundle bundle, const ZeroShotSplit& split, const SemanticTable& semantic,
                       const TrainConfig& config,
                       const std::optional<Validation>& validation = std::nullopt,
                       const TrainHooks& hooks = {});

// Checkpoint file (little-endian binary):
//   magic "WADCMSN\0", u32 format version, u32 sizeof(Real), u64 iteration,
//   class names, a flag for the per-branch image head, the networks (encoder,
//   encoder, decoder, decoder, critic x3, head, [image head]) as layer lists
//   (u64 out, u64 in, u8 activation, Real slope, weights, bias), the matching
//   optimizer states, and a trailing u64 FNV-1a checksum of everything before.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const ModelBundle& bundle, const std::filesystem::path& path);
// Throws IncompatibleError on a version or real-type mismatch, ParseError on
// truncation, corruption or a bad checksum. Never returns a partial bundle.
ModelBundle checkpoint_load(const std::filesystem::path& path);

// Throws IncompatibleError if the bundle's networks do not match `arch`.
void require_architecture(const ModelBundle& bundle, const Architecture& arch);

}  // namespace wadcmsn
