// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/trainer/trainer.hpp"

#include <cmath>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "wadcmsn/data/batches.hpp"
#include "wadcmsn/error.hpp"

namespace wadcmsn {

void TrainConfig::validate() const {
  const auto& o = optimizer;
  if (!(o.learning_rate >= 0) || !std::isfinite(o.learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(o.decay >= 0 && o.decay < 1)) throw ConfigError("decay must lie in [0, 1)");
  if (!(o.epsilon > 0)) throw ConfigError("epsilon must be > 0");
  if (!(clip_c > 0) || !std::isfinite(clip_c)) throw ConfigError("clip_c must be finite and > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (n_critic == 0) throw ConfigError("n_critic must be >= 1");
  for (Real w : {weights.adversarial, weights.branch_adversarial, weights.cycle, weights.classification,
                 weights.identity}) {
    if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (architecture.feature_dim == 0 || architecture.code_dim == 0) {
    throw ConfigError("feature_dim and code_dim must be positive");
  }
}

ModelBundle initialize_bundle(const TrainConfig& config, std::vector<std::string> classes) {
  config.validate();
  if (classes.size() < 2) throw ValidationError("training needs at least 2 seen classes");
  std::mt19937_64 rng(config.seed);
  ModelBundle b;
  b.nets = initialize_networks(config.architecture, classes.size(), rng);
  const auto& oc = config.optimizer;
  auto& o = b.optimizers;
  o.sketch_encoder = RmsPropState::for_net(oc, b.nets.sketch_encoder);
  o.image_encoder = RmsPropState::for_net(oc, b.nets.image_encoder);
  o.sketch_decoder = RmsPropState::for_net(oc, b.nets.sketch_decoder);
  o.image_decoder = RmsPropState::for_net(oc, b.nets.image_decoder);
  o.semantic_critic = RmsPropState::for_net(oc, b.nets.semantic_critic);
  o.sketch_critic = RmsPropState::for_net(oc, b.nets.sketch_critic);
  o.image_critic = RmsPropState::for_net(oc, b.nets.image_critic);
  o.head = RmsPropState::for_net(oc, b.nets.head.linear);
  if (b.nets.image_head) o.image_head = RmsPropState::for_net(oc, b.nets.image_head->linear);
  b.classes = std::move(classes);
  return b;
}

nlohmann::json TrainLog::to_json() const {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : iterations) {
    const auto& r = it.report;
    its.push_back({{"iteration", it.iteration},
                   {"wadv_se", r.wadv_se},
                   {"wadv_sk", r.wadv_sk},
                   {"wadv_im", r.wadv_im},
                   {"cyc_sk", r.cyc_sk},
                   {"cyc_im", r.cyc_im},
                   {"cls_sk", r.cls_sk},
                   {"cls_im", r.cls_im},
                   {"iml", r.iml},
                   {"gen", r.gen},
                   {"total", r.total},
                   {"dis_total", r.dis_total},
                   {"ps_total", r.ps_total},
                   {"domain_gap", it.domain_gap}});
  }
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : epochs) {
    eps.push_back({{"epoch", e.epoch}, {"iteration", e.iteration}, {"validation_map", e.validation_map}});
  }
  return {{"iterations", std::move(its)}, {"epochs", std::move(eps)}};
}

namespace {

void require_finite(Real v, const char* term, std::uint64_t iteration) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("loss term ") + term + " is not finite at iteration " +
                       std::to_string(iteration));
  }
}

// Every step allocates and frees several multi-megabyte matrices. With glibc
// defaults those round-trip through mmap/munmap and heap trimming, which costs
// about a third of the step in page faults.
void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

CriticPhase critic_update(ModelBundle& bundle, const Batch& batch, const GeneratorForward& fwd,
                          const TrainConfig& config, std::uint64_t iteration) {
  CriticPhase cp = critic_phase(bundle.nets, batch, fwd, config.weights);
  require_finite(cp.wadv_se, "wadv_se", iteration);
  require_finite(cp.wadv_sk, "wadv_sk", iteration);
  require_finite(cp.wadv_im, "wadv_im", iteration);
  require_finite(cp.dis_total, "dis_total", iteration);
  auto& n = bundle.nets;
  auto& o = bundle.optimizers;
  rmsprop_step(n.semantic_critic, cp.grads.semantic, o.semantic_critic);
  rmsprop_step(n.sketch_critic, cp.grads.sketch, o.sketch_critic);
  rmsprop_step(n.image_critic, cp.grads.image, o.image_critic);
  clip_weights(n.semantic_critic, config.clip_c);
  clip_weights(n.sketch_critic, config.clip_c);
  clip_weights(n.image_critic, config.clip_c);
  return cp;
}

GeneratorPhase generator_update(ModelBundle& bundle, const Batch& batch, const GeneratorForward& fwd,
                                const TrainConfig& config, std::uint64_t iteration) {
  GeneratorPhase gp = generator_phase(bundle.nets, batch, fwd, config.weights);
  require_finite(gp.gen_semantic, "gen_semantic", iteration);
  require_finite(gp.gen_branch, "gen_branch", iteration);
  require_finite(gp.cyc_sk, "cyc_sk", iteration);
  require_finite(gp.cyc_im, "cyc_im", iteration);
  require_finite(gp.cls_sk, "cls_sk", iteration);
  require_finite(gp.cls_im, "cls_im", iteration);
  require_finite(gp.iml, "iml", iteration);
  require_finite(gp.ps_total, "ps_total", iteration);
  auto& n = bundle.nets;
  auto& o = bundle.optimizers;
  const auto& g = gp.grads;
  rmsprop_step(n.sketch_encoder, g.sketch_encoder, o.sketch_encoder);
  rmsprop_step(n.image_encoder, g.image_encoder, o.image_encoder);
  rmsprop_step(n.sketch_decoder, g.sketch_decoder, o.sketch_decoder);
  rmsprop_step(n.image_decoder, g.image_decoder, o.image_decoder);
  rmsprop_step(n.head.linear, g.head, o.head);
  if (n.image_head) rmsprop_step(n.image_head->linear, *g.image_head, *o.image_head);
  return gp;
}

TrainResult train(const ZeroShotSplit& split, const SemanticTable& semantic, const TrainConfig& config,
                  const std::optional<Validation>& validation, const TrainHooks& hooks) {
  std::vector<std::string> classes = split.seen_classes;
  std::sort(classes.begin(), classes.end());
  return train_from(initialize_bundle(config, std::move(classes)), split, semantic, config, validation,
                    hooks);
}

TrainResult train_from(ModelBundle bundle, const ZeroShotSplit& split, const SemanticTable& semantic,
                       const TrainConfig& config, const std::optional<Validation>& validation,
                       const TrainHooks& hooks) {
  config.validate();
  bundle.nets.validate();
  keep_large_blocks_on_heap();
  if (semantic.code_dim() != bundle.nets.code_dim()) {
    throw ShapeError("semantic codes have dimension " + std::to_string(semantic.code_dim()) +
                     ", the model expects " + std::to_string(bundle.nets.code_dim()));
  }
  BatchStream stream(split, config.batch_size, semantic, config.seed ^ 0x9e3779b97f4a7c15ULL);
  if (stream.classes() != bundle.classes) {
    throw IncompatibleError("seen classes of the split differ from the model's classes");
  }

  TrainResult result;
  result.log.iterations.reserve(config.max_iterations);
  std::size_t epochs_done = 0;
  std::size_t critic_steps = 0;
  for (std::size_t i = 0; i < config.max_iterations; ++i) {
    const std::uint64_t iteration = bundle.iteration + 1;
    Batch batch;
    GeneratorForward fwd;
    CriticPhase cp;
    for (std::size_t c = 0; c < config.n_critic; ++c) {
      batch = stream.next();
      if (batch.x.cols() != bundle.nets.feature_dim()) {
        throw ShapeError("features have dimension " + std::to_string(batch.x.cols()) +
                         ", the model expects " + std::to_string(bundle.nets.feature_dim()));
      }
      fwd = run_generators(bundle.nets, batch);
      cp = critic_update(bundle, batch, fwd, config, iteration);
      ++critic_steps;
      if (hooks.after_critic_step) hooks.after_critic_step(iteration, critic_steps, bundle);
    }
    // The generator tapes stay valid: only critics changed since the forward pass.
    const GeneratorPhase gp = generator_update(bundle, batch, fwd, config, iteration);
    bundle.iteration = iteration;

    IterationLog entry;
    entry.iteration = iteration;
    entry.report = make_report(cp, gp, config.weights);
    entry.domain_gap = code_domain_gap(fwd.sk_codes, fwd.im_codes);
    result.log.iterations.push_back(entry);
    if (hooks.after_generator_step) hooks.after_generator_step(iteration, bundle);

    while (epochs_done < stream.epoch()) {
      ++epochs_done;
      if (validation) {
        const EvalResult ev =
            evaluate(bundle.nets, validation->queries, validation->gallery, validation->options);
        result.log.epochs.push_back({epochs_done, iteration, ev.map});
      }
    }
  }
  result.bundle = std::move(bundle);
  return result;
}

void require_architecture(const ModelBundle& bundle, const Architecture& arch) {
  const auto mismatch = [](const Mlp& net, const MlpShape& want, const char* name) {
    const MlpShape have = net.shape();
    if (have.dims != want.dims || have.activations != want.activations) {
      std::string msg = std::string("checkpoint network ") + name + " has layer sizes";
      for (auto d : have.dims) msg += " " + std::to_string(d);
      msg += ", configuration expects";
      for (auto d : want.dims) msg += " " + std::to_string(d);
      throw IncompatibleError(msg);
    }
  };
  const auto& n = bundle.nets;
  mismatch(n.sketch_encoder, encoder_shape(arch), "sketch_encoder");
  mismatch(n.image_encoder, encoder_shape(arch), "image_encoder");
  mismatch(n.sketch_decoder, decoder_shape(arch), "sketch_decoder");
  mismatch(n.image_decoder, decoder_shape(arch), "image_decoder");
  mismatch(n.semantic_critic, critic_shape(arch, arch.code_dim), "semantic_critic");
  mismatch(n.sketch_critic, critic_shape(arch, arch.feature_dim), "sketch_critic");
  mismatch(n.image_critic, critic_shape(arch, arch.feature_dim), "image_critic");
  if (n.image_head.has_value() != arch.per_branch_head) {
    throw IncompatibleError("checkpoint and configuration disagree on the per-branch classifier head");
  }
}

}  // namespace wadcmsn
