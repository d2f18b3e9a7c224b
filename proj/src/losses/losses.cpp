// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wadcmsn/error.hpp"

namespace wadcmsn {

namespace {

struct CriticMean {
  Real value = 0;
  MlpGrads grads;
  Matrix input_grad;
};

// Mean critic score over the rows of `input`, with gradients of that mean.
CriticMean critic_mean(const Mlp& critic, const Matrix& input, bool need_input_grad) {
  if (input.rows() == 0) throw ValidationError("critic_mean: empty batch");
  Tape tape;
  const Matrix scores = critic.forward(input, tape);
  if (scores.cols() != 1) throw ShapeError("critic must produce one score per row");
  const Real inv_b = Real{1} / static_cast<Real>(input.rows());
  CriticMean out;
  for (Real v : scores.values()) out.value += v;
  out.value *= inv_b;
  BackwardResult r = critic.backward(tape, Matrix(input.rows(), 1, inv_b), need_input_grad);
  out.grads = std::move(r.grads);
  out.input_grad = std::move(r.input_grad);
  return out;
}

struct Residual {
  Real value = 0;
  Matrix grad;  // w.r.t. the first argument
};

// (1/b) sum_rows ||pred - target||_1; subgradient 0 at a tie.
Residual l1_mean(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "l1 residual");
  if (pred.rows() == 0) throw ValidationError("l1_mean: empty batch");
  const Real inv_b = Real{1} / static_cast<Real>(pred.rows());
  Residual out{0, Matrix(pred.rows(), pred.cols())};
  const auto p = pred.values();
  const auto t = target.values();
  auto g = out.grad.values();
  Real sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real d = p[i] - t[i];
    sum += std::abs(d);
    g[i] = d > 0 ? inv_b : (d < 0 ? -inv_b : Real{0});
  }
  out.value = sum * inv_b;
  return out;
}

// (1/b) sum_rows ||pred - target||_2^2
Residual squared_mean(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "squared residual");
  if (pred.rows() == 0) throw ValidationError("squared_mean: empty batch");
  const Real inv_b = Real{1} / static_cast<Real>(pred.rows());
  Residual out{0, Matrix(pred.rows(), pred.cols())};
  const auto p = pred.values();
  const auto t = target.values();
  auto g = out.grad.values();
  Real sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real d = p[i] - t[i];
    sum += d * d;
    g[i] = Real{2} * d * inv_b;
  }
  out.value = sum * inv_b;
  return out;
}

// dst += a * src
void axpy(Matrix& dst, Real a, const Matrix& src) {
  require_same_shape(dst, src, "gradient accumulation");
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += a * s[i];
}

Matrix scaled(const Matrix& m, Real a) {
  Matrix out = m;
  for (auto& v : out.values()) v *= a;
  return out;
}

void check_labels(const std::vector<std::size_t>& labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) throw ShapeError("classification: label count differs from batch size");
  for (std::size_t l : labels) {
    if (l >= classes) {
      throw ValidationError("classification: label " + std::to_string(l) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
  }
}

void check_batch(const Batch& batch, const Mlp& sketch_encoder) {
  if (batch.size() == 0) throw ValidationError("empty batch");
  if (batch.x.rows() != batch.size() || batch.y.rows() != batch.size() ||
      batch.s.rows() != batch.size()) {
    throw ShapeError("batch: x, y, s and labels must share the batch dimension");
  }
  require_shape(batch.s, batch.size(), sketch_encoder.output_dim(), "batch semantic codes");
}

}  // namespace

SemanticAdversarial wadv_semantic(const Batch& batch, const Mlp& sketch_encoder,
                                  const Mlp& image_encoder, const Mlp& critic) {
  check_batch(batch, sketch_encoder);
  Tape sk_tape, im_tape;
  const Matrix sk_codes = sketch_encoder.forward(batch.x, sk_tape);
  const Matrix im_codes = image_encoder.forward(batch.y, im_tape);
  const CriticMean real = critic_mean(critic, batch.s, false);
  const CriticMean fake_sk = critic_mean(critic, sk_codes, true);
  const CriticMean fake_im = critic_mean(critic, im_codes, true);

  SemanticAdversarial out;
  out.value = Real{2} * real.value - fake_sk.value - fake_im.value;
  out.critic = MlpGrads::zeros_like(critic);
  out.critic.add(real.grads, Real{2});
  out.critic.add(fake_sk.grads, Real{-1});
  out.critic.add(fake_im.grads, Real{-1});
  out.sketch_encoder = sketch_encoder.backward(sk_tape, scaled(fake_sk.input_grad, -1), false).grads;
  out.image_encoder = image_encoder.backward(im_tape, scaled(fake_im.input_grad, -1), false).grads;
  return out;
}

BranchAdversarial wadv_branch(const Matrix& real, const Matrix& decoded, const Mlp& critic) {
  require_same_shape(real, decoded, "wadv_branch decoded batch");
  const CriticMean r = critic_mean(critic, real, false);
  const CriticMean d = critic_mean(critic, decoded, true);
  BranchAdversarial out;
  out.value = r.value - d.value;
  out.critic = r.grads;
  out.critic.add(d.grads, Real{-1});
  out.decoded_grad = scaled(d.input_grad, -1);
  return out;
}

CycleLoss cycle_loss(const Matrix& features, const Matrix& codes, const Mlp& encoder,
                     const Mlp& decoder) {
  require_shape(codes, features.rows(), encoder.output_dim(), "cycle_loss codes");
  Tape enc_tape, recon_tape, dec_tape, code_cycle_tape;
  const Matrix enc = encoder.forward(features, enc_tape);
  const Matrix recon = decoder.forward(enc, recon_tape);
  const Matrix dec = decoder.forward(codes, dec_tape);
  const Matrix code_cycle = encoder.forward(dec, code_cycle_tape);

  const Residual feature_term = l1_mean(recon, features);
  const Residual code_term = l1_mean(code_cycle, codes);

  CycleLoss out;
  out.value = feature_term.value + code_term.value;
  // v -> G -> F -> v
  BackwardResult through_decoder = decoder.backward(recon_tape, feature_term.grad, true);
  BackwardResult through_encoder = encoder.backward(enc_tape, through_decoder.input_grad, false);
  // s -> F -> G -> s
  BackwardResult code_enc = encoder.backward(code_cycle_tape, code_term.grad, true);
  BackwardResult code_dec = decoder.backward(dec_tape, code_enc.input_grad, false);

  out.encoder = std::move(through_encoder.grads);
  out.encoder.add(code_enc.grads);
  out.decoder = std::move(through_decoder.grads);
  out.decoder.add(code_dec.grads);
  return out;
}

ClassificationLoss classification_loss(const Matrix& codes, const std::vector<std::size_t>& labels,
                                       const ClassifierHead& head) {
  check_labels(labels, codes.rows(), head.classes());
  if (codes.rows() == 0) throw ValidationError("classification_loss: empty batch");
  Tape tape;
  const Matrix logits = head.linear.forward(codes, tape);
  const std::size_t b = codes.rows();
  const std::size_t c = logits.cols();
  const Real inv_b = Real{1} / static_cast<Real>(b);
  Matrix grad(b, c);
  Real total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = logits.row(i);
    const Real mx = *std::max_element(row.begin(), row.end());
    Real denom = 0;
    for (Real v : row) denom += std::exp(v - mx);
    const Real log_denom = std::log(denom);
    total -= row[labels[i]] - mx - log_denom;
    for (std::size_t k = 0; k < c; ++k) {
      const Real p = std::exp(row[k] - mx - log_denom);
      grad(i, k) = (p - (k == labels[i] ? Real{1} : Real{0})) * inv_b;
    }
  }
  ClassificationLoss out;
  out.value = total * inv_b;
  BackwardResult r = head.linear.backward(tape, grad, true);
  out.head = std::move(r.grads);
  out.codes_grad = std::move(r.input_grad);
  return out;
}

IdentityMatching identity_matching_loss(const Batch& batch, const Mlp& sketch_encoder,
                                        const Mlp& image_encoder, const Mlp& sketch_decoder,
                                        const Mlp& image_decoder) {
  check_batch(batch, sketch_encoder);
  Tape sk_tape, im_tape, skd_tape, imd_tape;
  const Matrix sk_codes = sketch_encoder.forward(batch.x, sk_tape);
  const Matrix im_codes = image_encoder.forward(batch.y, im_tape);
  const Matrix sk_dec = sketch_decoder.forward(batch.s, skd_tape);
  const Matrix im_dec = image_decoder.forward(batch.s, imd_tape);

  const Residual codes = squared_mean(sk_codes, im_codes);
  const Residual sk = squared_mean(sk_dec, batch.x);
  const Residual im = squared_mean(im_dec, batch.y);

  IdentityMatching out;
  out.value = codes.value + sk.value + im.value;
  out.sketch_encoder = sketch_encoder.backward(sk_tape, codes.grad, false).grads;
  out.image_encoder = image_encoder.backward(im_tape, scaled(codes.grad, -1), false).grads;
  out.sketch_decoder = sketch_decoder.backward(skd_tape, sk.grad, false).grads;
  out.image_decoder = image_decoder.backward(imd_tape, im.grad, false).grads;
  return out;
}

GeneratorForward run_generators(const Networks& nets, const Batch& batch) {
  check_batch(batch, nets.sketch_encoder);
  GeneratorForward f;
  f.sk_codes = nets.sketch_encoder.forward(batch.x, f.sk_codes_tape);
  f.im_codes = nets.image_encoder.forward(batch.y, f.im_codes_tape);
  f.sk_decoded = nets.sketch_decoder.forward(batch.s, f.sk_decoded_tape);
  f.im_decoded = nets.image_decoder.forward(batch.s, f.im_decoded_tape);
  f.sk_recon = nets.sketch_decoder.forward(f.sk_codes, f.sk_recon_tape);
  f.im_recon = nets.image_decoder.forward(f.im_codes, f.im_recon_tape);
  f.sk_code_cycle = nets.sketch_encoder.forward(f.sk_decoded, f.sk_code_cycle_tape);
  f.im_code_cycle = nets.image_encoder.forward(f.im_decoded, f.im_code_cycle_tape);
  return f;
}

CriticPhase critic_phase(const Networks& nets, const Batch& batch, const GeneratorForward& fwd,
                         const LossWeights& weights) {
  const CriticMean se_real = critic_mean(nets.semantic_critic, batch.s, false);
  const CriticMean se_sk = critic_mean(nets.semantic_critic, fwd.sk_codes, false);
  const CriticMean se_im = critic_mean(nets.semantic_critic, fwd.im_codes, false);
  const CriticMean sk_real = critic_mean(nets.sketch_critic, batch.x, false);
  const CriticMean sk_fake = critic_mean(nets.sketch_critic, fwd.sk_decoded, false);
  const CriticMean im_real = critic_mean(nets.image_critic, batch.y, false);
  const CriticMean im_fake = critic_mean(nets.image_critic, fwd.im_decoded, false);

  CriticPhase out;
  out.wadv_se = Real{2} * se_real.value - se_sk.value - se_im.value;
  out.wadv_sk = sk_real.value - sk_fake.value;
  out.wadv_im = im_real.value - im_fake.value;
  out.gen_semantic = -se_sk.value - se_im.value;
  out.gen_branch = -sk_fake.value - im_fake.value;
  out.dis_total = -(weights.adversarial * out.wadv_se +
                    weights.branch_adversarial * (out.wadv_sk + out.wadv_im));

  // dis_total = -(w_adv * wadv_se + w_branch * (wadv_sk + wadv_im))
  out.grads.semantic = MlpGrads::zeros_like(nets.semantic_critic);
  out.grads.semantic.add(se_real.grads, -Real{2} * weights.adversarial);
  out.grads.semantic.add(se_sk.grads, weights.adversarial);
  out.grads.semantic.add(se_im.grads, weights.adversarial);
  out.grads.sketch = MlpGrads::zeros_like(nets.sketch_critic);
  out.grads.sketch.add(sk_real.grads, -weights.branch_adversarial);
  out.grads.sketch.add(sk_fake.grads, weights.branch_adversarial);
  out.grads.image = MlpGrads::zeros_like(nets.image_critic);
  out.grads.image.add(im_real.grads, -weights.branch_adversarial);
  out.grads.image.add(im_fake.grads, weights.branch_adversarial);
  return out;
}

GeneratorPhase generator_phase(const Networks& nets, const Batch& batch, const GeneratorForward& fwd,
                               const LossWeights& weights) {
  const LossWeights& w = weights;
  GeneratorPhase out;
  GeneratorGrads& g = out.grads;
  g.sketch_encoder = MlpGrads::zeros_like(nets.sketch_encoder);
  g.image_encoder = MlpGrads::zeros_like(nets.image_encoder);
  g.sketch_decoder = MlpGrads::zeros_like(nets.sketch_decoder);
  g.image_decoder = MlpGrads::zeros_like(nets.image_decoder);
  g.head = MlpGrads::zeros_like(nets.head.linear);
  if (nets.image_head) g.image_head = MlpGrads::zeros_like(nets.image_head->linear);

  const std::size_t b = batch.size();
  const std::size_t d = nets.feature_dim();
  const std::size_t m = nets.code_dim();
  Matrix d_sk_codes(b, m), d_im_codes(b, m), d_sk_decoded(b, d), d_im_decoded(b, d);

  // Generator side of the critic games; critics are held fixed.
  const CriticMean se_sk = critic_mean(nets.semantic_critic, fwd.sk_codes, true);
  const CriticMean se_im = critic_mean(nets.semantic_critic, fwd.im_codes, true);
  const CriticMean sk_fake = critic_mean(nets.sketch_critic, fwd.sk_decoded, true);
  const CriticMean im_fake = critic_mean(nets.image_critic, fwd.im_decoded, true);
  out.gen_semantic = -se_sk.value - se_im.value;
  out.gen_branch = -sk_fake.value - im_fake.value;
  axpy(d_sk_codes, -w.adversarial, se_sk.input_grad);
  axpy(d_im_codes, -w.adversarial, se_im.input_grad);
  axpy(d_sk_decoded, -w.branch_adversarial, sk_fake.input_grad);
  axpy(d_im_decoded, -w.branch_adversarial, im_fake.input_grad);

  // Cycle consistency. Terms with zero weight are still evaluated for the
  // report but not back-propagated.
  const Residual sk_feature_cycle = l1_mean(fwd.sk_recon, batch.x);
  const Residual sk_code_cycle = l1_mean(fwd.sk_code_cycle, batch.s);
  const Residual im_feature_cycle = l1_mean(fwd.im_recon, batch.y);
  const Residual im_code_cycle = l1_mean(fwd.im_code_cycle, batch.s);
  out.cyc_sk = sk_feature_cycle.value + sk_code_cycle.value;
  out.cyc_im = im_feature_cycle.value + im_code_cycle.value;
  if (w.cycle != 0) {
    auto r1 = nets.sketch_decoder.backward(fwd.sk_recon_tape, scaled(sk_feature_cycle.grad, w.cycle));
    g.sketch_decoder.add(r1.grads);
    axpy(d_sk_codes, 1, r1.input_grad);
    auto r2 = nets.sketch_encoder.backward(fwd.sk_code_cycle_tape, scaled(sk_code_cycle.grad, w.cycle));
    g.sketch_encoder.add(r2.grads);
    axpy(d_sk_decoded, 1, r2.input_grad);
    auto r3 = nets.image_decoder.backward(fwd.im_recon_tape, scaled(im_feature_cycle.grad, w.cycle));
    g.image_decoder.add(r3.grads);
    axpy(d_im_codes, 1, r3.input_grad);
    auto r4 = nets.image_encoder.backward(fwd.im_code_cycle_tape, scaled(im_code_cycle.grad, w.cycle));
    g.image_encoder.add(r4.grads);
    axpy(d_im_decoded, 1, r4.input_grad);
  }

  // Classification on the encoder outputs.
  const ClassificationLoss cls_sk = classification_loss(fwd.sk_codes, batch.labels, nets.head);
  const ClassificationLoss cls_im =
      classification_loss(fwd.im_codes, batch.labels, nets.head_for_images());
  out.cls_sk = cls_sk.value;
  out.cls_im = cls_im.value;
  if (w.classification != 0) {
    axpy(d_sk_codes, w.classification, cls_sk.codes_grad);
    axpy(d_im_codes, w.classification, cls_im.codes_grad);
    g.head.add(cls_sk.head, w.classification);
    if (g.image_head) {
      g.image_head->add(cls_im.head, w.classification);
    } else {
      g.head.add(cls_im.head, w.classification);
    }
  }

  // Identity matching.
  const Residual code_match = squared_mean(fwd.sk_codes, fwd.im_codes);
  const Residual sk_match = squared_mean(fwd.sk_decoded, batch.x);
  const Residual im_match = squared_mean(fwd.im_decoded, batch.y);
  out.iml = code_match.value + sk_match.value + im_match.value;
  if (w.identity != 0) {
    axpy(d_sk_codes, w.identity, code_match.grad);
    axpy(d_im_codes, -w.identity, code_match.grad);
    axpy(d_sk_decoded, w.identity, sk_match.grad);
    axpy(d_im_decoded, w.identity, im_match.grad);
  }

  // Back to the parameters of the first-stage passes; inputs are data.
  g.sketch_encoder.add(nets.sketch_encoder.backward(fwd.sk_codes_tape, d_sk_codes, false).grads);
  g.image_encoder.add(nets.image_encoder.backward(fwd.im_codes_tape, d_im_codes, false).grads);
  g.sketch_decoder.add(nets.sketch_decoder.backward(fwd.sk_decoded_tape, d_sk_decoded, false).grads);
  g.image_decoder.add(nets.image_decoder.backward(fwd.im_decoded_tape, d_im_decoded, false).grads);

  out.ps_total = w.adversarial * out.gen_semantic + w.branch_adversarial * out.gen_branch +
                 w.cycle * (out.cyc_sk + out.cyc_im) +
                 w.classification * (out.cls_sk + out.cls_im) + w.identity * out.iml;
  return out;
}

LossReport make_report(const CriticPhase& critic, const GeneratorPhase& generator,
                       const LossWeights& w) {
  LossReport r;
  r.wadv_se = critic.wadv_se;
  r.wadv_sk = critic.wadv_sk;
  r.wadv_im = critic.wadv_im;
  r.cyc_sk = generator.cyc_sk;
  r.cyc_im = generator.cyc_im;
  r.cls_sk = generator.cls_sk;
  r.cls_im = generator.cls_im;
  r.iml = generator.iml;
  r.gen = critic.gen_semantic + critic.gen_branch;
  r.total = w.adversarial * r.wadv_se + w.branch_adversarial * (r.wadv_sk + r.wadv_im) +
            w.cycle * (r.cyc_sk + r.cyc_im) + w.classification * (r.cls_sk + r.cls_im) +
            w.identity * r.iml;
  r.dis_total = critic.dis_total;
  r.ps_total = w.adversarial * critic.gen_semantic + w.branch_adversarial * critic.gen_branch +
               w.cycle * (r.cyc_sk + r.cyc_im) + w.classification * (r.cls_sk + r.cls_im) +
               w.identity * r.iml;
  return r;
}

Aggregate aggregate(const Batch& batch, const Networks& nets, const LossWeights& weights) {
  nets.validate();
  batch.validate(nets.classes());
  const GeneratorForward fwd = run_generators(nets, batch);
  CriticPhase critic = critic_phase(nets, batch, fwd, weights);
  GeneratorPhase generator = generator_phase(nets, batch, fwd, weights);
  Aggregate out;
  out.report = make_report(critic, generator, weights);
  out.critic_grads = std::move(critic.grads);
  out.generator_grads = std::move(generator.grads);
  return out;
}

}  // namespace wadcmsn
