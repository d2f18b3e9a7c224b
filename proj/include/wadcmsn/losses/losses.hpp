// SPDX-License-Identifier: Apache-2.0
//
// Loss terms of the adversarial cross-modal model. Each term returns its value
// together with plain gradients of that value; callers choose the sign
// (critics ascend the adversarial values, generators descend).
//
// Reductions: expectations are batch means, norms sum over coordinates.
#pragma once

#include <optional>
#include <vector>

#include "wadcmsn/losses/networks.hpp"
#include "wadcmsn/nn/matrix.hpp"
#include "wadcmsn/nn/mlp.hpp"

namespace wadcmsn {

// Coefficients of the four objective groups. Setting one to zero removes the
// term from both objectives without changing anything else.
struct LossWeights {
  Real adversarial = 1;  // semantic critic game
  Real branch_adversarial = 1;  // sketch/image critic games on decoded features
  Real cycle = 1;
  Real classification = 1;
  Real identity = 1;
};

struct LossReport {
  Real wadv_se = 0;
  Real wadv_sk = 0;
  Real wadv_im = 0;
  Real cyc_sk = 0;
  Real cyc_im = 0;
  Real cls_sk = 0;
  Real cls_im = 0;
  Real iml = 0;
  Real gen = 0;        // generator-dependent part of the three adversarial values
  Real total = 0;      // weighted sum of the eight components above gen
  Real dis_total = 0;  // minimized by the critics
  Real ps_total = 0;   // minimized by generators and classifier head
};

// ---- individual terms ------------------------------------------------------

struct SemanticAdversarial {
  Real value = 0;  // 2 E[f(s)] - E[f(G_sk(x))] - E[f(G_im(y))]
  MlpGrads critic;
  MlpGrads sketch_encoder;
  MlpGrads image_encoder;
};
SemanticAdversarial wadv_semantic(const Batch& batch, const Mlp& sketch_encoder,
                                  const Mlp& image_encoder, const Mlp& critic);

struct BranchAdversarial {
  Real value = 0;  // E[f(real)] - E[f(decoded)]
  MlpGrads critic;
  Matrix decoded_grad;
};
BranchAdversarial wadv_branch(const Matrix& real, const Matrix& decoded, const Mlp& critic);

struct CycleLoss {
  Real value = 0;  // E||F(G(v)) - v||_1 + E||G(F(s)) - s||_1
  MlpGrads encoder;
  MlpGrads decoder;
};
CycleLoss cycle_loss(const Matrix& features, const Matrix& codes, const Mlp& encoder,
                     const Mlp& decoder);

struct ClassificationLoss {
  Real value = 0;  // -E[log softmax(head(codes))[label]]
  MlpGrads head;
  Matrix codes_grad;
};
ClassificationLoss classification_loss(const Matrix& codes, const std::vector<std::size_t>& labels,
                                       const ClassifierHead& head);

struct IdentityMatching {
  Real value = 0;  // E||G_sk(x)-G_im(y)||^2 + E||F_sk(s)-x||^2 + E||F_im(s)-y||^2
  MlpGrads sketch_encoder;
  MlpGrads image_encoder;
  MlpGrads sketch_decoder;
  MlpGrads image_decoder;
};
IdentityMatching identity_matching_loss(const Batch& batch, const Mlp& sketch_encoder,
                                        const Mlp& image_encoder, const Mlp& sketch_decoder,
                                        const Mlp& image_decoder);

// ---- staged evaluation shared with the trainer ------------------------------

// Every generator forward pass the objectives need, with tapes.
struct GeneratorForward {
  Tape sk_codes_tape, im_codes_tape;        // G_sk(x), G_im(y)
  Tape sk_decoded_tape, im_decoded_tape;    // F_sk(s), F_im(s)
  Tape sk_recon_tape, im_recon_tape;        // F_sk(G_sk(x)), F_im(G_im(y))
  Tape sk_code_cycle_tape, im_code_cycle_tape;  // G_sk(F_sk(s)), G_im(F_im(s))
  Matrix sk_codes, im_codes;
  Matrix sk_decoded, im_decoded;
  Matrix sk_recon, im_recon;
  Matrix sk_code_cycle, im_code_cycle;
};
GeneratorForward run_generators(const Networks& nets, const Batch& batch);

struct CriticGrads {
  MlpGrads semantic;
  MlpGrads sketch;
  MlpGrads image;
};

struct CriticPhase {
  Real wadv_se = 0, wadv_sk = 0, wadv_im = 0;
  Real gen_semantic = 0;  // -E[f_se(G_sk(x))] - E[f_se(G_im(y))]
  Real gen_branch = 0;    // -E[f_sk(F_sk(s))] - E[f_im(F_im(s))]
  Real dis_total = 0;
  CriticGrads grads;  // of dis_total
};
CriticPhase critic_phase(const Networks& nets, const Batch& batch, const GeneratorForward& fwd,
                         const LossWeights& weights);

struct GeneratorGrads {
  MlpGrads sketch_encoder;
  MlpGrads image_encoder;
  MlpGrads sketch_decoder;
  MlpGrads image_decoder;
  MlpGrads head;
  std::optional<MlpGrads> image_head;
};

struct GeneratorPhase {
  Real gen_semantic = 0, gen_branch = 0;
  Real cyc_sk = 0, cyc_im = 0, cls_sk = 0, cls_im = 0, iml = 0;
  Real ps_total = 0;
  GeneratorGrads grads;  // of ps_total
};
// `fwd` must come from the current generator parameters; the critics may have
// been updated since.
GeneratorPhase generator_phase(const Networks& nets, const Batch& batch, const GeneratorForward& fwd,
                               const LossWeights& weights);

// Combines both phases at a single parameter point.
LossReport make_report(const CriticPhase& critic, const GeneratorPhase& generator,
                       const LossWeights& weights);

struct Aggregate {
  LossReport report;
  CriticGrads critic_grads;        // of dis_total w.r.t. critic parameters
  GeneratorGrads generator_grads;  // of ps_total w.r.t. generators and head
};
Aggregate aggregate(const Batch& batch, const Networks& nets, const LossWeights& weights = {});

}  // namespace wadcmsn
