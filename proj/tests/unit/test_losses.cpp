// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "gradient_suite.hpp"
#include "test_support.hpp"
#include "wadcmsn/error.hpp"
#include "wadcmsn/losses/losses.hpp"

using namespace wadcmsn;
namespace wt = wadcmsn::testing;

namespace {

Mlp linear(const Matrix& w, std::vector<Real> b = {}) {
  if (b.empty()) b.assign(w.rows(), Real{0});
  return Mlp({DenseLayer{w, std::move(b), Activation::identity()}});
}

Matrix scaled_identity(std::size_t n, Real s) {
  Matrix m = Matrix::identity(n);
  for (auto& v : m.values()) v *= s;
  return m;
}

Networks small_networks(std::uint64_t seed, bool per_branch_head = false) {
  std::mt19937_64 rng(seed);
  Architecture arch;
  arch.feature_dim = 5;
  arch.code_dim = 3;
  arch.encoder_hidden = {4};
  arch.decoder_hidden = {4};
  arch.critic_hidden = {4};
  arch.per_branch_head = per_branch_head;
  return initialize_networks(arch, 3, rng);
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("cycle loss is a mean of per-row L1 norms") {
    // G = 2I and F = I, so F(G(v)) - v = v and G(F(s)) - s = s.
    const Mlp enc = linear(scaled_identity(2, 2));
    const Mlp dec = linear(Matrix::identity(2));
    const Matrix v = Matrix::from_rows({{1, -2}, {0.5, 3}});
    const Matrix s = Matrix::from_rows({{-1, 1}, {2, 0}});
    const CycleLoss c = cycle_loss(v, s, enc, dec);
    CHECK(c.value == doctest::Approx((3.0 + 3.5) / 2 + (2.0 + 2.0) / 2));
  }

  TEST_CASE("identity matching sums squared L2 distances, averaged over rows") {
    Batch b;
    b.x = Matrix::from_rows({{1, 0}, {0, 1}});
    b.y = Matrix::from_rows({{0, 0}, {2, 1}});
    b.s = Matrix::from_rows({{1, 1}, {0, 0}});
    b.labels = {0, 1};
    const Mlp id = linear(Matrix::identity(2));
    const Mlp twice = linear(scaled_identity(2, 2));
    // G_sk(x) = x, G_im(y) = 2y, F_sk(s) = s, F_im(s) = 2s.
    const IdentityMatching m = identity_matching_loss(b, id, twice, id, twice);
    const double codes = (1.0 + (16.0 + 1.0)) / 2;      // |x - 2y|^2
    const double sk = (1.0 + 1.0) / 2;                  // |s - x|^2
    const double im = ((4.0 + 4.0) + (4.0 + 1.0)) / 2;  // |2s - y|^2
    CHECK(m.value == doctest::Approx(codes + sk + im));
  }

  TEST_CASE("classification loss on hand-computed logits") {
    // Logits equal the codes.
    const ClassifierHead head = ClassifierHead::from_parameters(Matrix::identity(2), {0, 0});
    const Matrix codes = Matrix::from_rows({{2, 0}, {0, 0}});
    const ClassificationLoss l = classification_loss(codes, {0, 1}, head);
    const double row0 = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    const double row1 = std::log(2.0);
    CHECK(l.value == doctest::Approx((row0 + row1) / 2));
  }

  TEST_CASE("classification loss stays finite for large logits") {
    const ClassifierHead head = ClassifierHead::from_parameters(Matrix::identity(2), {0, 0});
    const Matrix codes = Matrix::from_rows({{1000, -1000}});
    const ClassificationLoss l = classification_loss(codes, {1}, head);
    CHECK(std::isfinite(l.value));
    CHECK(l.value == doctest::Approx(2000));
  }

  TEST_CASE("adversarial terms are differences of critic means") {
    // Linear critic f(v) = w . v + 1.
    const Mlp critic = linear(Matrix::from_rows({{1, -1}}), {1});
    const Matrix real = Matrix::from_rows({{3, 1}, {0, 0}});     // f: 3, 1
    const Matrix decoded = Matrix::from_rows({{1, 1}, {2, 5}});  // f: 1, -2
    CHECK(wadv_branch(real, decoded, critic).value == doctest::Approx(2.0 - (-0.5)));

    Batch b;
    b.s = real;
    b.x = Matrix::from_rows({{1, 0}, {0, 0}});
    b.y = Matrix::from_rows({{0, 1}, {0, 0}});
    b.labels = {0, 0};
    const Mlp id = linear(Matrix::identity(2));
    // 2 E f(s) - E f(x) - E f(y) = 4 - 1.5 - 0.5
    CHECK(wadv_semantic(b, id, id, critic).value == doctest::Approx(2.0));
  }

  TEST_CASE("report totals are the weighted sums of their components") {
    const Networks nets = small_networks(21);
    std::mt19937_64 rng(22);
    const Batch b = wt::random_batch(nets, 4, rng);
    LossWeights w;
    w.adversarial = Real(0.7);
    w.branch_adversarial = Real(1.3);
    w.cycle = Real(0.4);
    w.classification = Real(2.0);
    w.identity = Real(0.9);
    const LossReport r = aggregate(b, nets, w).report;
    const double total = w.adversarial * r.wadv_se + w.branch_adversarial * (r.wadv_sk + r.wadv_im) +
                         w.cycle * (r.cyc_sk + r.cyc_im) + w.classification * (r.cls_sk + r.cls_im) +
                         w.identity * r.iml;
    CHECK(r.total == doctest::Approx(total).epsilon(1e-12));
    CHECK(r.dis_total ==
          doctest::Approx(-(w.adversarial * r.wadv_se + w.branch_adversarial * (r.wadv_sk + r.wadv_im))).epsilon(1e-12));

    // The individual term functions agree with the staged evaluation.
    const auto iml = identity_matching_loss(b, nets.sketch_encoder, nets.image_encoder, nets.sketch_decoder,
                                            nets.image_decoder);
    CHECK(r.iml == doctest::Approx(iml.value).epsilon(1e-12));
    const auto cyc = cycle_loss(b.x, b.s, nets.sketch_encoder, nets.sketch_decoder);
    CHECK(r.cyc_sk == doctest::Approx(cyc.value).epsilon(1e-12));
    const auto se = wadv_semantic(b, nets.sketch_encoder, nets.image_encoder, nets.semantic_critic);
    CHECK(r.wadv_se == doctest::Approx(se.value).epsilon(1e-12));
    const auto cls = classification_loss(nets.image_encoder.predict(b.y), b.labels, nets.head_for_images());
    CHECK(r.cls_im == doctest::Approx(cls.value).epsilon(1e-12));
    // gen is the generator-dependent part, so the remainder only involves real samples.
    const auto mean = [](const Matrix& m) {
      double s = 0;
      for (Real v : m.values()) s += v;
      return s / double(m.rows());
    };
    const double real_part = 2 * mean(nets.semantic_critic.predict(b.s)) + mean(nets.sketch_critic.predict(b.x)) +
                             mean(nets.image_critic.predict(b.y));
    CHECK(r.wadv_se + r.wadv_sk + r.wadv_im - r.gen == doctest::Approx(real_part).epsilon(1e-12));
  }

  TEST_CASE("zero-weight terms contribute no gradient") {
    const Networks nets = small_networks(23);
    std::mt19937_64 rng(24);
    const Batch b = wt::random_batch(nets, 3, rng);
    LossWeights w;
    w.classification = 0;
    const Aggregate a = aggregate(b, nets, w);
    for (const auto& block : a.generator_grads.head.blocks())
      for (Real v : block) CHECK(v == 0);
    // The value is still reported.
    CHECK(a.report.cls_sk > 0);

    LossWeights none{0, 0, 0, 0, 0};
    const Aggregate z = aggregate(b, nets, none);
    for (const auto& block : z.generator_grads.sketch_encoder.blocks())
      for (Real v : block) CHECK(v == 0);
    for (const auto& block : z.critic_grads.sketch.blocks())
      for (Real v : block) CHECK(v == 0);
    CHECK(z.report.ps_total == 0);
  }

  TEST_CASE("objective gradients match finite differences on small instances") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CAPTURE(seed);
      const auto r = wt::check_objective_gradients(seed, 1e-5, 1e-6);
      CHECK(r.dis.max_error < 1e-4);
      CHECK(r.ps.max_error < 1e-4);
      CHECK(r.dis.checked > 0);
      CHECK(r.ps.checked > 0);
    }
  }

  TEST_CASE("per-branch head receives only the image-branch classification gradient") {
    const Networks nets = small_networks(25, true);
    REQUIRE(nets.image_head.has_value());
    std::mt19937_64 rng(26);
    const Batch b = wt::random_batch(nets, 3, rng);
    LossWeights w{0, 0, 0, 1, 0};
    const Aggregate a = aggregate(b, nets, w);
    REQUIRE(a.generator_grads.image_head.has_value());
    const auto expected_im = classification_loss(nets.image_encoder.predict(b.y), b.labels, *nets.image_head);
    const auto got = a.generator_grads.image_head->blocks();
    const auto want = expected_im.head.blocks();
    for (std::size_t k = 0; k < got.size(); ++k)
      for (std::size_t i = 0; i < got[k].size(); ++i) CHECK(got[k][i] == doctest::Approx(want[k][i]));
  }

  TEST_CASE("malformed batches are rejected") {
    const Networks nets = small_networks(27);
    std::mt19937_64 rng(28);
    Batch b = wt::random_batch(nets, 3, rng);
    b.labels[1] = 3;
    CHECK_THROWS_AS(b.validate(nets.classes()), ValidationError);
    Batch c = wt::random_batch(nets, 3, rng);
    c.y = Matrix(2, nets.feature_dim());
    CHECK_THROWS_AS(aggregate(c, nets), ShapeError);
  }
}
