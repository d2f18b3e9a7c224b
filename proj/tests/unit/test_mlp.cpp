// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "test_support.hpp"
#include "wadcmsn/error.hpp"
#include "wadcmsn/nn/kernels.hpp"
#include "wadcmsn/nn/mlp.hpp"
#include "wadcmsn/nn/rmsprop.hpp"

using namespace wadcmsn;
namespace wt = wadcmsn::testing;

namespace {

MlpShape shape_of(std::vector<std::size_t> dims, Activation hidden, Activation out) {
  MlpShape s;
  s.dims = std::move(dims);
  for (std::size_t i = 0; i + 2 < s.dims.size(); ++i) s.activations.push_back(hidden);
  s.activations.push_back(out);
  return s;
}

// Objective sum(W .* net(x)) for a fixed random weighting W.
double weighted_output(const Mlp& net, const Matrix& x, const Matrix& w) {
  const Matrix y = net.predict(x);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += double(y.values()[i]) * w.values()[i];
  return s;
}

}  // namespace

TEST_SUITE("mlp") {
  TEST_CASE("backward matches central differences for every activation") {
    std::mt19937_64 rng(11);
    for (Activation act : {Activation::identity(), Activation::relu(), Activation::leaky_relu(Real(0.2)),
                           Activation::tanh()}) {
      CAPTURE(to_string(act));
      Mlp net = wt::random_mlp(shape_of({5, 7, 6, 3}, act, Activation::tanh()), rng);
      const Matrix x = wt::random_matrix(4, 5, rng);
      const Matrix w = wt::random_matrix(4, 3, rng);
      Tape tape;
      const Matrix y = net.forward(x, tape);
      CHECK(y == net.predict(x));
      const BackwardResult r = net.backward(tape, w);
      wt::GradCheck gc;
      wt::check_blocks([&] { return weighted_output(net, x, w); }, net.parameters(), r.grads.blocks(), 1e-6, 1e-6,
                       "params", gc);
      CHECK(gc.max_error < 1e-6);

      Matrix xv = x;
      const std::vector<std::span<Real>> xs{xv.values()};
      const std::vector<std::span<const Real>> gx{r.input_grad.values()};
      wt::GradCheck gi;
      wt::check_blocks([&] { return weighted_output(net, xv, w); }, xs, gx, 1e-6, 1e-6, "input", gi);
      CHECK(gi.max_error < 1e-6);
    }
  }

  TEST_CASE("a tape recorded before a parameter change is rejected") {
    std::mt19937_64 rng(12);
    Mlp net = wt::random_mlp(shape_of({3, 4, 2}, Activation::relu(), Activation::identity()), rng);
    Tape tape;
    const Matrix x = wt::random_matrix(2, 3, rng);
    net.forward(x, tape);
    const Matrix g(2, 2, Real{1});
    CHECK_NOTHROW(net.backward(tape, g));
    net.parameters()[0][0] += Real{0.1};
    CHECK_THROWS_AS(net.backward(tape, g), ContractError);
    net.forward(x, tape);
    net.mutable_layer(1).bias[0] = 0;
    CHECK_THROWS_AS(net.backward(tape, g), ContractError);

    Mlp other = net;
    Tape fresh;
    other.forward(x, fresh);
    other.parameters();
    CHECK_THROWS_AS(other.backward(fresh, g), ContractError);
  }

  TEST_CASE("input width mismatch is a shape error") {
    std::mt19937_64 rng(13);
    const Mlp net = wt::random_mlp(shape_of({3, 4, 2}, Activation::relu(), Activation::identity()), rng);
    CHECK_THROWS_AS(net.predict(Matrix(2, 4)), ShapeError);
  }

  TEST_CASE("glorot init stays inside its bound and zeroes biases") {
    std::mt19937_64 rng(14);
    const Mlp net = Mlp::glorot(shape_of({512, 1024, 64}, Activation::leaky_relu(Real(0.2)), Activation::identity()),
                                rng);
    CHECK(net.parameter_count() == 512 * 1024 + 1024 + 1024 * 64 + 64);
    const double bound0 = std::sqrt(6.0 / (512 + 1024));
    for (Real v : net.layer(0).weight.values()) CHECK_LE(std::abs(v), bound0);
    for (Real v : net.layer(1).bias) CHECK(v == 0);
  }

  TEST_CASE("activation names round-trip") {
    for (Activation act : {Activation::identity(), Activation::relu(), Activation::leaky_relu(Real(0.2)),
                           Activation::tanh()}) {
      CHECK(parse_activation(to_string(act)).kind == act.kind);
    }
    CHECK_THROWS(parse_activation("softplus"));
  }

  TEST_CASE("clip_weights bounds every parameter") {
    std::mt19937_64 rng(15);
    Mlp net = wt::random_mlp(shape_of({6, 8, 1}, Activation::leaky_relu(Real(0.2)), Activation::identity()), rng);
    CHECK(max_abs_parameter(net) > Real(0.01));
    const Mlp before = net;
    clip_weights(net, Real(0.01));
    CHECK(max_abs_parameter(net) <= Real(0.01));
    const auto a = before.parameters();
    const auto b = net.parameters();
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t i = 0; i < a[k].size(); ++i)
        CHECK(b[k][i] == std::clamp(a[k][i], Real(-0.01), Real(0.01)));
    CHECK_THROWS(clip_weights(net, 0));
  }
}

TEST_SUITE("mlp") {
  TEST_CASE("rmsprop follows its update rule") {
    RmsPropConfig cfg;
    cfg.learning_rate = Real(0.1);
    cfg.decay = Real(0.9);
    cfg.epsilon = Real(1e-8);
    std::vector<Real> p{1.0, -2.0, 0.5};
    const std::vector<Real> g{0.5, 0.0, -4.0};
    const std::vector<std::span<Real>> ps{p};
    const std::vector<std::span<const Real>> gs{g};
    RmsPropState st = RmsPropState::for_blocks(cfg, {std::span<const Real>(p)});
    std::vector<double> acc(3, 0.0), ref(p.begin(), p.end());
    for (int step = 0; step < 3; ++step) {
      rmsprop_step(ps, gs, st);
      for (std::size_t i = 0; i < 3; ++i) {
        acc[i] = 0.9 * acc[i] + 0.1 * g[i] * g[i];
        ref[i] -= 0.1 * g[i] / (std::sqrt(acc[i]) + 1e-8);
        CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-14));
        CHECK(st.accumulators[0][i] == doctest::Approx(acc[i]).epsilon(1e-14));
      }
    }
    // The first step moves each coordinate with a nonzero gradient by
    // lr / sqrt(1 - decay) against the gradient's sign.
    std::vector<Real> q{0.0, 0.0};
    const std::vector<Real> h{3.0, -1e-3};
    RmsPropState fresh = RmsPropState::for_blocks(cfg, {std::span<const Real>(q)});
    rmsprop_step({std::span<Real>(q)}, {std::span<const Real>(h)}, fresh);
    CHECK(q[0] == doctest::Approx(-0.1 / std::sqrt(0.1)).epsilon(1e-7));
    CHECK(q[1] == doctest::Approx(0.1 / std::sqrt(0.1)).epsilon(1e-4));
  }

  TEST_CASE("rmsprop with zero learning rate leaves parameters untouched") {
    std::mt19937_64 rng(16);
    Mlp net = wt::random_mlp(shape_of({4, 5, 2}, Activation::relu(), Activation::identity()), rng);
    const Mlp before = net;
    RmsPropConfig cfg;
    cfg.learning_rate = 0;
    RmsPropState st = RmsPropState::for_net(cfg, net);
    Tape tape;
    net.forward(wt::random_matrix(3, 4, rng), tape);
    const auto r = net.backward(tape, wt::random_matrix(3, 2, rng));
    rmsprop_step(net, r.grads, st);
    CHECK(net == before);
    CHECK(st.accumulators[0] != std::vector<Real>(st.accumulators[0].size(), Real{0}));
  }

  TEST_CASE("rmsprop rejects mismatched blocks and bad settings") {
    std::vector<Real> p(3), g(2);
    RmsPropState st = RmsPropState::for_blocks({}, {std::span<const Real>(p)});
    CHECK_THROWS_AS(rmsprop_step({std::span<Real>(p)}, {std::span<const Real>(g)}, st), ShapeError);
    RmsPropConfig bad;
    bad.decay = 1;
    CHECK_THROWS_AS(RmsPropState::for_blocks(bad, {std::span<const Real>(p)}), ValidationError);
  }
}
