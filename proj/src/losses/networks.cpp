// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/losses/networks.hpp"

#include <string>

#include "wadcmsn/error.hpp"

namespace wadcmsn {

namespace {

MlpShape chain(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Real slope) {
  MlpShape s;
  s.dims.push_back(in);
  for (std::size_t h : hidden) {
    s.dims.push_back(h);
    s.activations.push_back(Activation::leaky_relu(slope));
  }
  s.dims.push_back(out);
  s.activations.push_back(Activation::identity());
  return s;
}

void expect_dims(const Mlp& net, std::size_t in, std::size_t out, const char* name) {
  if (net.input_dim() != in || net.output_dim() != out) {
    throw ShapeError(std::string(name) + ": expected " + std::to_string(in) + " -> " +
                     std::to_string(out) + ", got " + std::to_string(net.input_dim()) + " -> " +
                     std::to_string(net.output_dim()));
  }
}

}  // namespace

ClassifierHead ClassifierHead::glorot(std::size_t code_dim, std::size_t classes, std::mt19937_64& rng) {
  return {Mlp::glorot({{code_dim, classes}, {Activation::identity()}}, rng)};
}

ClassifierHead ClassifierHead::from_parameters(Matrix weight, std::vector<Real> bias) {
  std::vector<DenseLayer> layers;
  layers.push_back({std::move(weight), std::move(bias), Activation::identity()});
  return {Mlp(std::move(layers))};
}

void Batch::validate(std::size_t classes) const {
  const std::size_t b = labels.size();
  if (x.rows() != b || y.rows() != b || s.rows() != b) {
    throw ShapeError("batch: x, y, s and labels must share the batch dimension");
  }
  if (x.cols() != y.cols()) throw ShapeError("batch: sketch and image feature widths differ");
  for (std::size_t label : labels) {
    if (label >= classes) {
      throw ValidationError("batch: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
  }
}

void Networks::validate() const {
  const std::size_t d = feature_dim();
  const std::size_t m = code_dim();
  expect_dims(sketch_encoder, d, m, "sketch encoder");
  expect_dims(image_encoder, d, m, "image encoder");
  expect_dims(sketch_decoder, m, d, "sketch decoder");
  expect_dims(image_decoder, m, d, "image decoder");
  expect_dims(semantic_critic, m, 1, "semantic critic");
  expect_dims(sketch_critic, d, 1, "sketch critic");
  expect_dims(image_critic, d, 1, "image critic");
  expect_dims(head.linear, m, head.classes(), "classifier head");
  if (head.linear.layer_count() != 1) throw ShapeError("classifier head must be a single layer");
  if (image_head) {
    expect_dims(image_head->linear, m, head.classes(), "image classifier head");
    if (image_head->linear.layer_count() != 1) throw ShapeError("classifier head must be a single layer");
  }
}

MlpShape encoder_shape(const Architecture& arch) {
  return chain(arch.feature_dim, arch.encoder_hidden, arch.code_dim, arch.leaky_slope);
}

MlpShape decoder_shape(const Architecture& arch) {
  return chain(arch.code_dim, arch.decoder_hidden, arch.feature_dim, arch.leaky_slope);
}

MlpShape critic_shape(const Architecture& arch, std::size_t input_dim) {
  return chain(input_dim, arch.critic_hidden, 1, arch.leaky_slope);
}

Networks initialize_networks(const Architecture& arch, std::size_t classes, std::mt19937_64& rng) {
  if (classes < 1) throw ValidationError("model needs at least one class");
  Networks n;
  n.sketch_encoder = Mlp::glorot(encoder_shape(arch), rng);
  n.image_encoder = Mlp::glorot(encoder_shape(arch), rng);
  n.sketch_decoder = Mlp::glorot(decoder_shape(arch), rng);
  n.image_decoder = Mlp::glorot(decoder_shape(arch), rng);
  n.semantic_critic = Mlp::glorot(critic_shape(arch, arch.code_dim), rng);
  n.sketch_critic = Mlp::glorot(critic_shape(arch, arch.feature_dim), rng);
  n.image_critic = Mlp::glorot(critic_shape(arch, arch.feature_dim), rng);
  n.head = ClassifierHead::glorot(arch.code_dim, classes, rng);
  if (arch.per_branch_head) n.image_head = ClassifierHead::glorot(arch.code_dim, classes, rng);
  return n;
}

}  // namespace wadcmsn
