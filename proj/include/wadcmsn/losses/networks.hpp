// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "wadcmsn/nn/matrix.hpp"
#include "wadcmsn/nn/mlp.hpp"

namespace wadcmsn {

// Linear-softmax classifier over semantic codes, stored as a one-layer
// identity-activation Mlp so it shares the optimizer and checkpoint paths.
struct ClassifierHead {
  Mlp linear;

  static ClassifierHead glorot(std::size_t code_dim, std::size_t classes, std::mt19937_64& rng);
  static ClassifierHead from_parameters(Matrix weight, std::vector<Real> bias);

  std::size_t classes() const noexcept { return linear.output_dim(); }
  std::size_t code_dim() const noexcept { return linear.input_dim(); }
  const Matrix& weight() const { return linear.layer(0).weight; }
  const std::vector<Real>& bias() const { return linear.layer(0).bias; }

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

// One training batch. Row i of x and y are a sketch and an image of the same
// class (not the same instance); row i of s is that class's semantic code.
struct Batch {
  Matrix x;                         // sketch features, b x d
  Matrix y;                         // image features, b x d
  Matrix s;                         // semantic codes, b x M
  std::vector<std::size_t> labels;  // seen-class index per row

  std::size_t size() const noexcept { return labels.size(); }
  // Shape and label-range checks; throws ShapeError / ValidationError.
  void validate(std::size_t classes) const;
};

// The seven networks of the model plus the classifier head(s).
struct Networks {
  Mlp sketch_encoder;   // features -> codes
  Mlp image_encoder;    // features -> codes
  Mlp sketch_decoder;   // codes -> features
  Mlp image_decoder;    // codes -> features
  Mlp semantic_critic;  // codes -> score
  Mlp sketch_critic;    // features -> score
  Mlp image_critic;     // features -> score
  ClassifierHead head;  // shared by both branches unless image_head is set
  std::optional<ClassifierHead> image_head;

  const ClassifierHead& head_for_images() const { return image_head ? *image_head : head; }

  std::size_t feature_dim() const noexcept { return sketch_encoder.input_dim(); }
  std::size_t code_dim() const noexcept { return sketch_encoder.output_dim(); }
  std::size_t classes() const noexcept { return head.classes(); }

  // Throws ShapeError unless every network chains with the others.
  void validate() const;

  friend bool operator==(const Networks&, const Networks&) = default;
};

struct Architecture {
  std::size_t feature_dim = 512;
  std::size_t code_dim = 64;
  std::vector<std::size_t> encoder_hidden{1024};
  std::vector<std::size_t> decoder_hidden{1024};
  std::vector<std::size_t> critic_hidden{512};
  Real leaky_slope = Real{0.2};
  bool per_branch_head = false;
};

// Hidden layers use leaky-relu, output layers identity.
MlpShape encoder_shape(const Architecture& arch);
MlpShape decoder_shape(const Architecture& arch);
MlpShape critic_shape(const Architecture& arch, std::size_t input_dim);

// Draws every network in a fixed order from one generator.
Networks initialize_networks(const Architecture& arch, std::size_t classes, std::mt19937_64& rng);

}  // namespace wadcmsn
