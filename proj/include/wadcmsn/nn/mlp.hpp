// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wadcmsn/nn/matrix.hpp"

namespace wadcmsn {

enum class ActivationKind : std::uint8_t { identity = 0, relu = 1, leaky_relu = 2, tanh = 3 };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  Real slope = Real{0.2};  // only used by leaky_relu

  static Activation identity() { return {ActivationKind::identity, Real{0}}; }
  static Activation relu() { return {ActivationKind::relu, Real{0}}; }
  static Activation leaky_relu(Real slope) { return {ActivationKind::leaky_relu, slope}; }
  static Activation tanh() { return {ActivationKind::tanh, Real{0}}; }

  friend bool operator==(const Activation&, const Activation&) = default;
};

std::string to_string(const Activation& act);
Activation parse_activation(const std::string& text);

struct DenseLayer {
  Matrix weight;           // out x in
  std::vector<Real> bias;  // out
  Activation activation;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Layer sizes and activations without weights; used to build and to check
// checkpoints against a configuration.
struct MlpShape {
  std::vector<std::size_t> dims;  // input, hidden..., output
  std::vector<Activation> activations;  // one per layer (dims.size() - 1)
};

struct LayerGrad {
  Matrix weight;
  std::vector<Real> bias;
};

// Gradients mirroring an Mlp's parameter layout.
struct MlpGrads {
  std::vector<LayerGrad> layers;

  static MlpGrads zeros_like(const class Mlp& net);
  // this += scale * other
  void add(const MlpGrads& other, Real scale = Real{1});
  void scale(Real factor);
  // Flat views in the same order as Mlp::parameters(): w0, b0, w1, b1, ...
  std::vector<std::span<const Real>> blocks() const;
};

// Values cached by forward(); consumed by backward().
struct Tape {
  std::uint64_t stamp = 0;
  Matrix input;
  std::vector<Matrix> pre;   // per layer, before activation
  std::vector<Matrix> post;  // per layer, after activation
};

struct BackwardResult {
  MlpGrads grads;
  Matrix input_grad;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  // Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases.
  static Mlp glorot(const MlpShape& shape, std::mt19937_64& rng);

  std::size_t input_dim() const noexcept;
  std::size_t output_dim() const noexcept;
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept;
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  MlpShape shape() const;

  // Identifies the current parameter values; changes on every mutation so a
  // Tape recorded before an update is rejected by backward().
  std::uint64_t stamp() const noexcept { return stamp_; }

  // Mutable parameter blocks (w0, b0, w1, b1, ...). Invalidates existing tapes.
  std::vector<std::span<Real>> parameters();
  std::vector<std::span<const Real>> parameters() const;
  // Mutable access to one layer. Invalidates existing tapes.
  DenseLayer& mutable_layer(std::size_t i);

  // Output only; no tape.
  Matrix predict(const Matrix& batch) const;
  Matrix forward(const Matrix& batch, Tape& tape) const;
  // Gradients of sum(grad_output .* output) w.r.t. parameters and input.
  // With need_input_grad = false the input gradient is left empty.
  BackwardResult backward(const Tape& tape, const Matrix& grad_output,
                          bool need_input_grad = true) const;

  friend bool operator==(const Mlp& a, const Mlp& b) { return a.layers_ == b.layers_; }

 private:
  void touch() noexcept;
  void check_input(const Matrix& batch) const;

  std::vector<DenseLayer> layers_;
  std::uint64_t stamp_ = 0;
};

// Clamps every weight and bias into [-c, c]. Requires c > 0.
void clip_weights(Mlp& net, Real c);

// Largest absolute parameter value.
Real max_abs_parameter(const Mlp& net);

}  // namespace wadcmsn
