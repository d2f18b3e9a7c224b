// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/nn/mlp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "wadcmsn/error.hpp"
#include "wadcmsn/nn/kernels.hpp"

namespace wadcmsn {

namespace {

std::atomic<std::uint64_t> g_next_stamp{1};

std::uint64_t fresh_stamp() noexcept { return g_next_stamp.fetch_add(1, std::memory_order_relaxed); }

void activate(const Activation& act, const Matrix& pre, Matrix& post) {
  post = pre;
  if (act.kind == ActivationKind::identity) return;
  Real* v = post.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(post.size());
  switch (act.kind) {
    case ActivationKind::relu:
#pragma omp parallel for simd schedule(static) if (n >= 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = v[i] > 0 ? v[i] : Real{0};
      break;
    case ActivationKind::leaky_relu: {
      const Real slope = act.slope;
#pragma omp parallel for simd schedule(static) if (n >= 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = v[i] > 0 ? v[i] : slope * v[i];
      break;
    }
    case ActivationKind::tanh:
#pragma omp parallel for schedule(static) if (n >= 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
      break;
    case ActivationKind::identity:
      break;
  }
}

// grad <- grad .* act'(pre), using post where it is cheaper.
void activation_backward(const Activation& act, const Matrix& pre, const Matrix& post,
                         Matrix& grad) {
  if (act.kind == ActivationKind::identity) return;
  Real* g = grad.data();
  const Real* z = pre.data();
  const Real* a = post.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(grad.size());
  switch (act.kind) {
    case ActivationKind::relu:
#pragma omp parallel for simd schedule(static) if (n >= 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) g[i] = z[i] > 0 ? g[i] : Real{0};
      break;
    case ActivationKind::leaky_relu: {
      const Real slope = act.slope;
#pragma omp parallel for simd schedule(static) if (n >= 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) g[i] = z[i] > 0 ? g[i] : slope * g[i];
      break;
    }
    case ActivationKind::tanh:
#pragma omp parallel for simd schedule(static) if (n >= 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) g[i] *= Real{1} - a[i] * a[i];
      break;
    case ActivationKind::identity:
      break;
  }
}

}  // namespace

std::string to_string(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::identity:
      return "identity";
    case ActivationKind::relu:
      return "relu";
    case ActivationKind::leaky_relu:
      return "leaky-relu";
    case ActivationKind::tanh:
      return "tanh";
  }
  return "unknown";
}

Activation parse_activation(const std::string& text) {
  if (text == "identity" || text == "linear") return Activation::identity();
  if (text == "relu") return Activation::relu();
  if (text == "tanh") return Activation::tanh();
  if (text == "leaky-relu" || text == "leaky_relu") return Activation::leaky_relu(Real{0.2});
  throw ValidationError("unknown activation '" + text + "'");
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
  MlpGrads g;
  g.layers.reserve(net.layer_count());
  for (const auto& l : net.layers()) {
    g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<Real>(l.bias.size())});
  }
  return g;
}

void MlpGrads::add(const MlpGrads& other, Real scale) {
  if (other.layers.size() != layers.size()) throw ShapeError("MlpGrads::add: layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& dst = layers[i];
    const auto& src = other.layers[i];
    require_same_shape(dst.weight, src.weight, "MlpGrads::add weight");
    if (dst.bias.size() != src.bias.size()) throw ShapeError("MlpGrads::add: bias length mismatch");
    auto w = dst.weight.values();
    auto sw = src.weight.values();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += scale * sw[k];
    for (std::size_t k = 0; k < dst.bias.size(); ++k) dst.bias[k] += scale * src.bias[k];
  }
}

void MlpGrads::scale(Real factor) {
  for (auto& l : layers) {
    for (auto& v : l.weight.values()) v *= factor;
    for (auto& v : l.bias) v *= factor;
  }
}

std::vector<std::span<const Real>> MlpGrads::blocks() const {
  std::vector<std::span<const Real>> out;
  out.reserve(layers.size() * 2);
  for (const auto& l : layers) {
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
  return out;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)), stamp_(fresh_stamp()) {
  if (layers_.empty()) throw ShapeError("Mlp needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weight.rows()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias length differs from output width");
    }
    if (i > 0 && l.in_dim() != layers_[i - 1].out_dim()) {
      throw ShapeError("layer " + std::to_string(i) + ": input width " + std::to_string(l.in_dim()) +
                       " does not chain with previous output " +
                       std::to_string(layers_[i - 1].out_dim()));
    }
  }
}

Mlp Mlp::glorot(const MlpShape& shape, std::mt19937_64& rng) {
  if (shape.dims.size() < 2 || shape.activations.size() + 1 != shape.dims.size()) {
    throw ShapeError("MlpShape: need dims.size() == activations.size() + 1 >= 2");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < shape.dims.size(); ++i) {
    const std::size_t in = shape.dims[i];
    const std::size_t out = shape.dims[i + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix w(out, in);
    for (auto& v : w.values()) v = static_cast<Real>(dist(rng));
    layers.push_back({std::move(w), std::vector<Real>(out, Real{0}), shape.activations[i]});
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Mlp::output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

MlpShape Mlp::shape() const {
  MlpShape s;
  if (layers_.empty()) return s;
  s.dims.push_back(input_dim());
  for (const auto& l : layers_) {
    s.dims.push_back(l.out_dim());
    s.activations.push_back(l.activation);
  }
  return s;
}

void Mlp::touch() noexcept { stamp_ = fresh_stamp(); }

std::vector<std::span<Real>> Mlp::parameters() {
  touch();
  std::vector<std::span<Real>> out;
  out.reserve(layers_.size() * 2);
  for (auto& l : layers_) {
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const Real>> Mlp::parameters() const {
  std::vector<std::span<const Real>> out;
  out.reserve(layers_.size() * 2);
  for (const auto& l : layers_) {
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
  return out;
}

DenseLayer& Mlp::mutable_layer(std::size_t i) {
  touch();
  return layers_.at(i);
}

void Mlp::check_input(const Matrix& batch) const {
  if (layers_.empty()) throw ContractError("forward on an empty Mlp");
  if (batch.cols() != input_dim()) {
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                     " columns, network expects " + std::to_string(input_dim()));
  }
  if (!batch.all_finite()) throw NumericError("forward: batch contains non-finite values");
}

Matrix Mlp::predict(const Matrix& batch) const {
  check_input(batch);
  Matrix current = batch;
  for (const auto& l : layers_) {
    Matrix pre = kernels::matmul_nt(current, l.weight);
    kernels::add_row_broadcast(pre, l.bias);
    activate(l.activation, pre, current);
  }
  return current;
}

Matrix Mlp::forward(const Matrix& batch, Tape& tape) const {
  check_input(batch);
  tape.stamp = stamp_;
  tape.input = batch;
  tape.pre.resize(layers_.size());
  tape.post.resize(layers_.size());
  const Matrix* current = &tape.input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    tape.pre[i] = kernels::matmul_nt(*current, l.weight);
    kernels::add_row_broadcast(tape.pre[i], l.bias);
    activate(l.activation, tape.pre[i], tape.post[i]);
    current = &tape.post[i];
  }
  return tape.post.back();
}

BackwardResult Mlp::backward(const Tape& tape, const Matrix& grad_output,
                             bool need_input_grad) const {
  if (tape.stamp != stamp_ || tape.pre.size() != layers_.size()) {
    throw ContractError("backward: tape was not produced by this network's current parameters");
  }
  require_shape(grad_output, tape.post.back().rows(), output_dim(), "backward grad_output");
  BackwardResult result;
  result.grads.layers.resize(layers_.size());
  Matrix delta = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& l = layers_[i];
    activation_backward(l.activation, tape.pre[i], tape.post[i], delta);
    const Matrix& layer_input = i == 0 ? tape.input : tape.post[i - 1];
    result.grads.layers[i].weight = kernels::matmul_tn(delta, layer_input);
    result.grads.layers[i].bias = kernels::column_sums(delta);
    if (i > 0 || need_input_grad) delta = kernels::matmul(delta, l.weight);
  }
  if (!need_input_grad) delta = Matrix();
  result.input_grad = std::move(delta);
  return result;
}

void clip_weights(Mlp& net, Real c) {
  if (!(c > 0)) throw ValidationError("clip_weights: clip bound must be positive");
  for (auto block : net.parameters()) {
    for (auto& v : block) v = std::clamp(v, -c, c);
  }
}

Real max_abs_parameter(const Mlp& net) {
  Real m = 0;
  for (auto block : net.parameters()) {
    for (Real v : block) m = std::max(m, std::abs(v));
  }
  return m;
}

}  // namespace wadcmsn
