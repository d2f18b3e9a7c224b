// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wadcmsn/error.hpp"
#include "wadcmsn/trainer/trainer.hpp"

namespace wadcmsn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'W', 'A', 'D', 'C', 'M', 'S', 'N', '\0'};

std::uint64_t fnv1a(const std::string& bytes, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void u64(std::uint64_t v) { pod(v); }
  void reals(std::span<const Real> v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(Real));
  }
  void string(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void mlp(const Mlp& net) {
    u64(net.layer_count());
    for (const auto& layer : net.layers()) {
      u64(layer.out_dim());
      u64(layer.in_dim());
      pod(static_cast<std::uint8_t>(layer.activation.kind));
      pod(layer.activation.slope);
      reals(layer.weight.values());
      reals(layer.bias);
    }
  }
  void state(const RmsPropState& s) {
    pod(s.config.learning_rate);
    pod(s.config.decay);
    pod(s.config.epsilon);
    u64(s.accumulators.size());
    for (const auto& a : s.accumulators) {
      u64(a.size());
      reals(a);
    }
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  // Counts are bounded by the remaining bytes so corrupt sizes fail cleanly
  // instead of triggering huge allocations.
  std::size_t count(std::size_t element_size) {
    const std::uint64_t n = u64();
    if (element_size > 0 && n > (end_ - pos_) / element_size) fail();
    return static_cast<std::size_t>(n);
  }
  void reals(Real* out, std::size_t n) { take(out, n * sizeof(Real)); }
  std::string string() {
    const std::size_t n = count(1);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Mlp mlp() {
    const std::size_t layers = count(1);
    std::vector<DenseLayer> out;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t rows = count(sizeof(Real));
      const std::size_t cols = count(sizeof(Real));
      if (cols != 0 && rows > (end_ - pos_) / sizeof(Real) / cols) fail();
      DenseLayer layer;
      const auto kind = pod<std::uint8_t>();
      if (kind > static_cast<std::uint8_t>(ActivationKind::tanh)) fail();
      layer.activation.kind = static_cast<ActivationKind>(kind);
      layer.activation.slope = pod<Real>();
      layer.weight = Matrix(rows, cols);
      reals(layer.weight.data(), rows * cols);
      layer.bias.resize(rows);
      reals(layer.bias.data(), rows);
      out.push_back(std::move(layer));
    }
    try {
      return Mlp(std::move(out));
    } catch (const Error& e) {
      throw ParseError(std::string("checkpoint holds an invalid network: ") + e.what());
    }
  }
  RmsPropState state() {
    RmsPropState s;
    s.config.learning_rate = pod<Real>();
    s.config.decay = pod<Real>();
    s.config.epsilon = pod<Real>();
    const std::size_t blocks = count(8);
    for (std::size_t i = 0; i < blocks; ++i) {
      std::vector<Real> a(count(sizeof(Real)));
      reals(a.data(), a.size());
      s.accumulators.push_back(std::move(a));
    }
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  [[noreturn]] void fail() const { throw ParseError("checkpoint is truncated or corrupt"); }
  void take(void* out, std::size_t n) {
    if (n > end_ - pos_) fail();
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void require_state_matches(const RmsPropState& s, const Mlp& net, const char* name) {
  const auto params = net.parameters();
  bool ok = s.accumulators.size() == params.size();
  for (std::size_t i = 0; ok && i < params.size(); ++i) ok = s.accumulators[i].size() == params[i].size();
  if (!ok) throw ParseError(std::string("checkpoint optimizer state for ") + name + " does not match its network");
}

}  // namespace

void checkpoint_save(const ModelBundle& bundle, const std::filesystem::path& path) {
  const auto& n = bundle.nets;
  const auto& o = bundle.optimizers;
  Writer w;
  w.bytes().append(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint32_t>(sizeof(Real)));
  w.u64(bundle.iteration);
  w.u64(bundle.classes.size());
  for (const auto& c : bundle.classes) w.string(c);
  w.pod(static_cast<std::uint8_t>(n.image_head ? 1 : 0));
  for (const Mlp* net : {&n.sketch_encoder, &n.image_encoder, &n.sketch_decoder, &n.image_decoder,
                         &n.semantic_critic, &n.sketch_critic, &n.image_critic, &n.head.linear}) {
    w.mlp(*net);
  }
  if (n.image_head) w.mlp(n.image_head->linear);
  for (const RmsPropState* s : {&o.sketch_encoder, &o.image_encoder, &o.sketch_decoder, &o.image_decoder,
                                &o.semantic_critic, &o.sketch_critic, &o.image_critic, &o.head}) {
    w.state(*s);
  }
  if (n.image_head) {
    if (!o.image_head) throw ContractError("bundle has an image head without optimizer state");
    w.state(*o.image_head);
  }
  w.u64(fnv1a(w.bytes(), w.bytes().size()));

  // Write beside the target and rename so a failed save never leaves a
  // half-written checkpoint under the final name.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write checkpoint " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw ValidationError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelBundle checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = sizeof kMagic + 2 * sizeof(std::uint32_t);
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError(path.string() + " is not a checkpoint file");
  }
  std::uint32_t version = 0;
  std::uint32_t real_size = 0;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  std::memcpy(&real_size, bytes.data() + sizeof kMagic + sizeof version, sizeof real_size);
  if (version != kCheckpointVersion) {
    throw IncompatibleError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                            ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  if (real_size != sizeof(Real)) {
    throw IncompatibleError("checkpoint " + path.string() + " stores " + std::to_string(real_size * 8) +
                            "-bit reals, this build uses " + std::to_string(sizeof(Real) * 8) + "-bit");
  }
  if (bytes.size() < header + sizeof(std::uint64_t)) throw ParseError("checkpoint is truncated or corrupt");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (stored != fnv1a(bytes, body)) throw ParseError("checkpoint " + path.string() + " fails its checksum");

  Reader r(bytes, body);
  r.pod<std::array<char, 8>>();
  r.pod<std::uint32_t>();
  r.pod<std::uint32_t>();
  ModelBundle b;
  b.iteration = r.u64();
  const std::size_t classes = r.count(8);
  for (std::size_t i = 0; i < classes; ++i) b.classes.push_back(r.string());
  const bool image_head = r.pod<std::uint8_t>() != 0;
  auto& n = b.nets;
  for (Mlp* net : {&n.sketch_encoder, &n.image_encoder, &n.sketch_decoder, &n.image_decoder,
                   &n.semantic_critic, &n.sketch_critic, &n.image_critic, &n.head.linear}) {
    *net = r.mlp();
  }
  if (image_head) n.image_head = ClassifierHead{r.mlp()};
  auto& o = b.optimizers;
  for (RmsPropState* s : {&o.sketch_encoder, &o.image_encoder, &o.sketch_decoder, &o.image_decoder,
                          &o.semantic_critic, &o.sketch_critic, &o.image_critic, &o.head}) {
    *s = r.state();
  }
  if (image_head) o.image_head = r.state();
  if (!r.done()) throw ParseError("checkpoint has trailing bytes");

  try {
    n.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint networks are inconsistent: ") + e.what());
  }
  if (n.classes() != b.classes.size()) throw ParseError("checkpoint class list does not match its head");
  require_state_matches(o.sketch_encoder, n.sketch_encoder, "sketch_encoder");
  require_state_matches(o.image_encoder, n.image_encoder, "image_encoder");
  require_state_matches(o.sketch_decoder, n.sketch_decoder, "sketch_decoder");
  require_state_matches(o.image_decoder, n.image_decoder, "image_decoder");
  require_state_matches(o.semantic_critic, n.semantic_critic, "semantic_critic");
  require_state_matches(o.sketch_critic, n.sketch_critic, "sketch_critic");
  require_state_matches(o.image_critic, n.image_critic, "image_critic");
  require_state_matches(o.head, n.head.linear, "head");
  if (image_head) require_state_matches(*o.image_head, n.image_head->linear, "image_head");
  return b;
}

}  // namespace wadcmsn
