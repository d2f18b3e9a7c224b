// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/data/batches.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "wadcmsn/error.hpp"

namespace wadcmsn {

BatchStream::BatchStream(const ZeroShotSplit& split, std::size_t batch_size,
                         const SemanticTable& semantic, std::uint64_t seed)
    : batch_size_(batch_size), classes_(split.seen_classes), rng_(seed) {
  if (batch_size_ == 0) throw ValidationError("batch size must be at least 1");
  split.validate();
  if (classes_.empty()) throw ValidationError("training split has no seen classes");
  std::sort(classes_.begin(), classes_.end());

  std::map<std::string, std::size_t> label_of;
  for (std::size_t k = 0; k < classes_.size(); ++k) label_of[classes_[k]] = k;

  std::vector<FeatureRecord> sk;
  std::vector<FeatureRecord> im;
  for (const auto& r : split.train) (r.modality == Modality::sketch ? sk : im).push_back(r);

  std::vector<std::size_t> sketch_count(classes_.size(), 0);
  images_of_class_.assign(classes_.size(), {});
  for (const auto& r : sk) {
    sketch_label_.push_back(label_of.at(r.class_name));
    ++sketch_count[sketch_label_.back()];
  }
  for (std::size_t i = 0; i < im.size(); ++i) images_of_class_[label_of.at(im[i].class_name)].push_back(i);
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    if (sketch_count[k] == 0 || images_of_class_[k].empty()) {
      throw ValidationError("seen class '" + classes_[k] + "' needs at least one sketch and one image");
    }
  }
  sketches_ = feature_matrix(sk);
  images_ = feature_matrix(im);
  if (sketches_.cols() != images_.cols()) {
    throw ShapeError("sketch and image features differ in dimension");
  }

  codes_ = Matrix(classes_.size(), semantic.code_dim());
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    const auto& code = semantic.at(classes_[k]);
    std::copy(code.begin(), code.end(), codes_.row(k).begin());
  }
  order_.resize(sketches_.rows());
  reshuffle();
}

std::size_t BatchStream::batches_per_epoch() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  // Fisher-Yates with explicit draws; std::shuffle's draw pattern is
  // implementation-defined and would make streams differ across libraries.
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng_() % i);
    std::swap(order_[i - 1], order_[j]);
  }
}

Batch BatchStream::next() {
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  const std::size_t feature_dim = sketches_.cols();
  Batch b;
  b.x = Matrix(n, feature_dim);
  b.y = Matrix(n, feature_dim);
  b.s = Matrix(n, codes_.cols());
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t sketch = order_[cursor_ + i];
    const std::size_t label = sketch_label_[sketch];
    const auto& pool = images_of_class_[label];
    const std::size_t image = pool[static_cast<std::size_t>(rng_() % pool.size())];
    std::copy(sketches_.row(sketch).begin(), sketches_.row(sketch).end(), b.x.row(i).begin());
    std::copy(images_.row(image).begin(), images_.row(image).end(), b.y.row(i).begin());
    std::copy(codes_.row(label).begin(), codes_.row(label).end(), b.s.row(i).begin());
    b.labels[i] = label;
  }
  cursor_ += n;
  if (cursor_ == order_.size()) {
    cursor_ = 0;
    ++epoch_;
    reshuffle();
  }
  return b;
}

}  // namespace wadcmsn
