// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wadcmsn/data/features.hpp"
#include "wadcmsn/losses/networks.hpp"
#include "wadcmsn/semantics/semantic_table.hpp"

namespace wadcmsn {

// Endless stream of class-paired training batches.
//
// Each epoch shuffles the training sketches and cuts them into ceil(N / b)
// batches (the last may be short). Every sketch is paired with an image drawn
// uniformly from the same class. Labels index the sorted seen-class list.
class BatchStream {
 public:
  BatchStream(const ZeroShotSplit& split, std::size_t batch_size, const SemanticTable& semantic,
              std::uint64_t seed);

  Batch next();

  std::size_t batches_per_epoch() const noexcept;
  // Epoch of the batch that next() returns.
  std::size_t epoch() const noexcept { return epoch_; }
  // True when the next batch starts a new epoch.
  bool at_epoch_start() const noexcept { return cursor_ == 0; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }

 private:
  void reshuffle();

  std::size_t batch_size_;
  std::vector<std::string> classes_;
  Matrix sketches_;                        // all training sketches
  std::vector<std::size_t> sketch_label_;  // per sketch row
  Matrix images_;
  std::vector<std::vector<std::size_t>> images_of_class_;
  Matrix codes_;  // per class
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace wadcmsn
