// Copyright 2026 The MetaDOAR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "metadoar/common.hpp"

namespace metadoar {

// Fixed-capacity FIFO ring; once full, each push overwrites the oldest item.
template <typename T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error("RingBuffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  void clear() {
    items_.clear();
    head_ = 0;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  // i = 0 is the oldest retained item.
  const T& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }
  const T& oldest() const { return at(0); }
  const T& newest() const { return at(items_.size() - 1); }

  // `count` distinct positions drawn uniformly (Floyd's algorithm), sorted.
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    const std::size_t n = items_.size();
    count = std::min(count, n);
    std::vector<std::size_t> picked;
    picked.reserve(count);
    for (std::size_t j = n - count; j < n; ++j) {
      const std::size_t t = uniform_index(rng, j + 1);
      if (std::find(picked.begin(), picked.end(), t) == picked.end()) picked.push_back(t);
      else picked.push_back(j);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<T> items_;
};

}  // namespace metadoar
