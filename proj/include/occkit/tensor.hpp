// Copyright 2026 The occkit Authors
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

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "occkit/common.hpp"

namespace occkit {

/// Row-major dense tensor of doubles. The last shape entry is the fastest
/// varying index.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                              std::multiplies<>()),
              fill) {}

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  bool same_shape(const DenseTensor& other) const {
    return shape_ == other.shape_;
  }

  template <typename... Ix>
  double& operator()(Ix... ix) {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }

  template <typename... Ix>
  const double& operator()(Ix... ix) const {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }

  std::size_t offset(std::initializer_list<std::size_t> ix) const {
    assert(ix.size() == shape_.size());
    std::size_t lin = 0;
    std::size_t d = 0;
    for (std::size_t i : ix) {
      assert(i < shape_[d]);
      lin = lin * shape_[d] + i;
      ++d;
    }
    return lin;
  }

  std::string shape_str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << "x";
      os << shape_[i];
    }
    return os.str();
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void require_shape(const DenseTensor& t,
                          std::initializer_list<std::size_t> want,
                          const char* what) {
  if (t.shape() != std::vector<std::size_t>(want)) {
    DenseTensor probe{std::vector<std::size_t>(want)};
    throw ContractError(std::string(what) + ": expected shape " +
                        probe.shape_str() + ", got " + t.shape_str());
  }
}

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  if (!a.same_shape(b)) {
    throw ContractError("max_abs_diff: shape mismatch " + a.shape_str() +
                        " vs " + b.shape_str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.data()[i] - b.data()[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace occkit
