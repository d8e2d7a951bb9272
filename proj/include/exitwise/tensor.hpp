// Copyright 2026 The exitwise Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EXITWISE_TENSOR_HPP
#define EXITWISE_TENSOR_HPP

#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace exitwise {

// Dense row-major tensor. Rank is small (<= 3 in this library); 2-D tensors
// over [length, channels] carry activations, [k, c_in, c_out] carries conv
// weights. Scalar type is a template parameter: float in production, double
// for finite-difference oracles.
template <typename T = float>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(element_count(shape)) != data.size()) {
      throw std::invalid_argument("tensor: shape/data size mismatch");
    }
  }

  static std::int64_t element_count(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    const std::int64_t n = element_count(s);
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(n), T(0));
    return t;
  }

  static Tensor full(std::vector<int> s, T value) {
    Tensor t = zeros(std::move(s));
    for (T& v : t.data) v = value;
    return t;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void fill(T value) {
    for (T& v : data) v = value;
  }

  // 2-D accessor, row-major: at(l, c) for shape [L, C].
  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  T at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
};

template <typename T>
std::string shape_string(const Tensor<T>& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + ")";
}

// Index of the largest element; ties break to the lowest index.
template <typename T>
int argmax_lowest(std::span<const T> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace exitwise

#endif  // EXITWISE_TENSOR_HPP
