/*
 * Copyright 2026 The tsbackdoor Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "tsb/nn/tensor.hpp"

#include <algorithm>

#include "tsb/errors.hpp"

namespace tsb::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
         std::to_string(t) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, const std::vector<double>& values)
    : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape_.numel()) {
    throw InvalidArgument("tensor data size " + std::to_string(data_.size()) +
                          " does not match shape " + shape_.str());
  }
}

Tensor Tensor::uninitialized(Shape shape) {
  Tensor out;
  out.shape_ = shape;
  out.data_.resize(shape.numel());
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw InvalidArgument("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  Tensor out = *this;
  out.shape_ = shape;
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor stack_series(std::span<const std::vector<double>> series) {
  if (series.empty()) throw InvalidArgument("cannot stack an empty batch");
  const int length = static_cast<int>(series.front().size());
  Tensor out(Shape{static_cast<int>(series.size()), 1, length});
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (static_cast<int>(series[i].size()) != length) {
      throw InvalidArgument("series lengths differ within a batch");
    }
    std::copy(series[i].begin(), series[i].end(), out.row(static_cast<int>(i), 0));
  }
  return out;
}

}  // namespace tsb::nn
