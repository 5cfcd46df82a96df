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

#ifndef TSB_NN_TENSOR_HPP_
#define TSB_NN_TENSOR_HPP_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tsb::nn {

// Leaves elements default-initialized on resize so that buffers which are
// about to be overwritten skip the zero fill.
template <typename T>
struct DefaultInitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  DefaultInitAllocator() = default;
  template <typename U>
  DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}

  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

// Every activation is laid out as (batch, channels, time), time fastest.
// Weights reuse the same triple: conv (out, in, kernel), linear (out, in, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int t = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(t);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, const std::vector<double>& values);
  // Contents are unspecified until written.
  static Tensor uninitialized(Shape shape);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double> vector() const { return {data_.begin(), data_.end()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int t) { return data_[offset(n, c, t)]; }
  double at(int n, int c, int t) const { return data_[offset(n, c, t)]; }

  // Contiguous time row of sample n, channel c.
  double* row(int n, int c) { return data_.data() + offset(n, c, 0); }
  const double* row(int n, int c) const { return data_.data() + offset(n, c, 0); }

  // Same storage, different shape of equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(double v);

  // Exact: same shape and element-wise ==.
  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::size_t offset(int n, int c, int t) const {
    return (static_cast<std::size_t>(n) * shape_.c + c) * shape_.t + t;
  }

  Shape shape_;
  std::vector<double, DefaultInitAllocator<double>> data_;
};

// Stacks equal-length series into a (batch, 1, length) tensor.
Tensor stack_series(std::span<const std::vector<double>> series);

}  // namespace tsb::nn

#endif  // TSB_NN_TENSOR_HPP_
