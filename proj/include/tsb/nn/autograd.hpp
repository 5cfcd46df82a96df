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

// Minimal reverse-mode autodiff over Tensor values.
//
// A Var is a node in a dynamically built graph. Ops create result nodes that
// remember their inputs and a closure that scatters the result gradient into
// the inputs. backward() runs those closures in reverse topological order.

#ifndef TSB_NN_AUTOGRAD_HPP_
#define TSB_NN_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <vector>

#include "tsb/nn/tensor.hpp"

namespace tsb::nn {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  explicit Node(Tensor v, bool requires_grad = false)
      : value(std::move(v)), requires_grad(requires_grad) {}

  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;

  std::vector<Var> inputs;
  std::function<void(Node&)> backward_fn;

  // Zero-initialized gradient buffer matching value's shape.
  Tensor& grad_buffer();
  bool has_grad() const { return !grad.empty(); }
  void zero_grad() { grad = Tensor(); }
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);

// Builds the result of an op. The closure is recorded only when gradient
// recording is enabled and at least one input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn);

// Seeds root (a single-element tensor) with d(root)/d(root) = 1.
void backward(const Var& root);

bool grad_enabled();

// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace tsb::nn

#endif  // TSB_NN_AUTOGRAD_HPP_
