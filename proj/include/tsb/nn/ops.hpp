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

#ifndef TSB_NN_OPS_HPP_
#define TSB_NN_OPS_HPP_

#include <span>
#include <vector>

#include "tsb/nn/autograd.hpp"

namespace tsb::nn {

struct ConvGeometry {
  int dilation = 1;
  int pad_left = 0;
  int pad_right = 0;
};

// Output length equals input length. Even kernels pad one more on the right.
ConvGeometry same_padding(int kernel, int dilation = 1);
// Left-only padding so that output[t] depends on input[<= t].
ConvGeometry causal_padding(int kernel, int dilation);

// x: (N, Cin, T), weight: (Cout, Cin, K), bias: (1, Cout, 1) or null.
Var conv1d(const Var& x, const Var& weight, const Var& bias, ConvGeometry geometry);

// Per-channel normalization over (batch, time).
//
// With use_batch_stats the batch mean and biased variance normalize the input
// and, if update_running, the running buffers move by `momentum` toward the
// batch mean and unbiased variance. Otherwise the running buffers are used and
// never touched.
struct BatchNormArgs {
  Node* running_mean = nullptr;
  Node* running_var = nullptr;
  bool use_batch_stats = false;
  bool update_running = false;
  double momentum = 0.1;
  double eps = 1e-5;
};
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormArgs& args);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);

// Padding positions never win the max.
Var max_pool1d(const Var& x, int kernel, int stride, int pad_left, int pad_right);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& x, int begin, int count);
// x: (N, C, T) times s: (N, C, 1) broadcast over time.
Var scale_channels(const Var& x, const Var& s);
Var reshape(const Var& x, Shape shape);
// (N, C, T) -> (N, C, 1).
Var global_avg_pool(const Var& x);
// x: (N, F, 1), weight: (O, F, 1), bias: (1, O, 1) or null -> (N, O, 1).
Var linear(const Var& x, const Var& weight, const Var& bias);

enum class Reduction { kMean, kSum };

// Softmax cross-entropy of logits (N, K, 1) against integer labels.
Var cross_entropy(const Var& logits, std::span<const int> labels,
                  Reduction reduction = Reduction::kMean);
// (1/N) * sum_i ||logits_i - target_i||^2 for logits/target of shape (N, K, 1).
Var mean_squared_norm(const Var& logits, const Tensor& target);

// While alive in the current thread, records the branch every piecewise op
// (relu, max pooling) takes per element. Two forwards with equal traces lie
// on the same smooth piece of the network function. Used by gradient checks.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  const std::vector<int>& branches() const { return branches_; }
  static void record(int branch);

 private:
  std::vector<int> branches_;
  BranchTrace* previous_;
};

// Plain (non-differentiable) helpers over a single logits row.
std::vector<double> softmax(std::span<const double> logits);
int argmax(std::span<const double> values);

}  // namespace tsb::nn

#endif  // TSB_NN_OPS_HPP_
