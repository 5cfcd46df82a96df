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

#ifndef TSB_NN_ADAM_HPP_
#define TSB_NN_ADAM_HPP_

#include <vector>

#include "tsb/nn/autograd.hpp"

namespace tsb::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. The parameter set is fixed at construction;
// parameters without a gradient in a given step are skipped.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamOptions options);

  void step();
  void zero_grad();
  long steps() const { return step_; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long step_ = 0;
};

}  // namespace tsb::nn

#endif  // TSB_NN_ADAM_HPP_
