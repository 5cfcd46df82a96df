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

// One targeted PGD step on a bias-free linear classifier z = W x, checked
// against the closed-form input gradient W^T (softmax(W x) - e_t).

#ifndef TSB_TESTS_PGD_ORACLE_HPP_
#define TSB_TESTS_PGD_ORACLE_HPP_

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "tsb/attack.hpp"
#include "tsb/nn/autograd.hpp"
#include "tsb/nn/ops.hpp"

namespace tsb::testing {

struct PgdCheck {
  int coordinates = 0;
  int sign_mismatches = 0;
  double max_abs_error = 0.0;
};

// Input gradient of the summed cross-entropy of z = W x, via autograd.
inline nn::Tensor linear_input_gradient(const nn::Tensor& w, const nn::Tensor& x,
                                        std::span<const int> targets) {
  const nn::Shape xs = x.shape();
  nn::Var in = nn::leaf(x);
  nn::Var flat = nn::reshape(in, nn::Shape{xs.n, xs.t, 1});
  nn::Var logits = nn::linear(flat, nn::constant(w), nullptr);
  nn::backward(nn::cross_entropy(logits, targets, nn::Reduction::kSum));
  return in->grad;
}

inline PgdCheck check_linear_pgd_step(std::uint64_t seed, int classes = 4, int length = 32,
                                      int rows = 6, double step = 0.01) {
  Rng rng(seed);
  const nn::Tensor w = random_tensor({classes, length, 1}, rng);
  const nn::Tensor x = random_tensor({rows, 1, length}, rng);
  std::vector<int> targets(rows);
  for (int n = 0; n < rows; ++n) targets[n] = n % classes;

  const nn::Tensor stepped = targeted_pgd(
      [&w](const nn::Tensor& b, std::span<const int> t) { return linear_input_gradient(w, b, t); },
      x, targets, 1, step);

  PgdCheck out;
  for (int n = 0; n < rows; ++n) {
    std::vector<double> z(classes, 0.0);
    for (int k = 0; k < classes; ++k) {
      for (int i = 0; i < length; ++i) z[k] += w.at(k, i, 0) * x.at(n, 0, i);
    }
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double total = 0.0;
    for (double& v : z) total += (v = std::exp(v - mx));
    for (int i = 0; i < length; ++i) {
      double g = 0.0;
      for (int k = 0; k < classes; ++k) {
        g += w.at(k, i, 0) * (z[k] / total - (k == targets[n] ? 1.0 : 0.0));
      }
      const double sg = (g > 0.0) - (g < 0.0);
      const double expected = x.at(n, 0, i) - step * sg;
      const double moved = x.at(n, 0, i) - stepped.at(n, 0, i);
      const double moved_sign = (moved > 0.0) - (moved < 0.0);
      ++out.coordinates;
      if (moved_sign != sg) ++out.sign_mismatches;
      out.max_abs_error = std::max(out.max_abs_error, std::abs(stepped.at(n, 0, i) - expected));
    }
  }
  return out;
}

}  // namespace tsb::testing

#endif  // TSB_TESTS_PGD_ORACLE_HPP_
