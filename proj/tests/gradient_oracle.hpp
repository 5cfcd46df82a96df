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

// Central finite-difference oracle for ModelHandle::input_gradient.
//
// Networks built from relu and max pooling are only piecewise smooth. A
// coordinate whose difference interval [x - h, x + h] changes any branch is
// not comparable against a derivative and is skipped; sampling continues
// until the requested number of smooth coordinates has been compared.

#ifndef TSB_TESTS_GRADIENT_ORACLE_HPP_
#define TSB_TESTS_GRADIENT_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "tsb/models.hpp"
#include "tsb/nn/ops.hpp"

namespace tsb::testing {

struct GradientCheck {
  int compared = 0;
  int skipped = 0;  // interval crossed a relu or pooling branch
  int failed = 0;
  double max_relative_error = 0.0;
  std::vector<std::string> failures;
};

inline double cross_entropy_of(const ModelHandle& m, const nn::Tensor& x, int target,
                               std::vector<int>* branches) {
  std::vector<double> z;
  {
    nn::BranchTrace trace;
    z = m.forward_logits(x.values());
    if (branches) *branches = trace.branches();
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double e : z) s += std::exp(e - mx);
  return std::log(s) + mx - z[target];
}

inline GradientCheck check_input_gradient(const ModelHandle& m, std::uint64_t seed,
                                          int min_compared = 100, double h = 1e-3,
                                          double tolerance = 1e-2) {
  GradientCheck out;
  Rng rng(seed);
  const int length = m.input_length();
  while (out.compared < min_compared) {
    const nn::Tensor x = random_tensor({1, 1, length}, rng);
    const int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.num_classes())));
    const auto grad = m.input_gradient(x.values(), target);
    std::vector<int> centre;
    cross_entropy_of(m, x, target, &centre);
    for (std::size_t i : sample_coordinates(static_cast<std::size_t>(length), 16, rng)) {
      nn::Tensor up = x;
      nn::Tensor down = x;
      up[i] += h;
      down[i] -= h;
      std::vector<int> bu, bd;
      const double fu = cross_entropy_of(m, up, target, &bu);
      const double fd = cross_entropy_of(m, down, target, &bd);
      if (bu != centre || bd != centre) {
        ++out.skipped;
        continue;
      }
      const double numeric = (fu - fd) / (2.0 * h);
      const double err = relative_error(grad[i], numeric);
      out.max_relative_error = std::max(out.max_relative_error, err);
      ++out.compared;
      if (err >= tolerance) {
        ++out.failed;
        out.failures.push_back("coord " + std::to_string(i) + " analytic " +
                               std::to_string(grad[i]) + " numeric " + std::to_string(numeric));
      }
    }
  }
  return out;
}

}  // namespace tsb::testing

#endif  // TSB_TESTS_GRADIENT_ORACLE_HPP_
