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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "test_util.hpp"
#include "tsb/nn/adam.hpp"
#include "tsb/nn/layers.hpp"
#include "tsb/nn/ops.hpp"

namespace tsb::nn {
namespace {

using testing::central_difference;
using testing::random_tensor;
using testing::relative_error;

using OpFn = std::function<Var(const std::vector<Var>&)>;

// Reduces an op output to a scalar with fixed random weights so every output
// element contributes a distinct coefficient.
Var weighted_sum(const Var& y, const Tensor& w) {
  const Shape flat{1, static_cast<int>(y->value.size()), 1};
  return linear(reshape(y, flat), constant(w.reshaped(flat)), nullptr);
}

void check_op(const OpFn& op, std::vector<Tensor> inputs, std::uint64_t seed,
              double tol = 1e-6) {
  Rng rng(seed);
  std::vector<Var> leaves;
  for (auto& t : inputs) leaves.push_back(leaf(t));
  Var out = op(leaves);
  const Tensor w = random_tensor(out->value.shape(), rng);
  backward(weighted_sum(out, w));

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    ASSERT_TRUE(leaves[k]->has_grad()) << "input " << k;
    auto f = [&](const Tensor& x) {
      NoGradGuard guard;
      std::vector<Var> in;
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        in.push_back(constant(j == k ? x : inputs[j]));
      }
      const Tensor y = op(in)->value;
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
      return s;
    };
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double numeric = central_difference(f, inputs[k], i, 1e-5);
      EXPECT_LT(relative_error(leaves[k]->grad[i], numeric, 1e-6), tol)
          << "input " << k << " coord " << i << " analytic " << leaves[k]->grad[i]
          << " numeric " << numeric;
    }
  }
}

TEST(AutogradTest, Conv1dSamePaddingGradients) {
  Rng rng(1);
  check_op(
      [](const std::vector<Var>& v) { return conv1d(v[0], v[1], v[2], same_padding(4)); },
      {random_tensor({2, 3, 9}, rng), random_tensor({4, 3, 4}, rng), random_tensor({1, 4, 1}, rng)},
      11);
}

TEST(AutogradTest, Conv1dDilatedCausalGradients) {
  Rng rng(2);
  check_op(
      [](const std::vector<Var>& v) { return conv1d(v[0], v[1], nullptr, causal_padding(3, 2)); },
      {random_tensor({2, 2, 10}, rng), random_tensor({3, 2, 3}, rng)}, 12);
}

TEST(AutogradTest, WideConv1dGradients) {
  // 20 x 16 channel pairs take the im2col path instead of the direct one.
  Rng rng(8);
  check_op(
      [](const std::vector<Var>& v) { return conv1d(v[0], v[1], v[2], same_padding(3, 2)); },
      {random_tensor({2, 20, 7}, rng), random_tensor({16, 20, 3}, rng),
       random_tensor({1, 16, 1}, rng)},
      24);
}

TEST(AutogradTest, NarrowAndWideConvolutionsAgree) {
  Rng rng(9);
  const Tensor x = random_tensor({3, 20, 11}, rng);
  const Tensor w = random_tensor({16, 20, 4}, rng);
  const Var wide = conv1d(constant(x), constant(w), nullptr, same_padding(4));
  // Same result assembled from narrow slices of the input channels.
  Tensor acc(wide->value.shape());
  for (int i = 0; i < 20; i += 5) {
    Tensor ws({16, 5, 4});
    for (int o = 0; o < 16; ++o) {
      for (int c = 0; c < 5; ++c) {
        for (int k = 0; k < 4; ++k) ws.at(o, c, k) = w.at(o, i + c, k);
      }
    }
    const Var part = conv1d(slice_channels(constant(x), i, 5), constant(ws), nullptr,
                            same_padding(4));
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += part->value[j];
  }
  for (std::size_t j = 0; j < acc.size(); ++j) EXPECT_NEAR(acc[j], wide->value[j], 1e-12);
}

TEST(AutogradTest, BatchNormTrainingGradients) {
  Rng rng(3);
  auto rm = constant(Tensor({1, 3, 1}));
  auto rv = constant(Tensor({1, 3, 1}, 1.0));
  check_op(
      [&](const std::vector<Var>& v) {
        BatchNormArgs args{rm.get(), rv.get(), true, false};
        return batch_norm(v[0], v[1], v[2], args);
      },
      {random_tensor({4, 3, 5}, rng), random_tensor({1, 3, 1}, rng),
       random_tensor({1, 3, 1}, rng)},
      13, 1e-5);
}

TEST(AutogradTest, BatchNormEvalGradients) {
  Rng rng(4);
  auto rm = constant(random_tensor({1, 2, 1}, rng));
  auto rv = constant(Tensor({1, 2, 1}, 2.5));
  check_op(
      [&](const std::vector<Var>& v) {
        BatchNormArgs args{rm.get(), rv.get(), false, false};
        return batch_norm(v[0], v[1], v[2], args);
      },
      {random_tensor({3, 2, 4}, rng), random_tensor({1, 2, 1}, rng),
       random_tensor({1, 2, 1}, rng)},
      14);
}

TEST(AutogradTest, SmoothActivationGradients) {
  Rng rng(5);
  check_op([](const std::vector<Var>& v) { return sigmoid(v[0]); }, {random_tensor({2, 3, 4}, rng)},
           15);
  check_op([](const std::vector<Var>& v) { return tanh(v[0]); }, {random_tensor({2, 3, 4}, rng)},
           16);
}

TEST(AutogradTest, ReluAndMaxPoolGradientsAwayFromKinks) {
  // Well separated values keep the finite differences off the kinks.
  Tensor x({1, 2, 8});
  for (int i = 0; i < 16; ++i) x[i] = (i % 2 ? 1.0 : -1.0) * (0.3 + 0.17 * i);
  check_op([](const std::vector<Var>& v) { return relu(v[0]); }, {x}, 17);
  check_op([](const std::vector<Var>& v) { return max_pool1d(v[0], 3, 1, 1, 1); }, {x}, 18);
  check_op([](const std::vector<Var>& v) { return max_pool1d(v[0], 3, 2, 1, 1); }, {x}, 19);
}

TEST(AutogradTest, StructuralOpGradients) {
  Rng rng(6);
  check_op(
      [](const std::vector<Var>& v) {
        return concat_channels({slice_channels(v[0], 1, 2), scale(v[1], -1.5), mul(v[0], v[0])});
      },
      {random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng)}, 20);
  check_op([](const std::vector<Var>& v) { return scale_channels(v[0], v[1]); },
           {random_tensor({2, 3, 5}, rng), random_tensor({2, 3, 1}, rng)}, 21);
  check_op([](const std::vector<Var>& v) { return global_avg_pool(add(v[0], v[1])); },
           {random_tensor({2, 3, 5}, rng), random_tensor({2, 3, 5}, rng)}, 22);
  check_op([](const std::vector<Var>& v) { return linear(v[0], v[1], v[2]); },
           {random_tensor({3, 4, 1}, rng), random_tensor({2, 4, 1}, rng),
            random_tensor({1, 2, 1}, rng)},
           23);
}

TEST(AutogradTest, CrossEntropyMatchesClosedForm) {
  Tensor logits({2, 3, 1}, std::vector<double>{1.0, 2.0, 3.0, 0.5, -0.5, 0.0});
  const int labels[] = {2, 0};
  Var z = leaf(logits);
  Var loss = cross_entropy(z, labels, Reduction::kMean);
  auto lse = [](double a, double b, double c) {
    return std::log(std::exp(a) + std::exp(b) + std::exp(c));
  };
  const double expected = 0.5 * ((lse(1, 2, 3) - 3.0) + (lse(0.5, -0.5, 0.0) - 0.5));
  EXPECT_NEAR(loss->value[0], expected, 1e-12);
  backward(loss);
  const auto p0 = softmax(std::span<const double>(logits.data(), 3));
  EXPECT_NEAR(z->grad[0], 0.5 * p0[0], 1e-12);
  EXPECT_NEAR(z->grad[2], 0.5 * (p0[2] - 1.0), 1e-12);

  Var zs = leaf(logits);
  Var sum = cross_entropy(zs, labels, Reduction::kSum);
  EXPECT_NEAR(sum->value[0], 2.0 * expected, 1e-12);
}

TEST(AutogradTest, MeanSquaredNormIsBatchMeanOfSquaredDistance) {
  Tensor a({2, 2, 1}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  Tensor b({2, 2, 1}, std::vector<double>{0.0, 0.0, 1.0, 1.0});
  Var z = leaf(a);
  Var loss = mean_squared_norm(z, b);
  EXPECT_DOUBLE_EQ(loss->value[0], (1.0 + 4.0 + 4.0 + 9.0) / 2.0);
  backward(loss);
  EXPECT_DOUBLE_EQ(z->grad[3], 3.0);  // 2 * (4 - 1) / 2
}

TEST(AutogradTest, GradientsAccumulateAcrossBackwardCalls) {
  Var x = leaf(Tensor({1, 1, 1}, 3.0));
  backward(scale(x, 2.0));
  backward(scale(x, 2.0));
  EXPECT_DOUBLE_EQ(x->grad[0], 4.0);
}

TEST(AutogradTest, NoGradGuardRecordsNothing) {
  Var x = leaf(Tensor({1, 1, 2}, 1.0));
  Var y;
  {
    NoGradGuard guard;
    y = relu(x);
  }
  EXPECT_FALSE(y->backward_fn);
  EXPECT_TRUE(grad_enabled());
}

TEST(BatchNormTest, RunningStatisticsFollowMomentumRule) {
  // Channel 0 values over (batch, time): 1, 2, 3, 6 -> mean 3, unbiased var 14/3.
  Tensor x({2, 1, 2}, std::vector<double>{1.0, 2.0, 3.0, 6.0});
  Var rm = constant(Tensor({1, 1, 1}, 0.5));
  Var rv = constant(Tensor({1, 1, 1}, 2.0));
  BatchNormArgs args{rm.get(), rv.get(), true, true, 0.1, 1e-5};
  batch_norm(constant(x), constant(Tensor({1, 1, 1}, 1.0)), constant(Tensor({1, 1, 1})), args);
  EXPECT_NEAR(rm->value[0], 0.9 * 0.5 + 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(rv->value[0], 0.9 * 2.0 + 0.1 * (14.0 / 3.0), 1e-15);
}

TEST(BatchNormTest, EvalModeUsesStoredStatistics) {
  Tensor x({1, 1, 2}, std::vector<double>{4.0, 0.0});
  Var rm = constant(Tensor({1, 1, 1}, 2.0));
  Var rv = constant(Tensor({1, 1, 1}, 4.0));
  BatchNormArgs args{rm.get(), rv.get(), false, false, 0.1, 0.0};
  Var y = batch_norm(constant(x), constant(Tensor({1, 1, 1}, 3.0)),
                     constant(Tensor({1, 1, 1}, 1.0)), args);
  EXPECT_DOUBLE_EQ(y->value[0], 3.0 * (4.0 - 2.0) / 2.0 + 1.0);
  EXPECT_DOUBLE_EQ(y->value[1], 3.0 * (0.0 - 2.0) / 2.0 + 1.0);
  EXPECT_DOUBLE_EQ(rm->value[0], 2.0);
}

TEST(BatchNormTest, FrozenLayerNeverTouchesBuffers) {
  ParamStore store;
  auto bn = BatchNorm1d::create(store, "bn", 2);
  Rng rng(7);
  ForwardContext ctx{true, true, true};
  const Tensor before = bn.running_mean->value;
  bn(constant(random_tensor({3, 2, 4}, rng, 5.0)), ctx);
  EXPECT_EQ(bn.running_mean->value.vector(), before.vector());
  ForwardContext live{true, false, true};
  bn(constant(random_tensor({3, 2, 4}, rng, 5.0)), live);
  EXPECT_NE(bn.running_mean->value.vector(), before.vector());
}

TEST(ParamStoreTest, RejectsDuplicateNames) {
  ParamStore store;
  store.add_param("w", Tensor({1, 1, 1}));
  EXPECT_THROW(store.add_param("w", Tensor({1, 1, 1})), std::exception);
  EXPECT_THROW(store.add_buffer("w", Tensor({1, 1, 1})), std::exception);
}

TEST(AdamTest, FirstStepMovesByLearningRateTimesSign) {
  Var p = leaf(Tensor({1, 1, 2}, std::vector<double>{1.0, -1.0}));
  Adam opt({p}, AdamOptions{0.01});
  backward(linear(reshape(p, {1, 2, 1}), constant(Tensor({1, 2, 1}, std::vector<double>{3.0, -0.2})),
                  nullptr));
  opt.step();
  // Bias-corrected first step is lr * g / (|g| + eps').
  EXPECT_NEAR(p->value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p->value[1], -1.0 + 0.01, 1e-9);
}

TEST(AdamTest, MinimizesQuadratic) {
  Var p = leaf(Tensor({1, 1, 1}, 5.0));
  Adam opt({p}, AdamOptions{0.1});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    backward(mul(p, p));
    opt.step();
  }
  EXPECT_NEAR(p->value[0], 0.0, 1e-2);
}

}  // namespace
}  // namespace tsb::nn
