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

#include "tsb/nn/layers.hpp"

#include <cmath>

#include "tsb/errors.hpp"

namespace tsb::nn {
namespace {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv and
// dense layers.
Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Var use_param(const Var& p, const ForwardContext& ctx) {
  if (!p || !p->requires_grad || ctx.param_grads || !grad_enabled()) return p;
  return constant(p->value);
}

void ParamStore::check_unique(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) throw InvalidArgument("duplicate parameter name: " + name);
  }
  for (const auto& b : buffers_) {
    if (b.name == name) throw InvalidArgument("duplicate buffer name: " + name);
  }
}

Var ParamStore::add_param(const std::string& name, Tensor init, ParamKind kind) {
  check_unique(name);
  Var v = leaf(std::move(init), true);
  params_.push_back({name, v, kind});
  return v;
}

Var ParamStore::add_buffer(const std::string& name, Tensor init) {
  check_unique(name);
  Var v = constant(std::move(init));
  buffers_.push_back({name, v});
  return v;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.node->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.node->zero_grad();
}

Conv1d Conv1d::create(ParamStore& store, const std::string& name, int in_channels,
                      int out_channels, int kernel, ConvGeometry geometry, bool with_bias,
                      Rng& rng) {
  Conv1d conv;
  const int fan_in = in_channels * kernel;
  conv.weight = store.add_param(
      name + ".weight", fan_in_uniform(Shape{out_channels, in_channels, kernel}, fan_in, rng));
  if (with_bias) {
    conv.bias =
        store.add_param(name + ".bias", fan_in_uniform(Shape{1, out_channels, 1}, fan_in, rng));
  }
  conv.geometry = geometry;
  return conv;
}

BatchNorm1d BatchNorm1d::create(ParamStore& store, const std::string& name, int channels) {
  BatchNorm1d bn;
  const Shape s{1, channels, 1};
  bn.gamma = store.add_param(name + ".gamma", Tensor(s, 1.0), ParamKind::kBatchNormAffine);
  bn.beta = store.add_param(name + ".beta", Tensor(s, 0.0), ParamKind::kBatchNormAffine);
  bn.running_mean = store.add_buffer(name + ".running_mean", Tensor(s, 0.0));
  bn.running_var = store.add_buffer(name + ".running_var", Tensor(s, 1.0));
  return bn;
}

Var BatchNorm1d::operator()(const Var& x, const ForwardContext& ctx) const {
  BatchNormArgs args;
  args.running_mean = running_mean.get();
  args.running_var = running_var.get();
  args.use_batch_stats = ctx.training && !ctx.bn_frozen;
  args.update_running = args.use_batch_stats;
  args.momentum = momentum;
  args.eps = eps;
  return batch_norm(x, use_param(gamma, ctx), use_param(beta, ctx), args);
}

Var Conv1d::operator()(const Var& x, const ForwardContext& ctx) const {
  return conv1d(x, use_param(weight, ctx), use_param(bias, ctx), geometry);
}

Var Linear::operator()(const Var& x, const ForwardContext& ctx) const {
  return linear(x, use_param(weight, ctx), use_param(bias, ctx));
}

Linear Linear::create(ParamStore& store, const std::string& name, int in_features,
                      int out_features, Rng& rng) {
  Linear fc;
  fc.weight = store.add_param(name + ".weight",
                              fan_in_uniform(Shape{out_features, in_features, 1}, in_features, rng));
  fc.bias =
      store.add_param(name + ".bias", fan_in_uniform(Shape{1, out_features, 1}, in_features, rng));
  return fc;
}

}  // namespace tsb::nn
