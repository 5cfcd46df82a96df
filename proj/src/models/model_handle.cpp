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

#include <cmath>

#include "networks.hpp"
#include "tsb/errors.hpp"

namespace tsb {

using nn::Shape;
using nn::Tensor;
using nn::Var;

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::kInceptionTime:
      return "inception_time";
    case Architecture::kLstmFcn:
      return "lstm_fcn";
    case Architecture::kTcn:
      return "tcn";
    case Architecture::kMacnn:
      return "macnn";
  }
  return "inception_time";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "inception_time") return Architecture::kInceptionTime;
  if (s == "lstm_fcn") return Architecture::kLstmFcn;
  if (s == "tcn") return Architecture::kTcn;
  if (s == "macnn") return Architecture::kMacnn;
  throw InvalidArgument("unsupported architecture: " + std::string(s));
}

ModelOptions ModelOptions::lite(Architecture a, int num_classes, int input_length,
                                std::uint64_t seed) {
  ModelOptions o;
  o.architecture = a;
  o.num_classes = num_classes;
  o.input_length = input_length;
  o.seed = seed;
  switch (a) {
    case Architecture::kInceptionTime:
      o.filters = 32;
      o.depth = 3;
      o.kernel_size = 40;
      break;
    case Architecture::kLstmFcn:
      o.filters = 32;
      o.depth = 3;
      o.kernel_size = 8;
      o.hidden = 8;
      break;
    case Architecture::kTcn:
      o.filters = 32;
      o.depth = 4;
      o.kernel_size = 7;
      break;
    case Architecture::kMacnn:
      o.filters = 16;
      o.depth = 1;
      o.kernel_size = 12;
      break;
  }
  return o;
}

nlohmann::json ModelOptions::to_json() const {
  return nlohmann::json{{"architecture", std::string(tsb::to_string(architecture))},
                        {"num_classes", num_classes},
                        {"input_length", input_length},
                        {"seed", seed},
                        {"filters", filters},
                        {"depth", depth},
                        {"kernel_size", kernel_size},
                        {"hidden", hidden}};
}

ModelOptions ModelOptions::from_json(const nlohmann::json& j, int num_classes,
                                     int input_length) {
  if (!j.is_object()) throw ConfigError("model section must be an object");
  try {
    const auto arch = architecture_from_string(j.value("architecture", "inception_time"));
    ModelOptions o = lite(arch, j.value("num_classes", num_classes),
                          j.value("input_length", input_length), j.value("seed", std::uint64_t{0}));
    o.filters = j.value("filters", o.filters);
    o.depth = j.value("depth", o.depth);
    o.kernel_size = j.value("kernel_size", o.kernel_size);
    o.hidden = j.value("hidden", o.hidden);
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

namespace detail {

std::unique_ptr<Network> make_network(const ModelOptions& o) {
  if (o.num_classes < 2) throw InvalidArgument("a classifier needs at least two classes");
  if (o.input_length < 8) throw InvalidArgument("input length must be at least 8");
  if (o.filters < 1 || o.depth < 1 || o.kernel_size < 1 || o.hidden < 1) {
    throw InvalidArgument("model widths must be positive");
  }
  switch (o.architecture) {
    case Architecture::kInceptionTime:
      return make_inception_time(o);
    case Architecture::kLstmFcn:
      return make_lstm_fcn(o);
    case Architecture::kTcn:
      return make_tcn(o);
    case Architecture::kMacnn:
      return make_macnn(o);
  }
  throw InvalidArgument("unsupported architecture id");
}

}  // namespace detail

ModelHandle::ModelHandle(const ModelOptions& options)
    : options_(options), net_(detail::make_network(options)) {}

ModelHandle::ModelHandle(const ModelHandle& other)
    : options_(other.options_), net_(detail::make_network(other.options_)) {
  copy_state_from(other);
}

ModelHandle& ModelHandle::operator=(const ModelHandle& other) {
  if (this != &other) {
    options_ = other.options_;
    net_ = detail::make_network(options_);
    copy_state_from(other);
  }
  return *this;
}

ModelHandle::ModelHandle(ModelHandle&&) noexcept = default;
ModelHandle& ModelHandle::operator=(ModelHandle&&) noexcept = default;
ModelHandle::~ModelHandle() = default;

void ModelHandle::copy_state_from(const ModelHandle& other) {
  const auto& src = other.net_->store();
  auto& dst = net_->store();
  for (std::size_t i = 0; i < src.params().size(); ++i) {
    dst.params()[i].node->value = src.params()[i].node->value;
  }
  for (std::size_t i = 0; i < src.buffers().size(); ++i) {
    dst.buffers()[i].node->value = src.buffers()[i].node->value;
  }
  set_bn_frozen(other.bn_frozen_);
}

void ModelHandle::set_bn_frozen(bool frozen) {
  bn_frozen_ = frozen;
  for (const auto& p : net_->store().params()) {
    if (p.kind == nn::ParamKind::kBatchNormAffine) {
      p.node->requires_grad = !frozen;
      if (frozen) p.node->zero_grad();
    }
  }
}

void ModelHandle::check_input(int length) const {
  if (length != options_.input_length) {
    throw InvalidArgument("series length " + std::to_string(length) +
                          " does not match model input length " +
                          std::to_string(options_.input_length));
  }
}

Tensor ModelHandle::forward_logits(const Tensor& batch) const {
  check_input(batch.shape().t);
  nn::NoGradGuard no_grad;
  nn::ForwardContext ctx{false, bn_frozen_, false};
  return net_->forward(nn::constant(batch), ctx, nullptr).logits->value;
}

std::vector<double> ModelHandle::forward_logits(std::span<const double> x) const {
  Tensor batch(Shape{1, 1, static_cast<int>(x.size())}, std::vector<double>(x.begin(), x.end()));
  return forward_logits(batch).vector();
}

int ModelHandle::predict(std::span<const double> x) const {
  return nn::argmax(forward_logits(x));
}

std::vector<int> ModelHandle::predict(const Tensor& batch) const {
  const Tensor logits = forward_logits(batch);
  std::vector<int> out(static_cast<std::size_t>(logits.shape().n));
  for (int n = 0; n < logits.shape().n; ++n) {
    out[n] = nn::argmax(std::span<const double>(logits.row(n, 0), logits.shape().c));
  }
  return out;
}

Tensor ModelHandle::input_gradient(const Tensor& batch, std::span<const int> targets) const {
  check_input(batch.shape().t);
  nn::ForwardContext ctx{false, bn_frozen_, false};
  Var x = nn::leaf(batch, true);
  auto out = net_->forward(x, ctx, nullptr);
  Var loss = nn::cross_entropy(out.logits, targets, nn::Reduction::kSum);
  nn::backward(loss);
  return x->has_grad() ? x->grad : Tensor(batch.shape());
}

std::vector<double> ModelHandle::input_gradient(std::span<const double> x, int target) const {
  Tensor batch(Shape{1, 1, static_cast<int>(x.size())}, std::vector<double>(x.begin(), x.end()));
  const int t[] = {target};
  return input_gradient(batch, t).vector();
}

std::vector<std::string> ModelHandle::feature_layers() const { return net_->feature_layers(); }

std::vector<std::string> ModelHandle::default_probe_layers() const {
  auto layers = net_->feature_layers();
  if (layers.size() > 2) layers.erase(layers.begin(), layers.end() - 2);
  return layers;
}

Tensor ModelHandle::forward_probed(const Tensor& batch, ActivationProbe& probe) const {
  check_input(batch.shape().t);
  const auto known = net_->feature_layers();
  for (const auto& id : probe.layer_ids) {
    if (std::find(known.begin(), known.end(), id) == known.end()) {
      throw InvalidArgument("unknown probe layer: " + id);
    }
  }
  nn::NoGradGuard no_grad;
  nn::ForwardContext ctx{false, bn_frozen_, false};
  ActivationCapture all;
  Tensor logits = net_->forward(nn::constant(batch), ctx, &all).logits->value;
  probe.capture.clear();
  for (const auto& id : probe.layer_ids) probe.capture[id] = std::move(all.at(id));
  return logits;
}

std::map<std::string, Tensor> ModelHandle::channel_norms(const Tensor& batch,
                                                        ActivationProbe& probe) const {
  forward_probed(batch, probe);
  std::map<std::string, Tensor> norms;
  for (const auto& id : probe.layer_ids) {
    const Tensor& a = probe.capture.at(id);
    const Shape s = a.shape();
    Tensor v = Tensor::uninitialized(Shape{s.n, s.c, 1});
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* r = a.row(n, c);
        double sq = 0.0;
        for (int t = 0; t < s.t; ++t) sq += r[t] * r[t];
        v.at(n, c, 0) = std::sqrt(sq);
      }
    }
    norms.emplace(id, std::move(v));
  }
  return norms;
}

std::map<std::string, std::vector<double>> ModelHandle::channel_norms(
    std::span<const double> x, ActivationProbe& probe) const {
  Tensor batch(Shape{1, 1, static_cast<int>(x.size())}, std::vector<double>(x.begin(), x.end()));
  std::map<std::string, std::vector<double>> norms;
  for (auto& [id, t] : channel_norms(batch, probe)) norms.emplace(id, t.vector());
  return norms;
}

int ModelHandle::feature_dim() const { return net_->feature_dim(); }

Tensor ModelHandle::penultimate_features(const Tensor& batch) const {
  check_input(batch.shape().t);
  nn::NoGradGuard no_grad;
  nn::ForwardContext ctx{false, bn_frozen_, false};
  return net_->forward(nn::constant(batch), ctx, nullptr).features->value;
}

std::vector<double> ModelHandle::penultimate_features(std::span<const double> x) const {
  Tensor batch(Shape{1, 1, static_cast<int>(x.size())}, std::vector<double>(x.begin(), x.end()));
  return penultimate_features(batch).vector();
}

Var ModelHandle::train_forward(const Tensor& batch) {
  check_input(batch.shape().t);
  nn::ForwardContext ctx{true, bn_frozen_, true};
  return net_->forward(nn::constant(batch), ctx, nullptr).logits;
}

std::vector<Var> ModelHandle::trainable_parameters() const {
  std::vector<Var> out;
  for (const auto& p : net_->store().params()) {
    if (p.node->requires_grad) out.push_back(p.node);
  }
  return out;
}

void ModelHandle::zero_grad() { net_->store().zero_grad(); }

std::map<std::string, Tensor> ModelHandle::state() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : net_->store().params()) out[p.name] = p.node->value;
  for (const auto& b : net_->store().buffers()) out[b.name] = b.node->value;
  return out;
}

std::map<std::string, Tensor> ModelHandle::batch_norm_statistics() const {
  std::map<std::string, Tensor> out;
  for (const auto& b : net_->store().buffers()) out[b.name] = b.node->value;
  return out;
}

}  // namespace tsb
