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

// LSTM-FCN: a dimension-shuffled LSTM branch (each input channel is one
// step whose features are the whole series) next to a three-layer fully
// convolutional branch; the final hidden state and the pooled conv features
// are concatenated into the dense head. Dropout is omitted.

#include <cmath>

#include "networks.hpp"

namespace tsb::detail {

using nn::BatchNorm1d;
using nn::Conv1d;
using nn::ForwardContext;
using nn::Linear;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr int kConvKernels[] = {8, 5, 3};

class LstmFcn final : public Network {
 public:
  explicit LstmFcn(const ModelOptions& o) : hidden_(o.hidden) {
    Rng rng(o.seed);
    const int h = o.hidden;
    const int length = o.input_length;
    // Gate order: input, forget, cell, output.
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    auto lstm_init = [&](Shape s) {
      Tensor t(s);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
      return t;
    };
    w_ih_ = store_.add_param("lstm.w_ih", lstm_init(Shape{4 * h, length, 1}));
    w_hh_ = store_.add_param("lstm.w_hh", lstm_init(Shape{4 * h, h, 1}));
    b_ = store_.add_param("lstm.bias", lstm_init(Shape{1, 4 * h, 1}));

    const int widths[] = {o.filters, 2 * o.filters, o.filters};
    int in = 1;
    for (int i = 0; i < 3; ++i) {
      const std::string name = "conv" + std::to_string(i);
      convs_.push_back(Conv1d::create(store_, name, in, widths[i], kConvKernels[i],
                                      nn::same_padding(kConvKernels[i]), true, rng));
      bns_.push_back(BatchNorm1d::create(store_, name + ".bn", widths[i]));
      in = widths[i];
    }
    feature_dim_ = h + in;
    fc_ = Linear::create(store_, "fc", feature_dim_, o.num_classes, rng);
  }

  Output forward(const Var& x, const ForwardContext& ctx,
                 ActivationCapture* capture) const override {
    const Shape s = x->value.shape();
    const int h = hidden_;

    Var w_ih = nn::use_param(w_ih_, ctx);
    Var w_hh = nn::use_param(w_hh_, ctx);
    Var b = nn::use_param(b_, ctx);
    Var hs = nn::constant(Tensor(Shape{s.n, h, 1}));
    Var cs = nn::constant(Tensor(Shape{s.n, h, 1}));
    for (int step = 0; step < s.c; ++step) {
      Var xt = nn::reshape(nn::slice_channels(x, step, 1), Shape{s.n, s.t, 1});
      Var gates = nn::add(nn::linear(xt, w_ih, b), nn::linear(hs, w_hh, nullptr));
      Var i = nn::sigmoid(nn::slice_channels(gates, 0, h));
      Var f = nn::sigmoid(nn::slice_channels(gates, h, h));
      Var g = nn::tanh(nn::slice_channels(gates, 2 * h, h));
      Var o = nn::sigmoid(nn::slice_channels(gates, 3 * h, h));
      cs = nn::add(nn::mul(f, cs), nn::mul(i, g));
      hs = nn::mul(o, nn::tanh(cs));
    }

    Var y = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      y = nn::relu(bns_[i](convs_[i](y, ctx), ctx));
      if (capture) (*capture)["conv" + std::to_string(i)] = y->value;
    }
    Var features = nn::concat_channels({hs, nn::global_avg_pool(y)});
    return {fc_(features, ctx), features};
  }

  std::vector<std::string> feature_layers() const override { return {"conv0", "conv1", "conv2"}; }
  int feature_dim() const override { return feature_dim_; }

 private:
  int hidden_;
  Var w_ih_;
  Var w_hh_;
  Var b_;
  std::vector<Conv1d> convs_;
  std::vector<BatchNorm1d> bns_;
  Linear fc_;
  int feature_dim_ = 0;
};

}  // namespace

std::unique_ptr<Network> make_lstm_fcn(const ModelOptions& options) {
  return std::make_unique<LstmFcn>(options);
}

}  // namespace tsb::detail
