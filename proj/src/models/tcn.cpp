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

// Temporal convolutional network: residual blocks of two causal dilated
// convolutions, dilation doubling per block. Weight norm and dropout are
// omitted; the architecture has no batch norm.

#include "networks.hpp"

namespace tsb::detail {

using nn::Conv1d;
using nn::ForwardContext;
using nn::Linear;
using nn::Var;

namespace {

class Tcn final : public Network {
 public:
  explicit Tcn(const ModelOptions& o) {
    Rng rng(o.seed);
    int in = 1;
    for (int b = 0; b < o.depth; ++b) {
      const std::string name = "block" + std::to_string(b);
      const int dilation = 1 << b;
      const auto geom = nn::causal_padding(o.kernel_size, dilation);
      Block blk;
      blk.conv1 = Conv1d::create(store_, name + ".conv1", in, o.filters, o.kernel_size, geom, true,
                                 rng);
      blk.conv2 = Conv1d::create(store_, name + ".conv2", o.filters, o.filters, o.kernel_size,
                                 geom, true, rng);
      blk.has_downsample = in != o.filters;
      if (blk.has_downsample) {
        blk.downsample =
            Conv1d::create(store_, name + ".downsample", in, o.filters, 1, {}, true, rng);
      }
      blocks_.push_back(std::move(blk));
      in = o.filters;
    }
    feature_dim_ = in;
    fc_ = Linear::create(store_, "fc", in, o.num_classes, rng);
  }

  Output forward(const Var& x, const ForwardContext& ctx,
                 ActivationCapture* capture) const override {
    Var h = x;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Block& blk = blocks_[b];
      Var y = nn::relu(blk.conv1(h, ctx));
      y = nn::relu(blk.conv2(y, ctx));
      Var res = blk.has_downsample ? blk.downsample(h, ctx) : h;
      h = nn::relu(nn::add(y, res));
      if (capture) (*capture)["block" + std::to_string(b)] = h->value;
    }
    Var features = nn::global_avg_pool(h);
    return {fc_(features, ctx), features};
  }

  std::vector<std::string> feature_layers() const override {
    std::vector<std::string> ids;
    for (std::size_t b = 0; b < blocks_.size(); ++b) ids.push_back("block" + std::to_string(b));
    return ids;
  }
  int feature_dim() const override { return feature_dim_; }

 private:
  struct Block {
    Conv1d conv1;
    Conv1d conv2;
    bool has_downsample = false;
    Conv1d downsample;
  };

  std::vector<Block> blocks_;
  Linear fc_;
  int feature_dim_ = 0;
};

}  // namespace

std::unique_ptr<Network> make_tcn(const ModelOptions& options) {
  return std::make_unique<Tcn>(options);
}

}  // namespace tsb::detail
