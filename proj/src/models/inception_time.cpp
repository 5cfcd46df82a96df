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

// InceptionTime: stacked inception modules (bottleneck, three parallel
// convolutions of decreasing kernel size and a max-pool branch) with a
// residual shortcut every three modules, global average pooling and a dense
// head.

#include "networks.hpp"

namespace tsb::detail {

using nn::BatchNorm1d;
using nn::Conv1d;
using nn::ForwardContext;
using nn::Linear;
using nn::Var;

namespace {

class InceptionTime final : public Network {
 public:
  explicit InceptionTime(const ModelOptions& o) {
    Rng rng(o.seed);
    const int f = o.filters;
    std::vector<int> kernels;
    for (int i = 0; i < 3; ++i) {
      int k = std::max(1, o.kernel_size >> i);
      if (k % 2 == 0) k -= 1;
      kernels.push_back(std::max(k, 1));
    }
    int in = 1;
    int residual_in = 1;
    for (int d = 0; d < o.depth; ++d) {
      const std::string name = "inception" + std::to_string(d);
      Module m;
      m.has_bottleneck = in > 1;
      int branch_in = in;
      if (m.has_bottleneck) {
        m.bottleneck = Conv1d::create(store_, name + ".bottleneck", in, f, 1, {}, false, rng);
        branch_in = f;
      }
      for (std::size_t b = 0; b < kernels.size(); ++b) {
        m.convs.push_back(Conv1d::create(store_, name + ".conv" + std::to_string(b), branch_in,
                                         f, kernels[b], nn::same_padding(kernels[b]), false,
                                         rng));
      }
      m.pool_conv = Conv1d::create(store_, name + ".pool_conv", in, f, 1, {}, false, rng);
      m.bn = BatchNorm1d::create(store_, name + ".bn", 4 * f);
      modules_.push_back(std::move(m));
      in = 4 * f;
      if (d % 3 == 2) {
        const std::string sname = "shortcut" + std::to_string(d / 3);
        Shortcut s;
        s.conv = Conv1d::create(store_, sname + ".conv", residual_in, in, 1, {}, false, rng);
        s.bn = BatchNorm1d::create(store_, sname + ".bn", in);
        shortcuts_.push_back(std::move(s));
        residual_in = in;
      }
    }
    feature_dim_ = in;
    fc_ = Linear::create(store_, "fc", in, o.num_classes, rng);
  }

  Output forward(const Var& x, const ForwardContext& ctx,
                 ActivationCapture* capture) const override {
    Var h = x;
    Var residual = x;
    for (std::size_t d = 0; d < modules_.size(); ++d) {
      const Module& m = modules_[d];
      Var branch_in = m.has_bottleneck ? m.bottleneck(h, ctx) : h;
      std::vector<Var> parts;
      for (const auto& conv : m.convs) parts.push_back(conv(branch_in, ctx));
      parts.push_back(m.pool_conv(nn::max_pool1d(h, 3, 1, 1, 1), ctx));
      h = nn::relu(m.bn(nn::concat_channels(parts), ctx));
      if (d % 3 == 2) {
        const Shortcut& s = shortcuts_[d / 3];
        h = nn::relu(nn::add(h, s.bn(s.conv(residual, ctx), ctx)));
        residual = h;
      }
      if (capture) (*capture)["inception" + std::to_string(d)] = h->value;
    }
    Var features = nn::global_avg_pool(h);
    return {fc_(features, ctx), features};
  }

  std::vector<std::string> feature_layers() const override {
    std::vector<std::string> ids;
    for (std::size_t d = 0; d < modules_.size(); ++d) ids.push_back("inception" + std::to_string(d));
    return ids;
  }

  int feature_dim() const override { return feature_dim_; }

 private:
  struct Module {
    bool has_bottleneck = false;
    Conv1d bottleneck;
    std::vector<Conv1d> convs;
    Conv1d pool_conv;
    BatchNorm1d bn;
  };
  struct Shortcut {
    Conv1d conv;
    BatchNorm1d bn;
  };

  std::vector<Module> modules_;
  std::vector<Shortcut> shortcuts_;
  Linear fc_;
  int feature_dim_ = 0;
};

}  // namespace

std::unique_ptr<Network> make_inception_time(const ModelOptions& options) {
  return std::make_unique<InceptionTime>(options);
}

}  // namespace tsb::detail
