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

// Multi-scale attention CNN. Each block runs kernels 3, 6 and 12 in
// parallel, normalizes the concatenation and reweights its channels with a
// squeeze-and-excitation gate. Three stages double the width and are
// separated by stride-2 max pooling.

#include "networks.hpp"

namespace tsb::detail {

using nn::BatchNorm1d;
using nn::Conv1d;
using nn::ForwardContext;
using nn::Linear;
using nn::Var;

namespace {

constexpr int kBranchKernels[] = {3, 6, 12};
constexpr int kStages = 3;
constexpr int kReduction = 16;

class Macnn final : public Network {
 public:
  explicit Macnn(const ModelOptions& o) {
    Rng rng(o.seed);
    int in = 1;
    stages_.resize(kStages);
    for (int s = 0; s < kStages; ++s) {
      const int width = o.filters << s;
      for (int b = 0; b < o.depth; ++b) {
        const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
        Block blk;
        for (std::size_t k = 0; k < std::size(kBranchKernels); ++k) {
          blk.branches.push_back(Conv1d::create(store_, name + ".conv" + std::to_string(k), in,
                                                width, kBranchKernels[k],
                                                nn::same_padding(kBranchKernels[k]), true, rng));
        }
        const int out = 3 * width;
        const int squeezed = std::max(1, out / kReduction);
        blk.bn = BatchNorm1d::create(store_, name + ".bn", out);
        blk.squeeze = Linear::create(store_, name + ".squeeze", out, squeezed, rng);
        blk.excite = Linear::create(store_, name + ".excite", squeezed, out, rng);
        blk.id = name;
        stages_[s].push_back(std::move(blk));
        in = out;
      }
    }
    feature_dim_ = in;
    fc_ = Linear::create(store_, "fc", in, o.num_classes, rng);
  }

  Output forward(const Var& x, const ForwardContext& ctx,
                 ActivationCapture* capture) const override {
    Var h = x;
    for (int s = 0; s < kStages; ++s) {
      if (s > 0) h = nn::max_pool1d(h, 3, 2, 1, 1);
      for (const Block& blk : stages_[s]) {
        std::vector<Var> parts;
        for (const auto& conv : blk.branches) parts.push_back(conv(h, ctx));
        Var y = nn::relu(blk.bn(nn::concat_channels(parts), ctx));
        Var gate = nn::sigmoid(
            blk.excite(nn::relu(blk.squeeze(nn::global_avg_pool(y), ctx)), ctx));
        h = nn::scale_channels(y, gate);
        if (capture) (*capture)[blk.id] = h->value;
      }
    }
    Var features = nn::global_avg_pool(h);
    return {fc_(features, ctx), features};
  }

  std::vector<std::string> feature_layers() const override {
    std::vector<std::string> ids;
    for (const auto& stage : stages_) {
      for (const auto& blk : stage) ids.push_back(blk.id);
    }
    return ids;
  }
  int feature_dim() const override { return feature_dim_; }

 private:
  struct Block {
    std::string id;
    std::vector<Conv1d> branches;
    BatchNorm1d bn;
    Linear squeeze;
    Linear excite;
  };

  std::vector<std::vector<Block>> stages_;
  Linear fc_;
  int feature_dim_ = 0;
};

}  // namespace

std::unique_ptr<Network> make_macnn(const ModelOptions& options) {
  return std::make_unique<Macnn>(options);
}

}  // namespace tsb::detail
