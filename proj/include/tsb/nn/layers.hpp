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

#ifndef TSB_NN_LAYERS_HPP_
#define TSB_NN_LAYERS_HPP_

#include <string>
#include <vector>

#include "tsb/nn/ops.hpp"
#include "tsb/random.hpp"

namespace tsb::nn {

enum class ParamKind { kWeight, kBatchNormAffine };

struct ParamEntry {
  std::string name;
  Var node;
  ParamKind kind;
};

struct BufferEntry {
  std::string name;
  Var node;
};

// Owns every learnable tensor and persistent buffer of a network, in
// registration order. Names are unique and stable across builds.
class ParamStore {
 public:
  Var add_param(const std::string& name, Tensor init, ParamKind kind = ParamKind::kWeight);
  Var add_buffer(const std::string& name, Tensor init);

  const std::vector<ParamEntry>& params() const { return params_; }
  const std::vector<BufferEntry>& buffers() const { return buffers_; }

  // Number of learnable scalars (buffers excluded).
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;

  std::vector<ParamEntry> params_;
  std::vector<BufferEntry> buffers_;
};

struct ForwardContext {
  bool training = false;
  bool bn_frozen = false;
  // When false, parameters enter the graph as constants (input gradients only).
  bool param_grads = true;
};

// The parameter itself, or a constant copy when ctx disables parameter grads.
Var use_param(const Var& p, const ForwardContext& ctx);

struct Conv1d {
  Var weight;
  Var bias;  // may be null
  ConvGeometry geometry;

  static Conv1d create(ParamStore& store, const std::string& name, int in_channels,
                       int out_channels, int kernel, ConvGeometry geometry, bool with_bias,
                       Rng& rng);
  Var operator()(const Var& x, const ForwardContext& ctx) const;
};

struct BatchNorm1d {
  Var gamma;
  Var beta;
  Var running_mean;
  Var running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm1d create(ParamStore& store, const std::string& name, int channels);
  Var operator()(const Var& x, const ForwardContext& ctx) const;
};

struct Linear {
  Var weight;
  Var bias;

  static Linear create(ParamStore& store, const std::string& name, int in_features,
                       int out_features, Rng& rng);
  Var operator()(const Var& x, const ForwardContext& ctx) const;
};

}  // namespace tsb::nn

#endif  // TSB_NN_LAYERS_HPP_
