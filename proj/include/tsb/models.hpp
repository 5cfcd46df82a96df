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

#ifndef TSB_MODELS_HPP_
#define TSB_MODELS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tsb/nn/layers.hpp"

namespace tsb {

enum class Architecture { kInceptionTime, kLstmFcn, kTcn, kMacnn };

std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);

// Architecture hyperparameters. The meaning of the width knobs depends on
// the architecture:
//   inception_time: filters per branch, depth modules (residual every 3),
//                   kernel_size is the longest branch kernel.
//   lstm_fcn:       conv widths (filters, 2*filters, filters), hidden LSTM cells.
//   tcn:            filters channels, depth residual blocks, kernel_size taps.
//   macnn:          filters per branch in the first stage (doubling per stage),
//                   depth blocks per stage.
struct ModelOptions {
  Architecture architecture = Architecture::kInceptionTime;
  int num_classes = 2;
  int input_length = 0;
  std::uint64_t seed = 0;
  int filters = 32;
  int depth = 3;
  int kernel_size = 40;
  int hidden = 8;

  // Reduced-width defaults that keep CPU training in minutes.
  static ModelOptions lite(Architecture a, int num_classes, int input_length,
                           std::uint64_t seed = 0);

  nlohmann::json to_json() const;
  // Unspecified fields take the lite defaults for the architecture.
  static ModelOptions from_json(const nlohmann::json& j, int num_classes, int input_length);
  bool operator==(const ModelOptions&) const = default;
};

// Layer id -> (N, C, T) activation of the last forward.
using ActivationCapture = std::map<std::string, nn::Tensor>;

// Selects feature layers to record during a forward pass.
struct ActivationProbe {
  std::vector<std::string> layer_ids;  // in depth order
  ActivationCapture capture;
};

namespace detail {

class Network {
 public:
  struct Output {
    nn::Var logits;    // (N, K, 1)
    nn::Var features;  // (N, F, 1), input of the classifier head
  };

  virtual ~Network() = default;
  // Eval-mode forwards never modify parameters or buffers; training-mode
  // forwards with unfrozen batch norm update the running statistics.
  virtual Output forward(const nn::Var& x, const nn::ForwardContext& ctx,
                         ActivationCapture* capture) const = 0;
  virtual std::vector<std::string> feature_layers() const = 0;
  virtual int feature_dim() const = 0;

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

 protected:
  nn::ParamStore store_;
};

std::unique_ptr<Network> make_network(const ModelOptions& options);

}  // namespace detail

// An instrumented classifier: parameters, batch-norm buffers and the freeze
// switch. Copies are deep. A handle is single-writer; concurrent const calls
// are safe only while nothing trains it.
class ModelHandle {
 public:
  explicit ModelHandle(const ModelOptions& options);
  ModelHandle(const ModelHandle& other);
  ModelHandle& operator=(const ModelHandle& other);
  ModelHandle(ModelHandle&&) noexcept;
  ModelHandle& operator=(ModelHandle&&) noexcept;
  ~ModelHandle();

  const ModelOptions& options() const { return options_; }
  Architecture architecture() const { return options_.architecture; }
  int num_classes() const { return options_.num_classes; }
  int input_length() const { return options_.input_length; }

  bool bn_frozen() const { return bn_frozen_; }
  // Frozen: stored statistics in every forward, no running updates, and the
  // affine scale/shift leave the trainable set.
  void set_bn_frozen(bool frozen);

  // Eval-mode logits.
  std::vector<double> forward_logits(std::span<const double> x) const;
  nn::Tensor forward_logits(const nn::Tensor& batch) const;
  int predict(std::span<const double> x) const;
  std::vector<int> predict(const nn::Tensor& batch) const;

  // d CE(f(x), target) / dx in eval mode.
  std::vector<double> input_gradient(std::span<const double> x, int target) const;
  // Per-sample gradients of the summed cross-entropy, shape of batch.
  nn::Tensor input_gradient(const nn::Tensor& batch, std::span<const int> targets) const;

  std::vector<std::string> feature_layers() const;
  // The last two feature layers before the head.
  std::vector<std::string> default_probe_layers() const;
  // Eval-mode forward that records the probe's layers.
  nn::Tensor forward_probed(const nn::Tensor& batch, ActivationProbe& probe) const;
  // Per-channel L2 norm over time of each probed layer for one series.
  std::map<std::string, std::vector<double>> channel_norms(std::span<const double> x,
                                                           ActivationProbe& probe) const;
  // Batched form: layer id -> (N, C, 1).
  std::map<std::string, nn::Tensor> channel_norms(const nn::Tensor& batch,
                                                  ActivationProbe& probe) const;

  int feature_dim() const;
  std::vector<double> penultimate_features(std::span<const double> x) const;
  nn::Tensor penultimate_features(const nn::Tensor& batch) const;

  // Graph-recording forward for training. Batch norm follows bn_frozen.
  nn::Var train_forward(const nn::Tensor& batch);
  std::vector<nn::Var> trainable_parameters() const;
  void zero_grad();

  const nn::ParamStore& store() const { return net_->store(); }
  nn::ParamStore& store() { return net_->store(); }
  std::size_t parameter_count() const { return store().parameter_count(); }

  // Named snapshot of parameters and buffers.
  std::map<std::string, nn::Tensor> state() const;
  std::map<std::string, nn::Tensor> batch_norm_statistics() const;

 private:
  void check_input(int length) const;
  void copy_state_from(const ModelHandle& other);

  ModelOptions options_;
  bool bn_frozen_ = false;
  std::unique_ptr<detail::Network> net_;
};

inline ModelHandle build_model(const ModelOptions& options) { return ModelHandle(options); }

// Binary container: magic, version, JSON header (options, bn_frozen, tensor
// table) and raw little-endian doubles.
void save_checkpoint(const ModelHandle& model, const std::filesystem::path& path);

struct CheckpointExpectation {
  std::optional<Architecture> architecture;
  std::optional<int> num_classes;
  std::optional<int> input_length;
};

ModelHandle load_checkpoint(const std::filesystem::path& path,
                            const CheckpointExpectation& expect = {});

}  // namespace tsb

#endif  // TSB_MODELS_HPP_
