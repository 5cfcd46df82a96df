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

#ifndef TSB_TESTS_TEST_UTIL_HPP_
#define TSB_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tsb/dataset.hpp"
#include "tsb/models.hpp"
#include "tsb/nn/tensor.hpp"
#include "tsb/random.hpp"

namespace tsb::testing {

inline std::filesystem::path data_dir() { return TSB_DATA_DIR; }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tsb_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline nn::Tensor random_tensor(nn::Shape s, Rng& rng, double scale = 1.0) {
  nn::Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// |a - b| / max(|a|, |b|), with a floor that keeps near-zero pairs from
// dividing by nothing.
inline double relative_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f at coordinate i of x.
inline double central_difference(const std::function<double(const nn::Tensor&)>& f,
                                 nn::Tensor x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// Distinct random coordinates of a tensor of `size` elements.
inline std::vector<std::size_t> sample_coordinates(std::size_t size, std::size_t count, Rng& rng) {
  std::vector<std::size_t> all(size);
  for (std::size_t i = 0; i < size; ++i) all[i] = i;
  rng.shuffle(std::span<std::size_t>(all));
  all.resize(std::min(size, count));
  return all;
}

// Smallest widths that still exercise every layer kind.
inline ModelOptions toy(Architecture a, int k = 3, int length = 24, std::uint64_t seed = 5) {
  ModelOptions o = ModelOptions::lite(a, k, length, seed);
  o.filters = 4;
  o.hidden = 3;
  if (a == Architecture::kInceptionTime) o.kernel_size = 8;
  if (a == Architecture::kTcn) o.depth = 2;
  return o;
}

// Moves batch-norm buffers away from their identity initialization so the
// eval path is exercised with non-trivial statistics.
inline void perturb_buffers(ModelHandle& m, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& b : m.store().buffers()) {
    const bool is_var = b.name.ends_with("running_var");
    for (std::size_t i = 0; i < b.node->value.size(); ++i) {
      b.node->value[i] = is_var ? 0.5 + rng.uniform() : 0.2 * rng.normal();
    }
  }
}

// Zeroes the classifier weights and puts all bias mass on class k, so the
// model predicts k for every input.
inline void make_constant_predictor(ModelHandle& m, int k) {
  for (const auto& p : m.store().params()) {
    if (p.name == "fc.weight") p.node->value.fill(0.0);
    if (p.name == "fc.bias") {
      p.node->value.fill(0.0);
      p.node->value[static_cast<std::size_t>(k)] = 1.0;
    }
  }
}

// Labels every sample with the model's own prediction: a set on which the
// model is perfect by construction.
inline SeriesDataset relabel_with_predictions(const ModelHandle& m, SeriesDataset d) {
  for (auto& s : d.samples) s.label = m.predict(s.values);
  return d;
}

// n standard-normal series with uniformly drawn labels in [0, k).
inline SeriesDataset random_dataset(int n, int k, int length, std::uint64_t seed) {
  Rng rng(seed);
  SeriesDataset d;
  d.name = "random";
  d.num_classes = k;
  d.series_length = length;
  for (int c = 0; c < k; ++c) d.class_labels.push_back(c);
  for (int i = 0; i < n; ++i) {
    LabeledSeries s;
    s.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    for (int t = 0; t < length; ++t) s.values.push_back(rng.normal());
    d.samples.push_back(std::move(s));
  }
  return d;
}

// n series of two separable shapes: class 0 rising ramp, class 1 falling,
// plus seeded noise. Labels alternate.
inline SeriesDataset ramp_dataset(int n, int length, std::uint64_t seed, double noise = 0.1) {
  Rng rng(seed);
  SeriesDataset d;
  d.name = "ramps";
  d.num_classes = 2;
  d.series_length = length;
  d.class_labels = {0.0, 1.0};
  for (int i = 0; i < n; ++i) {
    LabeledSeries s;
    s.label = i % 2;
    for (int t = 0; t < length; ++t) {
      const double ramp = -1.0 + 2.0 * t / (length - 1);
      s.values.push_back((s.label == 0 ? ramp : -ramp) + noise * rng.normal());
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace tsb::testing

#endif  // TSB_TESTS_TEST_UTIL_HPP_
