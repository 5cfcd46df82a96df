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

#ifndef TSB_SRC_MODELS_NETWORKS_HPP_
#define TSB_SRC_MODELS_NETWORKS_HPP_

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "tsb/models.hpp"
#include "tsb/random.hpp"

namespace tsb::detail {

std::unique_ptr<Network> make_inception_time(const ModelOptions& options);
std::unique_ptr<Network> make_lstm_fcn(const ModelOptions& options);
std::unique_ptr<Network> make_tcn(const ModelOptions& options);
std::unique_ptr<Network> make_macnn(const ModelOptions& options);

}  // namespace tsb::detail

#endif  // TSB_SRC_MODELS_NETWORKS_HPP_
