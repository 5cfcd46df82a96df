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

// Command-line front end. Kept out of main() so tests can drive it.

#ifndef TSB_TOOLS_CLI_HPP_
#define TSB_TOOLS_CLI_HPP_

#include <ostream>

namespace tsb {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;  // also config errors

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tsb

#endif  // TSB_TOOLS_CLI_HPP_
