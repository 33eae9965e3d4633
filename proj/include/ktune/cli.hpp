// Copyright 2026 The ktune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KTUNE_CLI_HPP
#define KTUNE_CLI_HPP

#include <string>
#include <vector>

namespace ktune::cli {

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRunner = 3;
inline constexpr int kExitAllInvalid = 4;
inline constexpr int kExitInsufficientData = 5;

// Runs the ktune command line. Errors go to stderr, results to files under --out.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace ktune::cli

#endif  // KTUNE_CLI_HPP
