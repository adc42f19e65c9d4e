// Copyright 2026 The iwv3 Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IWV3_TOOLS_CLI_H_
#define IWV3_TOOLS_CLI_H_

#include <ostream>

namespace iwv3 {

// Exit codes of the iwv3 tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitWeights = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitCorrupt = 5;
inline constexpr int kExitNonFinite = 6;

// Runs one command line. Results go to `out`, diagnostics to `err`.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err);

}  // namespace iwv3

#endif  // IWV3_TOOLS_CLI_H_
