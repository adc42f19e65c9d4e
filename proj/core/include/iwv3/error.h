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

#ifndef IWV3_ERROR_H_
#define IWV3_ERROR_H_

#include <stdexcept>
#include <string>

namespace iwv3 {

// Broad failure classes. The command line tool maps each to an exit code.
enum class ErrorCode {
  kInvalidArgument,  // Malformed input image, bad parameters.
  kWeightsMismatch,  // Weight file does not fit the architecture or stream.
  kIo,               // File system failures.
  kCorruptStream,    // Bitstream header or payload damage.
  kNonFinite,        // NaN/Inf in a training loss or gradient.
  kShapeMismatch,    // Tensor shapes do not conform.
  kState,            // API misuse, e.g. a recording consumed twice.
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace iwv3

#endif  // IWV3_ERROR_H_
