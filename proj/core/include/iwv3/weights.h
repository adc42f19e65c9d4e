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

#ifndef IWV3_WEIGHTS_H_
#define IWV3_WEIGHTS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iwv3/tensor.h"

namespace iwv3 {

// Ordered set of named tensors. Names are unique.
class ModelWeights {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  bool Contains(const std::string& name) const;
  // Throws kWeightsMismatch when absent.
  const Tensor& Get(const std::string& name) const;
  // Throws kWeightsMismatch when absent or shaped differently.
  const Tensor& Get(const std::string& name, const Shape& shape) const;

  // Appends a new entry; throws kState on a duplicate name.
  void Add(const std::string& name, Tensor value);
  // Replaces an existing entry or appends a new one.
  void Set(const std::string& name, Tensor value);

  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Total number of scalar parameters.
  size_t NumValues() const;

  // Copy with every value rounded to 32-bit float precision, i.e. exactly
  // what a save/load round trip produces.
  ModelWeights RoundedToFloat() const;

 private:
  int Find(const std::string& name) const;
  std::vector<Entry> entries_;
};

// "IWTW" file format.
std::vector<uint8_t> SaveWeights(const ModelWeights& weights);
ModelWeights LoadWeights(std::span<const uint8_t> bytes);

// FNV-1a 64 over the serialized form.
uint64_t WeightsChecksum(const ModelWeights& weights);

}  // namespace iwv3

#endif  // IWV3_WEIGHTS_H_
