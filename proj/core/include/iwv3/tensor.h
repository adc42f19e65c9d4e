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

#ifndef IWV3_TENSOR_H_
#define IWV3_TENSOR_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace iwv3 {

// Dimensions, outermost first. Convolutional tensors are (N, C, H, W);
// an empty shape denotes a scalar.
using Shape = std::vector<int>;

size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

namespace internal {
struct TapeState;
}  // namespace internal

// Dense array of doubles. Values are immutable once constructed, so copies
// are cheap and share storage. A tensor produced while one of its inputs
// belonged to a Tape carries a node id on that tape.
class Tensor {
 public:
  using Storage = std::shared_ptr<const std::vector<double>>;

  Tensor();  // Scalar 0.
  Tensor(Shape shape, std::vector<double> values);
  Tensor(Shape shape, Storage values);

  static Tensor Zeros(Shape shape);
  static Tensor Full(Shape shape, double value);
  static Tensor Scalar(double value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[i]; }
  size_t size() const { return data_->size(); }

  std::span<const double> values() const { return *data_; }
  const double* data() const { return data_->data(); }
  double operator[](size_t i) const { return (*data_)[i]; }
  // Value of a single-element tensor.
  double item() const;

  const Storage& storage() const { return data_; }
  bool recorded() const { return node_ >= 0; }
  int node() const { return node_; }

  // Same values, no recording.
  Tensor Detach() const;

 private:
  friend class Tape;
  friend std::map<std::string, Tensor> Backward(class Tape& tape,
                                                const Tensor& loss);
  friend Tensor RecordOp(Shape, Storage, std::initializer_list<const Tensor*>,
                         std::function<void(std::span<const double>,
                                            std::span<std::vector<double>*>)>);

  Shape shape_;
  Storage data_;
  std::shared_ptr<internal::TapeState> tape_;
  int node_ = -1;
};

// Backward closure of a recorded op: receives the gradient of the op's
// output and one gradient buffer per input (null for constant inputs), and
// accumulates into the buffers.
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<std::vector<double>*> grad_in)>;

// Creates the result tensor of an op. When any input is recorded the op is
// appended to that input's tape; inputs from two different tapes are an
// error. Backward closures must capture storage, never Tensor objects.
Tensor RecordOp(Shape shape, Tensor::Storage values,
                std::initializer_list<const Tensor*> inputs, BackwardFn fn);

// A single reverse-mode recording. Single threaded.
class Tape {
 public:
  Tape();

  // Registers `value` as a named differentiable leaf.
  Tensor Watch(const std::string& name, const Tensor& value);

  size_t num_nodes() const;
  bool consumed() const;

 private:
  friend std::map<std::string, Tensor> Backward(Tape& tape,
                                                const Tensor& loss);
  std::shared_ptr<internal::TapeState> state_;
};

using Gradients = std::map<std::string, Tensor>;

// Reverse sweep from a scalar `loss`. Returns one gradient per watched leaf
// (zeros for leaves the loss does not reach). A tape can be swept once.
Gradients Backward(Tape& tape, const Tensor& loss);

}  // namespace iwv3

#endif  // IWV3_TENSOR_H_
