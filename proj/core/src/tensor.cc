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

#include "iwv3/tensor.h"

#include <numeric>
#include <sstream>
#include <utility>

#include "iwv3/error.h"

namespace iwv3 {

namespace internal {

struct Node {
  std::vector<int> inputs;
  size_t size = 0;
  BackwardFn backward;  // Empty for leaves.
};

struct TapeState {
  std::vector<Node> nodes;
  struct Watched {
    std::string name;
    int node;
    Shape shape;
  };
  std::vector<Watched> watched;
  bool consumed = false;
};

}  // namespace internal

size_t NumElements(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) Fail(ErrorCode::kShapeMismatch, "negative dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)) {
  if (NumElements(shape_) != values.size()) {
    Fail(ErrorCode::kShapeMismatch,
         "value count " + std::to_string(values.size()) +
             " does not match shape " + ShapeString(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor::Tensor(Shape shape, Storage values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (!data_ || NumElements(shape_) != data_->size()) {
    Fail(ErrorCode::kShapeMismatch,
         "storage does not match shape " + ShapeString(shape_));
  }
}

Tensor Tensor::Zeros(Shape shape) { return Full(std::move(shape), 0.0); }

Tensor Tensor::Full(Shape shape, double value) {
  const size_t n = NumElements(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::Scalar(double value) { return Tensor({}, {value}); }

double Tensor::item() const {
  if (size() != 1) {
    Fail(ErrorCode::kShapeMismatch,
         "item() on tensor of shape " + ShapeString(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::Detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor RecordOp(Shape shape, Tensor::Storage values,
                std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  Tensor out(std::move(shape), std::move(values));
  std::shared_ptr<internal::TapeState> tape;
  for (const Tensor* in : inputs) {
    if (!in->recorded()) continue;
    if (tape && tape != in->tape_) {
      Fail(ErrorCode::kState, "op mixes tensors from different recordings");
    }
    tape = in->tape_;
  }
  if (!tape) return out;
  if (tape->consumed) {
    Fail(ErrorCode::kState, "recording already consumed by backward");
  }
  internal::Node node;
  node.size = out.size();
  node.backward = std::move(fn);
  for (const Tensor* in : inputs) node.inputs.push_back(in->node_);
  tape->nodes.push_back(std::move(node));
  out.tape_ = std::move(tape);
  out.node_ = static_cast<int>(out.tape_->nodes.size()) - 1;
  return out;
}

Tape::Tape() : state_(std::make_shared<internal::TapeState>()) {}

Tensor Tape::Watch(const std::string& name, const Tensor& value) {
  if (state_->consumed) {
    Fail(ErrorCode::kState, "recording already consumed by backward");
  }
  for (const auto& w : state_->watched) {
    if (w.name == name) {
      Fail(ErrorCode::kState, "duplicate watched name " + name);
    }
  }
  internal::Node node;
  node.size = value.size();
  state_->nodes.push_back(std::move(node));
  Tensor out = value.Detach();
  out.tape_ = state_;
  out.node_ = static_cast<int>(state_->nodes.size()) - 1;
  state_->watched.push_back({name, out.node_, value.shape()});
  return out;
}

size_t Tape::num_nodes() const { return state_->nodes.size(); }
bool Tape::consumed() const { return state_->consumed; }

Gradients Backward(Tape& tape, const Tensor& loss) {
  auto& state = *tape.state_;
  if (state.consumed) {
    Fail(ErrorCode::kState, "recording consumed twice");
  }
  if (loss.size() != 1) {
    Fail(ErrorCode::kShapeMismatch,
         "loss must be scalar, got " + ShapeString(loss.shape()));
  }
  if (!loss.recorded() || loss.tape_ != tape.state_) {
    Fail(ErrorCode::kState, "loss is not part of this recording");
  }
  state.consumed = true;

  std::vector<std::vector<double>> grads(state.nodes.size());
  std::vector<bool> is_watched(state.nodes.size(), false);
  for (const auto& w : state.watched) is_watched[w.node] = true;

  grads[loss.node()].assign(1, 1.0);
  std::vector<std::vector<double>*> in_ptrs;
  for (int n = loss.node(); n >= 0; --n) {
    internal::Node& node = state.nodes[n];
    if (grads[n].empty() || !node.backward) continue;
    in_ptrs.clear();
    for (int in : node.inputs) {
      if (in < 0) {
        in_ptrs.push_back(nullptr);
        continue;
      }
      if (grads[in].empty()) grads[in].assign(state.nodes[in].size, 0.0);
      in_ptrs.push_back(&grads[in]);
    }
    node.backward(grads[n], in_ptrs);
    node.backward = nullptr;  // Releases captured storage early.
    if (!is_watched[n]) std::vector<double>().swap(grads[n]);
  }

  Gradients out;
  for (const auto& w : state.watched) {
    std::vector<double> g = grads[w.node].empty()
                                ? std::vector<double>(NumElements(w.shape), 0.0)
                                : std::move(grads[w.node]);
    out.emplace(w.name, Tensor(w.shape, std::move(g)));
  }
  state.nodes.clear();
  return out;
}

}  // namespace iwv3
