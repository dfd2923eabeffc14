// Copyright 2026 The empchat Authors
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

#include "empchat/graph.hpp"

#include <algorithm>

namespace empchat {

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Graph<T>::parameter(Tensor<T>& param) {
  Node node;
  node.bound = &param;
  node.grad_sink = &param;
  node.needs_grad = param.requires_grad();
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Graph<T>::constant_ref(const Tensor<T>& value) {
  Node node;
  node.bound = &value;
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const Tensor<T>& Graph<T>::value(int id) const {
  const Node& node = nodes_[id];
  return node.bound != nullptr ? *node.bound : node.value;
}

template <typename T>
std::span<T> Graph<T>::grad(int id) {
  Node& node = nodes_[id];
  if (node.grad_sink != nullptr) return node.grad_sink->grad();
  if (node.grad.size() != node.value.numel()) node.grad.assign(node.value.numel(), T{});
  return node.grad;
}

template <typename T>
Var<T> Graph<T>::push(Tensor<T> value, const std::vector<int>& parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (int p : parents) node.needs_grad = node.needs_grad || nodes_[p].needs_grad;
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph != this) throw std::invalid_argument("backward: loss belongs to another graph");
  if (value(loss.id).numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_string(value(loss.id).shape()));
  }
  for (Node& node : nodes_) {
    if (node.grad_sink == nullptr) std::fill(node.grad.begin(), node.grad.end(), T{});
  }
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss.id)[0] += T{1};
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, id);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace empchat
