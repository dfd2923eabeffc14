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

// Tape-based reverse-mode differentiation over dense rank-2 tensors.
//
// A Graph records every primitive applied during one forward pass. Parameters
// enter the graph bound to their owning Tensor, so backward() accumulates
// straight into Tensor::grad(). Nodes are appended in evaluation order, which
// makes reverse creation order a valid topological order for backward.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "empchat/tensor.hpp"

namespace empchat {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

enum class Mode { kEval, kTrain };

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(Mode mode = Mode::kEval, std::uint64_t seed = 0)
      : mode_(mode), rng_(seed) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const noexcept { return mode_ == Mode::kTrain; }
  std::mt19937_64& rng() noexcept { return rng_; }

  /// Leaf holding a copy of `value`; never receives gradient.
  Var<T> constant(Tensor<T> value);

  /// Leaf bound to `param`. Gradient flows into param.grad() when
  /// param.requires_grad() is set.
  Var<T> parameter(Tensor<T>& param);

  /// Leaf reading `value` in place without copying; never receives gradient.
  /// `value` must outlive the graph.
  Var<T> constant_ref(const Tensor<T>& value);

  const Tensor<T>& value(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of node `id` (parameter grads for bound leaves).
  std::span<T> grad(int id);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable parameter.
  /// Parameter gradients accumulate across calls; intermediate buffers are
  /// reset on entry. Rejects a non-scalar loss.
  void backward(Var<T> loss);

  /// Appends a computed node. `fn` is dropped when no parent needs grad.
  Var<T> push(Tensor<T> value, const std::vector<int>& parents, BackwardFn fn);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* bound = nullptr;
    Tensor<T>* grad_sink = nullptr;
    std::vector<T> grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Mode mode_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}

// Primitive family. Every op validates shapes and throws ShapeError naming
// both operands on mismatch.

/// [m x k] . [k x n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// [m x k] . [n x k]^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
/// Adds a length-n row vector to every row of an [m x n] matrix.
template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
/// Rows of `table` selected by `ids`.
template <typename T>
Var<T> embedding(Var<T> table, std::span<const int> ids);
/// Softmax over the last axis with max subtraction. With `causal`, entry
/// (i, j) for j > i is excluded and comes out exactly 0.
template <typename T>
Var<T> softmax(Var<T> a, bool causal = false);
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
/// tanh approximation used by GPT.
template <typename T>
Var<T> gelu(Var<T> x);
/// Inverted dropout. Identity in eval mode or when p == 0.
template <typename T>
Var<T> dropout(Var<T> x, T p);
/// Mean cross-entropy of each row of `logits` against `targets`. Rows whose
/// target equals `ignore_index` contribute nothing. Returns a scalar.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets, int ignore_index = -100);
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count);
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);
/// Row `r` as a 1 x n matrix.
template <typename T>
Var<T> select_row(Var<T> a, std::size_t r);
template <typename T>
Var<T> sum(Var<T> a);

}  // namespace empchat
