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

// Causal transformer decoder with summed word, position and dialogue-state
// embeddings and three readouts: a weight-tied LM head over every position,
// a response-selection score read at the final <eos>, and emotion logits
// read at the <bot> token that opens the reply.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "empchat/encoding.hpp"
#include "empchat/graph.hpp"
#include "empchat/optim.hpp"

namespace empchat {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t vocab_size = 0;
  std::size_t n_positions = 256;
  std::size_t n_states = kDialogueStates;
  std::size_t n_emotions = 32;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

template <typename T>
struct DecoderBlock {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> attn_weight, attn_bias;  // d x 3d fused query/key/value
  Tensor<T> proj_weight, proj_bias;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> fc_weight, fc_bias;
  Tensor<T> out_weight, out_bias;
};

template <typename T>
struct Model {
  ModelConfig config;
  Tensor<T> word_embedding;      // vocab x d, shared with the LM head
  Tensor<T> position_embedding;  // n_positions x d
  Tensor<T> state_embedding;     // n_states x d
  std::vector<DecoderBlock<T>> blocks;
  Tensor<T> final_gain, final_bias;
  Tensor<T> selection_weight, selection_bias;  // d x 1
  Tensor<T> emotion_weight, emotion_bias;      // d x n_emotions

  /// Weights ~ N(0, 0.02), biases 0, layer-norm gains 1; deterministic in
  /// config.seed.
  static Model init(const ModelConfig& config);

  /// Every trainable tensor with a stable name, in checkpoint order.
  ParamList<T> parameters();

  void set_requires_grad(bool on);

  template <typename U>
  Model<U> cast() const;
};

struct ForwardOptions {
  /// Compute LM logits at all (distractor and context-only passes skip them).
  bool lm_logits = true;
  /// Only the last position's LM logits (decoding).
  bool lm_last_only = false;
};

template <typename T>
struct ForwardResult {
  std::optional<Var<T>> lm_logits;  // L x vocab, or 1 x vocab with lm_last_only
  Var<T> selection_score;           // 1 x 1
  Var<T> emotion_logits;            // 1 x n_emotions
};

/// Records the forward pass on `graph`; dropout is active when the graph is
/// in training mode. The mutable overload binds parameters for gradient
/// accumulation, the const overload reads them only and is safe to call
/// concurrently on a frozen model. Throws DataError when the input exceeds
/// n_positions.
template <typename T>
ForwardResult<T> forward(Graph<T>& graph, Model<T>& model, const InputEncoding& input,
                         const ForwardOptions& options = {});
template <typename T>
ForwardResult<T> forward(Graph<T>& graph, const Model<T>& model, const InputEncoding& input,
                         const ForwardOptions& options = {});

}  // namespace empchat
