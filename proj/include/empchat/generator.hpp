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

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "empchat/corpus.hpp"
#include "empchat/model.hpp"
#include "empchat/tokenizer.hpp"

namespace empchat {

enum class Strategy { kGreedy, kTopK, kNucleus };

Strategy parse_strategy(std::string_view name);
std::string_view strategy_name(Strategy s);

struct DecodeParams {
  Strategy strategy = Strategy::kTopK;
  std::size_t k = 40;
  double p = 0.9;
  double temperature = 0.7;
  std::size_t max_new_tokens = 40;
  std::uint64_t seed = 0;

  static DecodeParams greedy(std::size_t max_new_tokens = 40) {
    DecodeParams d;
    d.strategy = Strategy::kGreedy;
    d.max_new_tokens = max_new_tokens;
    return d;
  }

  void validate() const;
};

/// Decodes a reply after the context encoding (which ends with the
/// reply-opening <bot>) until <eos>, max_new_tokens or n_positions. Special
/// tokens other than <eos> are never emitted. Returns reply token ids
/// without the <eos>.
std::vector<int> generate_ids(const Model<float>& model, const Vocab& vocab,
                              const std::vector<std::string>& persona,
                              const std::vector<Turn>& history, const DecodeParams& params);

/// generate_ids decoded to text. Throws std::invalid_argument on an empty
/// history and DataError if the context cannot fit n_positions.
std::string generate(const Model<float>& model, const Vocab& vocab,
                     const std::vector<std::string>& persona, const std::vector<Turn>& history,
                     const DecodeParams& params);

struct EmotionPrediction {
  int label = 0;
  std::vector<double> probabilities;
};

/// Context-only emotion prediction read at the reply-opening <bot>.
EmotionPrediction classify_emotion(const Model<float>& model, const Vocab& vocab,
                                   const std::vector<std::string>& persona,
                                   const std::vector<Turn>& history);

}  // namespace empchat
