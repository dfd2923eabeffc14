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

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "empchat/corpus.hpp"
#include "empchat/tokenizer.hpp"

namespace empchat {

/// Dialogue-state (segment) ids summed into the input embedding.
enum DialogueState : int { kStatePersona = 0, kStateUser = 1, kStateBot = 2 };
inline constexpr int kDialogueStates = 3;

/// LM label for positions that are not predicted.
inline constexpr int kIgnoreLabel = -100;

/// Parallel id sequences for one model input.
///
/// Layout: <bos> <persona> persona... then one (<user>|<bot>) marker plus
/// tokens per history turn, then <bot> reply... <eos>. The <bot> that opens
/// the reply is the emotion readout (emo_index); the final <eos> is the
/// response-selection readout (sen_index).
struct InputEncoding {
  std::vector<int> tokens;
  std::vector<int> positions;
  std::vector<int> states;
  std::vector<int> lm_labels;
  std::size_t sen_index = 0;
  std::size_t emo_index = 0;

  std::size_t size() const noexcept { return tokens.size(); }
};

/// Full sequence for `reply` in the context of `example`. LM labels are set
/// on the reply tokens and <eos> only when `is_gold`. When the sequence
/// exceeds `max_length`, the oldest history turns are dropped first (the last
/// turn is kept), then persona sentences from the back. Throws DataError if
/// it still does not fit and std::invalid_argument for an empty reply.
InputEncoding build_input(const DialogueExample& example, std::string_view reply, bool is_gold,
                          const Vocab& vocab, std::size_t max_length);

/// Context-only sequence ending with the reply-opening <bot>; emo_index and
/// sen_index both point at it. `reserve` positions are left free for tokens
/// appended later (generation).
InputEncoding build_context(const std::vector<std::string>& persona,
                            const std::vector<Turn>& history, const Vocab& vocab,
                            std::size_t max_length, std::size_t reserve = 1);

}  // namespace empchat
