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

#include "empchat/encoding.hpp"

#include <deque>
#include <stdexcept>

#include "empchat/error.hpp"

namespace empchat {
namespace {

struct EncodedTurn {
  Role role;
  std::vector<int> ids;
};

struct Pieces {
  std::vector<std::vector<int>> persona;
  std::deque<EncodedTurn> history;

  std::size_t context_length() const {
    std::size_t n = 2;  // <bos> <persona>
    for (const auto& p : persona) n += p.size();
    for (const auto& t : history) n += 1 + t.ids.size();
    return n + 1;  // reply-opening <bot>
  }
};

Pieces encode_pieces(const std::vector<std::string>& persona, const std::vector<Turn>& history,
                     const Vocab& vocab) {
  Pieces pieces;
  for (const std::string& s : persona) pieces.persona.push_back(vocab.encode(s));
  for (const Turn& t : history) pieces.history.push_back(EncodedTurn{t.role, vocab.encode(t.text)});
  return pieces;
}

// Drops the oldest turns (keeping the latest), then persona sentences from the
// back, until `extra` more positions fit in `max_length`.
void truncate(Pieces& pieces, std::size_t extra, std::size_t max_length) {
  while (pieces.context_length() + extra > max_length && pieces.history.size() > 1) {
    pieces.history.pop_front();
  }
  while (pieces.context_length() + extra > max_length && !pieces.persona.empty()) {
    pieces.persona.pop_back();
  }
  if (pieces.context_length() + extra > max_length) {
    throw DataError("input of " + std::to_string(pieces.context_length() + extra) +
                    " tokens exceeds the model's " + std::to_string(max_length) +
                    " positions even after truncation");
  }
}

void append(InputEncoding& enc, int token, int state, int label = kIgnoreLabel) {
  enc.positions.push_back(static_cast<int>(enc.tokens.size()));
  enc.tokens.push_back(token);
  enc.states.push_back(state);
  enc.lm_labels.push_back(label);
}

InputEncoding assemble_context(const Pieces& pieces) {
  InputEncoding enc;
  append(enc, kBos, kStatePersona);
  append(enc, kPersonaMark, kStatePersona);
  for (const auto& sentence : pieces.persona) {
    for (int id : sentence) append(enc, id, kStatePersona);
  }
  for (const EncodedTurn& t : pieces.history) {
    const bool bot = t.role == Role::kBot;
    const int state = bot ? kStateBot : kStateUser;
    append(enc, bot ? kSpeakerBot : kSpeakerUser, state);
    for (int id : t.ids) append(enc, id, state);
  }
  append(enc, kSpeakerBot, kStateBot);
  enc.emo_index = enc.tokens.size() - 1;
  enc.sen_index = enc.emo_index;
  return enc;
}

}  // namespace

InputEncoding build_input(const DialogueExample& example, std::string_view reply, bool is_gold,
                          const Vocab& vocab, std::size_t max_length) {
  const std::vector<int> reply_ids = vocab.encode(reply);
  if (reply_ids.empty()) throw std::invalid_argument("build_input: reply is empty");
  Pieces pieces = encode_pieces(example.persona, example.history, vocab);
  truncate(pieces, reply_ids.size() + 1, max_length);
  InputEncoding enc = assemble_context(pieces);
  for (int id : reply_ids) append(enc, id, kStateBot, is_gold ? id : kIgnoreLabel);
  append(enc, kEos, kStateBot, is_gold ? kEos : kIgnoreLabel);
  enc.sen_index = enc.tokens.size() - 1;
  return enc;
}

InputEncoding build_context(const std::vector<std::string>& persona,
                            const std::vector<Turn>& history, const Vocab& vocab,
                            std::size_t max_length, std::size_t reserve) {
  Pieces pieces = encode_pieces(persona, history, vocab);
  truncate(pieces, reserve, max_length);
  return assemble_context(pieces);
}

}  // namespace empchat
