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

// Dialogue data: the empathetic-dialogues CSV distribution, the persona-chat
// style pretraining format, per-utterance example expansion and distractor
// sampling.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace empchat {

struct Utterance {
  int speaker = 0;  // 0 or 1, in dataset order
  std::string text;
};

struct DialogueRecord {
  std::string conv_id;
  std::string emotion;
  std::string situation;
  std::vector<Utterance> utterances;
};

/// Emotion classes; index is the class id.
class EmotionLabels {
 public:
  EmotionLabels() = default;
  explicit EmotionLabels(std::vector<std::string> labels);

  /// Distinct labels of `records`, sorted lexicographically.
  static EmotionLabels from_records(std::span<const DialogueRecord> records);

  /// Throws DataError for an unknown label.
  int id(std::string_view label) const;
  const std::string& name(int id) const;
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

 private:
  std::vector<std::string> labels_;
};

/// Number of emotion classes in the official empathetic-dialogues release.
inline constexpr std::size_t kOfficialEmotionCount = 32;

struct EmpatheticCorpus {
  std::vector<DialogueRecord> records;
  EmotionLabels labels;
};

/// Replaces the distribution's "_comma_" escape with ",".
std::string unescape_commas(std::string_view text);

/// Reads an empathetic-dialogues CSV. Consumes conv_id, utterance_idx,
/// context, prompt and utterance; other columns are ignored. Rows are
/// grouped by conv_id in first-seen order and ordered by utterance_idx.
EmpatheticCorpus load_empathetic_csv(const std::filesystem::path& path);

/// Official layout: train.csv, valid.csv, test.csv in one directory. The
/// label table is built from the training file and must have 32 entries.
struct CorpusSplits {
  std::vector<DialogueRecord> train;
  std::vector<DialogueRecord> valid;
  std::vector<DialogueRecord> test;
  EmotionLabels labels;
};

CorpusSplits load_official_splits(const std::filesystem::path& dir);

/// Seeded 80/10/10 split by conversation.
CorpusSplits split_by_conversation(EmpatheticCorpus corpus, std::uint64_t seed);

enum class Role { kUser, kBot };

struct Turn {
  Role role = Role::kUser;
  std::string text;
};

/// Emotion id carried by examples without a label (persona pretraining,
/// user feedback).
inline constexpr int kNoEmotion = -1;

struct DialogueExample {
  std::string conv_id;
  std::vector<std::string> persona;
  std::vector<Turn> history;
  std::string gold_reply;
  int emotion = kNoEmotion;
};

std::vector<std::string> default_persona();

/// One example per utterance t >= 2 (1-based): history is the previous
/// `history_window` utterances, the reply is utterance t. Roles are relative
/// to the reply: the reply's speaker is the bot.
std::vector<DialogueExample> make_examples(std::span<const DialogueRecord> records,
                                           const EmotionLabels& labels,
                                           std::size_t history_window,
                                           const std::vector<std::string>& persona);

/// Draws negative replies from other conversations.
class DistractorSampler {
 public:
  /// Throws DataError unless the pool spans at least two conversations.
  explicit DistractorSampler(std::span<const DialogueExample> pool);

  /// Uniform over pool examples whose conv_id differs from `current` and
  /// whose reply is not string-equal to current.gold_reply.
  const std::string& sample(const DialogueExample& current, std::mt19937_64& rng) const;

 private:
  std::span<const DialogueExample> pool_;
};

/// Persona-chat style pretraining file:
///
///   1 your persona: i like to ski.
///   2 your persona: i have two dogs.
///   3 hi , how are you ?<TAB>great , just got back from the slopes .
///   4 do you have pets ?<TAB>two dogs !
///
/// A line numbered 1 starts a new dialogue. Persona lines precede turn
/// lines; each turn line is "<user text>\t<bot reply>" and yields one
/// example whose history holds up to `history_window` preceding utterances.
std::vector<DialogueExample> load_persona_pretraining(const std::filesystem::path& path,
                                                      std::size_t history_window = 3);

}  // namespace empchat
