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

// Multi-task fine-tuning: response language modeling (L_lm), response
// selection against one distractor from another conversation (L_sel) and
// dialogue emotion classification (L_emo), combined as
//
//   L = alpha * L_lm + L_sel + L_emo

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empchat/corpus.hpp"
#include "empchat/model.hpp"
#include "empchat/tokenizer.hpp"

namespace empchat {

struct Objectives {
  bool lm = true;
  bool selection = true;
  bool emotion = true;
};

struct TrainConfig {
  double alpha = 1.0;
  double lr = 6.25e-5;
  std::size_t batch_size = 8;
  std::size_t epochs = 3;
  /// Stop after this many optimizer steps; 0 means run every epoch.
  std::size_t max_steps = 0;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  Objectives objectives;

  void validate() const;
};

/// Per-step (or per-epoch mean) component losses. Disabled or skipped
/// objectives stay empty rather than reporting zero.
struct StepLosses {
  std::optional<double> lm;
  std::optional<double> selection;
  std::optional<double> emotion;
  double total = 0.0;
};

/// alpha * lm + selection + emotion; absent terms contribute nothing.
double total_loss(const StepLosses& losses, double alpha);

/// Mean next-token cross-entropy: logits row i predicts label i + 1. Labels
/// equal to kIgnoreLabel are skipped. Throws if no label is predicted.
template <typename T>
Var<T> lm_loss(Var<T> lm_logits, std::span<const int> lm_labels);

/// Two-way softmax cross-entropy with the gold candidate as the answer:
/// -log(e^g / (e^g + e^d)).
template <typename T>
Var<T> selection_loss(Var<T> gold_score, Var<T> distractor_score);

/// Cross-entropy of the emotion logits against `label`, which must be a
/// valid class id (callers skip kNoEmotion).
template <typename T>
Var<T> emotion_loss(Var<T> emotion_logits, int label);

template <typename T>
struct ObjectiveTerms {
  std::optional<Var<T>> lm;
  std::optional<Var<T>> selection;
  std::optional<Var<T>> emotion;
  Var<T> total;
};

/// Records all enabled objectives for one example. `distractor` may be null
/// when selection is off. Emotion is read from the gold sequence and skipped
/// when `emotion_label` is kNoEmotion.
template <typename T>
ObjectiveTerms<T> example_objective(Graph<T>& graph, Model<T>& model, const InputEncoding& gold,
                                    const InputEncoding* distractor, int emotion_label,
                                    const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // cumulative optimizer steps
  StepLosses mean;
  std::optional<double> valid_ppl;
};

/// One structured-text line: {"epoch":..,"l_lm":..,"l_sel":..,"l_emo":..,
/// "l_total":..,"valid_ppl":..}, absent values as null.
std::string epoch_log_line(const EpochLog& log);

using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
};

/// Shuffles each epoch, pairs every gold sequence with a sampled distractor,
/// averages the combined loss over the batch, clips the global gradient norm
/// and applies Adam with linearly decaying learning rate. Deterministic in
/// config.seed. Throws NumericError naming the step on a non-finite loss.
TrainResult train(Model<float>& model, const Vocab& vocab,
                  std::span<const DialogueExample> examples, const TrainConfig& config,
                  std::span<const DialogueExample> valid = {}, const EpochCallback& on_epoch = {});

/// Imitation refit on user-revised replies: LM objective with the revision
/// as gold, selection kept only if enabled and the items span two or more
/// conversations, emotion always off. Returns false (model untouched) for an
/// empty set. Throws DataError naming the first item without context.
bool finetune_on_feedback(Model<float>& model, const Vocab& vocab,
                          std::span<const DialogueExample> items, TrainConfig config,
                          const EpochCallback& on_epoch = {});

}  // namespace empchat
