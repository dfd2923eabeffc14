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

// Automatic metrics: corpus perplexity over gold replies, averaged
// cumulative BLEU-1..4 and emotion accuracy, plus the evaluation driver.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "empchat/corpus.hpp"
#include "empchat/generator.hpp"
#include "empchat/model.hpp"
#include "empchat/tokenizer.hpp"

namespace empchat {

struct PerplexityStats {
  double nll_sum = 0.0;
  std::size_t tokens = 0;
  double perplexity() const;
};

/// exp(sum NLL / token count) over gold-reply tokens and <eos>, with the
/// same shift and masking as lm_loss. Throws on an empty set.
PerplexityStats perplexity(const Model<float>& model, const Vocab& vocab,
                           std::span<const DialogueExample> examples);

/// Modified n-gram match counts pooled over a corpus.
struct BleuStats {
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  std::vector<std::size_t> matches;  // index n - 1
  std::vector<std::size_t> totals;

  explicit BleuStats(std::size_t max_order = 4) : matches(max_order, 0), totals(max_order, 0) {}
  void add(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);
  /// Cumulative BLEU-k in [0, 100]: brevity penalty times the geometric mean
  /// of precisions 1..k. For n >= 2 a zero match count is smoothed to
  /// (0 + 1) / (total + 1).
  double score(std::size_t order) const;
};

/// Corpus BLEU-`max_order` of (candidate, reference) text pairs, tokenized
/// with the vocabulary's normalization. Throws on an empty set.
double bleu(std::span<const std::pair<std::string, std::string>> pairs, std::size_t max_order);
double bleu(const std::string& candidate, const std::string& reference, std::size_t max_order);

/// Arithmetic mean of corpus BLEU-1..4.
double avg_bleu(std::span<const std::pair<std::string, std::string>> pairs);

/// Fraction of exact matches; throws on length mismatch or empty input.
double emotion_accuracy(std::span<const int> predictions, std::span<const int> golds);

/// Gold beats one sampled distractor iff its score is strictly higher.
double selection_accuracy(const Model<float>& model, const Vocab& vocab,
                          std::span<const DialogueExample> examples, std::uint64_t seed);

struct EvalReport {
  std::optional<double> ppl;
  std::optional<double> avg_bleu;
  std::optional<double> emo_acc;
  std::size_t examples = 0;
  std::size_t tokens = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  std::string table() const;
};

bool operator==(const EvalReport& a, const EvalReport& b);

struct EvalOptions {
  bool ppl = true;
  bool bleu = true;
  bool emotion = true;
};

/// Context-only evaluation: gold labels and replies are never shown to the
/// model except for scoring. Emotion accuracy skips unlabeled examples.
EvalReport evaluate(const Model<float>& model, const Vocab& vocab,
                    std::span<const DialogueExample> examples, const DecodeParams& decode,
                    const EvalOptions& options = {});

}  // namespace empchat
