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

#include "empchat/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "empchat/encoding.hpp"

namespace empchat {

Strategy parse_strategy(std::string_view name) {
  if (name == "greedy") return Strategy::kGreedy;
  if (name == "top_k" || name == "topk") return Strategy::kTopK;
  if (name == "nucleus" || name == "top_p") return Strategy::kNucleus;
  throw std::invalid_argument("unknown decoding strategy '" + std::string(name) +
                              "' (expected greedy, top_k or nucleus)");
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kGreedy: return "greedy";
    case Strategy::kTopK: return "top_k";
    case Strategy::kNucleus: return "nucleus";
  }
  return "unknown";
}

void DecodeParams::validate() const {
  if (k < 1) throw std::invalid_argument("decode: k must be >= 1");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("decode: p must be in (0, 1]");
  if (!(temperature > 0.0)) throw std::invalid_argument("decode: temperature must be > 0");
  if (max_new_tokens < 1) throw std::invalid_argument("decode: max_new_tokens must be >= 1");
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Lowest id wins ties so greedy output is reproducible.
int argmax(const std::vector<double>& logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

int sample_next(std::vector<double> logits, const DecodeParams& params, std::mt19937_64& rng) {
  if (params.strategy == Strategy::kGreedy) return argmax(logits);

  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return logits[a] > logits[b]; });

  const double top = logits[order.front()];
  std::vector<double> probs(order.size());
  double z = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double l = logits[order[i]];
    probs[i] = l == kNegInf ? 0.0 : std::exp((l - top) / params.temperature);
    z += probs[i];
  }
  for (double& q : probs) q /= z;

  std::size_t keep = probs.size();
  if (params.strategy == Strategy::kTopK) {
    keep = std::min(keep, params.k);
  } else {
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i];
      if (cum >= params.p) {
        keep = i + 1;
        break;
      }
    }
  }
  while (keep > 1 && probs[keep - 1] == 0.0) --keep;

  const double mass = std::accumulate(probs.begin(), probs.begin() + keep, 0.0);
  const double u = std::uniform_real_distribution<double>(0.0, mass)(rng);
  double cum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    cum += probs[i];
    if (u < cum) return order[i];
  }
  return order[keep - 1];
}

}  // namespace

std::vector<int> generate_ids(const Model<float>& model, const Vocab& vocab,
                              const std::vector<std::string>& persona,
                              const std::vector<Turn>& history, const DecodeParams& params) {
  params.validate();
  if (history.empty()) throw std::invalid_argument("generate: history is empty");
  InputEncoding enc = build_context(persona, history, vocab, model.config.n_positions);
  std::mt19937_64 rng(params.seed);
  std::vector<int> reply;
  ForwardOptions opts;
  opts.lm_last_only = true;
  while (reply.size() < params.max_new_tokens && enc.size() < model.config.n_positions) {
    Graph<float> graph(Mode::kEval);
    const ForwardResult<float> out = forward(graph, model, enc, opts);
    std::span<const float> row = out.lm_logits->value().data();
    std::vector<double> logits(row.begin(), row.end());
    for (int s = 0; s < kFirstWordId; ++s) {
      if (s != kEos) logits[s] = kNegInf;
    }
    const int next = sample_next(std::move(logits), params, rng);
    if (next == kEos) break;
    reply.push_back(next);
    enc.positions.push_back(static_cast<int>(enc.tokens.size()));
    enc.tokens.push_back(next);
    enc.states.push_back(kStateBot);
    enc.lm_labels.push_back(kIgnoreLabel);
  }
  return reply;
}

std::string generate(const Model<float>& model, const Vocab& vocab,
                     const std::vector<std::string>& persona, const std::vector<Turn>& history,
                     const DecodeParams& params) {
  const std::vector<int> ids = generate_ids(model, vocab, persona, history, params);
  return vocab.decode(ids, /*skip_special=*/true);
}

EmotionPrediction classify_emotion(const Model<float>& model, const Vocab& vocab,
                                   const std::vector<std::string>& persona,
                                   const std::vector<Turn>& history) {
  const InputEncoding enc = build_context(persona, history, vocab, model.config.n_positions);
  Graph<float> graph(Mode::kEval);
  ForwardOptions opts;
  opts.lm_logits = false;
  const ForwardResult<float> out = forward(graph, model, enc, opts);
  std::span<const float> logits = out.emotion_logits.value().data();
  const double top = *std::max_element(logits.begin(), logits.end());
  EmotionPrediction pred;
  pred.probabilities.resize(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    pred.probabilities[i] = std::exp(static_cast<double>(logits[i]) - top);
    z += pred.probabilities[i];
  }
  for (double& q : pred.probabilities) q /= z;
  pred.label = static_cast<int>(std::max_element(pred.probabilities.begin(), pred.probabilities.end()) -
                                pred.probabilities.begin());
  return pred;
}

}  // namespace empchat
