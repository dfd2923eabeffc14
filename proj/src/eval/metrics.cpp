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

#include "empchat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "empchat/error.hpp"
#include "empchat/trainer.hpp"

namespace empchat {

double PerplexityStats::perplexity() const {
  if (tokens == 0) throw std::invalid_argument("perplexity: no scored tokens");
  return std::exp(nll_sum / static_cast<double>(tokens));
}

PerplexityStats perplexity(const Model<float>& model, const Vocab& vocab,
                           std::span<const DialogueExample> examples) {
  if (examples.empty()) throw std::invalid_argument("perplexity: empty example set");
  PerplexityStats stats;
  for (const DialogueExample& ex : examples) {
    const InputEncoding enc =
        build_input(ex, ex.gold_reply, /*is_gold=*/true, vocab, model.config.n_positions);
    Graph<float> graph(Mode::kEval);
    const ForwardResult<float> out = forward(graph, model, enc);
    // Same op as training so exp(token-weighted mean lm_loss) matches exactly.
    const Var<float> loss = lm_loss(*out.lm_logits, std::span<const int>(enc.lm_labels));
    const auto n = static_cast<std::size_t>(
        std::count_if(enc.lm_labels.begin() + 1, enc.lm_labels.end(),
                      [](int l) { return l != kIgnoreLabel; }));
    stats.nll_sum += static_cast<double>(loss.value().item()) * static_cast<double>(n);
    stats.tokens += n;
  }
  return stats;
}

namespace {

using Ngrams = std::map<std::vector<std::string>, std::size_t>;

Ngrams count_ngrams(const std::vector<std::string>& words, std::size_t n) {
  Ngrams counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

void BleuStats::add(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference) {
  candidate_length += candidate.size();
  reference_length += reference.size();
  for (std::size_t n = 1; n <= matches.size(); ++n) {
    const Ngrams cand = count_ngrams(candidate, n);
    const Ngrams ref = count_ngrams(reference, n);
    for (const auto& [gram, count] : cand) {
      totals[n - 1] += count;
      auto it = ref.find(gram);
      if (it != ref.end()) matches[n - 1] += std::min(count, it->second);
    }
  }
}

double BleuStats::score(std::size_t order) const {
  if (order < 1 || order > matches.size()) {
    throw std::invalid_argument("bleu: order must be in [1, " + std::to_string(matches.size()) + "]");
  }
  if (candidate_length == 0 || matches[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= order; ++n) {
    double num = static_cast<double>(matches[n - 1]);
    double den = static_cast<double>(totals[n - 1]);
    if (n >= 2 && matches[n - 1] == 0) {
      num += 1.0;
      den += 1.0;
    }
    log_sum += std::log(num / den);
  }
  const double c = static_cast<double>(candidate_length);
  const double r = static_cast<double>(reference_length);
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(order));
}

double bleu(std::span<const std::pair<std::string, std::string>> pairs, std::size_t max_order) {
  if (pairs.empty()) throw std::invalid_argument("bleu: empty candidate set");
  BleuStats stats(std::max<std::size_t>(max_order, 1));
  for (const auto& [cand, ref] : pairs) stats.add(split_words(cand), split_words(ref));
  return stats.score(max_order);
}

double bleu(const std::string& candidate, const std::string& reference, std::size_t max_order) {
  const std::pair<std::string, std::string> one[] = {{candidate, reference}};
  return bleu(std::span<const std::pair<std::string, std::string>>(one), max_order);
}

double avg_bleu(std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("avg_bleu: empty candidate set");
  BleuStats stats(4);
  for (const auto& [cand, ref] : pairs) stats.add(split_words(cand), split_words(ref));
  double total = 0.0;
  for (std::size_t k = 1; k <= 4; ++k) total += stats.score(k);
  return total / 4.0;
}

double emotion_accuracy(std::span<const int> predictions, std::span<const int> golds) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("emotion_accuracy: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(golds.size()) + " labels");
  }
  if (golds.empty()) throw std::invalid_argument("emotion_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) hits += predictions[i] == golds[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(golds.size());
}

double selection_accuracy(const Model<float>& model, const Vocab& vocab,
                          std::span<const DialogueExample> examples, std::uint64_t seed) {
  if (examples.empty()) throw std::invalid_argument("selection_accuracy: empty example set");
  const DistractorSampler sampler(examples);
  std::mt19937_64 rng(seed);
  ForwardOptions opts;
  opts.lm_logits = false;
  std::size_t hits = 0;
  for (const DialogueExample& ex : examples) {
    const std::string& negative = sampler.sample(ex, rng);
    const InputEncoding gold = build_input(ex, ex.gold_reply, true, vocab, model.config.n_positions);
    const InputEncoding dist = build_input(ex, negative, false, vocab, model.config.n_positions);
    Graph<float> graph(Mode::kEval);
    const float g = forward(graph, model, gold, opts).selection_score.value().item();
    const float d = forward(graph, model, dist, opts).selection_score.value().item();
    hits += g > d ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

std::string EvalReport::to_json() const {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::ordered_json j;
  j["ppl"] = opt(ppl);
  j["avg_bleu"] = opt(avg_bleu);
  j["emo_acc"] = opt(emo_acc);
  j["examples"] = examples;
  j["tokens"] = tokens;
  return j.dump();
}

EvalReport EvalReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  EvalReport r;
  r.ppl = opt("ppl");
  r.avg_bleu = opt("avg_bleu");
  r.emo_acc = opt("emo_acc");
  r.examples = j.at("examples").get<std::size_t>();
  r.tokens = j.at("tokens").get<std::size_t>();
  return r;
}

std::string EvalReport::table() const {
  auto cell = [](const std::optional<double>& v, const char* fmt) {
    if (!v) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, *v);
    return std::string(buf);
  };
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s\n", "", "PPL", "AVG BLEU", "EMO ACC");
  out += line;
  std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s\n", "model",
                cell(ppl, "%.2f").c_str(), cell(avg_bleu, "%.2f").c_str(),
                cell(emo_acc, "%.3f").c_str());
  out += line;
  std::snprintf(line, sizeof(line), "examples=%zu tokens=%zu\n", examples, tokens);
  out += line;
  return out;
}

bool operator==(const EvalReport& a, const EvalReport& b) {
  return a.ppl == b.ppl && a.avg_bleu == b.avg_bleu && a.emo_acc == b.emo_acc &&
         a.examples == b.examples && a.tokens == b.tokens;
}

EvalReport evaluate(const Model<float>& model, const Vocab& vocab,
                    std::span<const DialogueExample> examples, const DecodeParams& decode,
                    const EvalOptions& options) {
  if (examples.empty()) throw std::invalid_argument("evaluate: empty example set");
  EvalReport report;
  report.examples = examples.size();
  if (options.ppl) {
    const PerplexityStats stats = perplexity(model, vocab, examples);
    report.ppl = stats.perplexity();
    report.tokens = stats.tokens;
  }
  if (options.bleu) {
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(examples.size());
    for (const DialogueExample& ex : examples) {
      pairs.emplace_back(generate(model, vocab, ex.persona, ex.history, decode), ex.gold_reply);
    }
    report.avg_bleu = avg_bleu(pairs);
  }
  if (options.emotion) {
    std::vector<int> preds, golds;
    for (const DialogueExample& ex : examples) {
      if (ex.emotion == kNoEmotion) continue;
      preds.push_back(classify_emotion(model, vocab, ex.persona, ex.history).label);
      golds.push_back(ex.emotion);
    }
    if (!golds.empty()) report.emo_acc = emotion_accuracy(preds, golds);
  }
  return report;
}

}  // namespace empchat
