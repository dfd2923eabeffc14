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

#include "empchat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "empchat/error.hpp"
#include "empchat/metrics.hpp"
#include "empchat/optim.hpp"

namespace empchat {

void TrainConfig::validate() const {
  if (!objectives.lm && !objectives.selection && !objectives.emotion) {
    throw std::invalid_argument("train config: at least one objective must be enabled");
  }
  if (!(alpha >= 0.0)) throw std::invalid_argument("train config: alpha must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be >= 1");
  if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("train config: grad_clip_norm must be > 0");
}

double total_loss(const StepLosses& losses, double alpha) {
  double total = 0.0;
  if (losses.lm) total += alpha * *losses.lm;
  if (losses.selection) total += *losses.selection;
  if (losses.emotion) total += *losses.emotion;
  return total;
}

template <typename T>
Var<T> lm_loss(Var<T> lm_logits, std::span<const int> lm_labels) {
  if (lm_logits.rows() != lm_labels.size()) {
    throw ShapeError("lm_loss: " + std::to_string(lm_labels.size()) + " labels for logits " +
                     shape_string(lm_logits.shape()));
  }
  // Row i predicts label i + 1; the last row predicts nothing.
  std::vector<int> targets(lm_labels.size(), kIgnoreLabel);
  for (std::size_t i = 0; i + 1 < lm_labels.size(); ++i) targets[i] = lm_labels[i + 1];
  if (std::all_of(targets.begin(), targets.end(), [](int t) { return t == kIgnoreLabel; })) {
    throw std::invalid_argument("lm_loss: no labeled positions");
  }
  return cross_entropy(lm_logits, std::span<const int>(targets), kIgnoreLabel);
}

template <typename T>
Var<T> selection_loss(Var<T> gold_score, Var<T> distractor_score) {
  const Var<T> scores[] = {gold_score, distractor_score};
  const int gold[] = {0};
  return cross_entropy(concat_cols(std::span<const Var<T>>(scores)), std::span<const int>(gold));
}

template <typename T>
Var<T> emotion_loss(Var<T> emotion_logits, int label) {
  const int target[] = {label};
  return cross_entropy(emotion_logits, std::span<const int>(target));
}

template <typename T>
ObjectiveTerms<T> example_objective(Graph<T>& graph, Model<T>& model, const InputEncoding& gold,
                                    const InputEncoding* distractor, int emotion_label,
                                    const TrainConfig& config) {
  ObjectiveTerms<T> terms;
  ForwardOptions gold_opts;
  gold_opts.lm_logits = config.objectives.lm;
  ForwardResult<T> g = forward(graph, model, gold, gold_opts);
  std::vector<Var<T>> weighted;
  if (config.objectives.lm) {
    terms.lm = lm_loss(*g.lm_logits, std::span<const int>(gold.lm_labels));
    weighted.push_back(scale(*terms.lm, static_cast<T>(config.alpha)));
  }
  if (config.objectives.selection) {
    if (distractor == nullptr) throw std::invalid_argument("selection objective needs a distractor");
    ForwardOptions d_opts;
    d_opts.lm_logits = false;
    ForwardResult<T> d = forward(graph, model, *distractor, d_opts);
    terms.selection = selection_loss(g.selection_score, d.selection_score);
    weighted.push_back(*terms.selection);
  }
  if (config.objectives.emotion && emotion_label != kNoEmotion) {
    terms.emotion = emotion_loss(g.emotion_logits, emotion_label);
    weighted.push_back(*terms.emotion);
  }
  if (weighted.empty()) {
    // Only the emotion objective is on and this example has no label.
    terms.total = scale(g.selection_score, T{0});
  } else {
    terms.total = weighted.front();
    for (std::size_t i = 1; i < weighted.size(); ++i) terms.total = add(terms.total, weighted[i]);
  }
  return terms;
}

std::string epoch_log_line(const EpochLog& log) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["steps"] = log.steps;
  j["l_lm"] = opt(log.mean.lm);
  j["l_sel"] = opt(log.mean.selection);
  j["l_emo"] = opt(log.mean.emotion);
  j["l_total"] = log.mean.total;
  j["valid_ppl"] = opt(log.valid_ppl);
  return j.dump();
}

namespace {

struct RunningMean {
  double sum = 0.0;
  std::size_t count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  std::optional<double> mean() const {
    return count ? std::optional<double>(sum / static_cast<double>(count)) : std::nullopt;
  }
};

struct LossMeans {
  RunningMean lm, selection, emotion, total;
  StepLosses result() const {
    StepLosses s;
    s.lm = lm.mean();
    s.selection = selection.mean();
    s.emotion = emotion.mean();
    s.total = total.mean().value_or(0.0);
    return s;
  }
};

TrainResult run_training(Model<float>& model, const Vocab& vocab,
                         std::span<const DialogueExample> examples, const TrainConfig& config,
                         std::span<const DialogueExample> valid, const EpochCallback& on_epoch) {
  config.validate();
  if (examples.empty()) throw DataError("train: no training examples");
  if (model.config.vocab_size != vocab.size()) {
    throw DataError("train: model vocab size " + std::to_string(model.config.vocab_size) +
                    " differs from vocab size " + std::to_string(vocab.size()));
  }
  if (config.objectives.emotion) {
    for (const DialogueExample& ex : examples) {
      if (ex.emotion != kNoEmotion &&
          (ex.emotion < 0 || static_cast<std::size_t>(ex.emotion) >= model.config.n_emotions)) {
        throw DataError("train: emotion id " + std::to_string(ex.emotion) + " outside the " +
                        std::to_string(model.config.n_emotions) + "-way head");
      }
    }
  }
  std::optional<DistractorSampler> sampler;
  if (config.objectives.selection) sampler.emplace(examples);

  const std::size_t n = examples.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  std::size_t total_steps = steps_per_epoch * config.epochs;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  model.set_requires_grad(true);
  ParamList<float> params = model.parameters();
  AdamState<float> adam(params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs && step < total_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossMeans means;
    for (std::size_t begin = 0; begin < n && step < total_steps; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(end - begin);
      zero_grad(params);
      for (std::size_t b = begin; b < end; ++b) {
        const DialogueExample& ex = examples[order[b]];
        const InputEncoding gold =
            build_input(ex, ex.gold_reply, /*is_gold=*/true, vocab, model.config.n_positions);
        std::optional<InputEncoding> distractor;
        if (sampler) {
          const std::string& reply = sampler->sample(ex, rng);
          distractor = build_input(ex, reply, /*is_gold=*/false, vocab, model.config.n_positions);
        }
        Graph<float> graph(Mode::kTrain, rng());
        ObjectiveTerms<float> terms = example_objective(
            graph, model, gold, distractor ? &*distractor : nullptr, ex.emotion, config);
        StepLosses losses;
        if (terms.lm) losses.lm = terms.lm->value().item();
        if (terms.selection) losses.selection = terms.selection->value().item();
        if (terms.emotion) losses.emotion = terms.emotion->value().item();
        losses.total = terms.total.value().item();
        if (!std::isfinite(losses.total)) {
          throw NumericError("train: non-finite loss at step " + std::to_string(step));
        }
        if (losses.lm) means.lm.add(*losses.lm);
        if (losses.selection) means.selection.add(*losses.selection);
        if (losses.emotion) means.emotion.add(*losses.emotion);
        means.total.add(losses.total);
        graph.backward(scale(terms.total, inv_batch));
      }
      clip_grad_norm(params, config.grad_clip_norm);
      AdamConfig adam_cfg;
      adam_cfg.lr = config.lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
      try {
        adam_step(params, adam, adam_cfg);
      } catch (const NumericError& e) {
        throw NumericError("train: step " + std::to_string(step) + ": " + e.what());
      }
      ++step;
    }
    EpochLog log;
    log.epoch = epoch;
    log.steps = step;
    log.mean = means.result();
    if (!valid.empty()) {
      const Model<float>& frozen = model;
      log.valid_ppl = perplexity(frozen, vocab, valid).perplexity();
    }
    if (on_epoch) on_epoch(log);
    result.epochs.push_back(log);
  }
  result.steps = step;
  model.set_requires_grad(false);
  return result;
}

}  // namespace

TrainResult train(Model<float>& model, const Vocab& vocab,
                  std::span<const DialogueExample> examples, const TrainConfig& config,
                  std::span<const DialogueExample> valid, const EpochCallback& on_epoch) {
  return run_training(model, vocab, examples, config, valid, on_epoch);
}

bool finetune_on_feedback(Model<float>& model, const Vocab& vocab,
                          std::span<const DialogueExample> items, TrainConfig config,
                          const EpochCallback& on_epoch) {
  if (items.empty()) return false;
  for (const DialogueExample& item : items) {
    if (item.history.empty()) {
      throw DataError("feedback item '" + item.conv_id + "' has no dialogue history");
    }
    if (item.gold_reply.empty()) {
      throw DataError("feedback item '" + item.conv_id + "' has no revised reply");
    }
  }
  config.objectives.lm = true;
  config.objectives.emotion = false;
  if (config.objectives.selection) {
    const bool two_convs = std::any_of(items.begin(), items.end(), [&](const DialogueExample& e) {
      return e.conv_id != items.front().conv_id;
    });
    config.objectives.selection = two_convs;
  }
  run_training(model, vocab, items, config, {}, on_epoch);
  return true;
}

#define EMPCHAT_INSTANTIATE_LOSSES(T)                                                        \
  template Var<T> lm_loss(Var<T>, std::span<const int>);                                     \
  template Var<T> selection_loss(Var<T>, Var<T>);                                            \
  template Var<T> emotion_loss(Var<T>, int);                                                 \
  template ObjectiveTerms<T> example_objective(Graph<T>&, Model<T>&, const InputEncoding&,   \
                                               const InputEncoding*, int, const TrainConfig&);

EMPCHAT_INSTANTIATE_LOSSES(float)
EMPCHAT_INSTANTIATE_LOSSES(double)

#undef EMPCHAT_INSTANTIATE_LOSSES

}  // namespace empchat
