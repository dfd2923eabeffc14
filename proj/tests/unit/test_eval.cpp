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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "empchat/generator.hpp"
#include "empchat/metrics.hpp"
#include "empchat/trainer.hpp"

using namespace empchat;

namespace {

using Pairs = std::vector<std::pair<std::string, std::string>>;

Vocab word_vocab(std::size_t n_words) {
  std::string line;
  for (std::size_t i = 0; i < n_words; ++i) line += "w" + std::to_string(i) + " ";
  std::vector<std::string> texts{line};
  return Vocab::build(texts, 1, 10000);
}

ModelConfig config_for(const Vocab& v, std::size_t n_emotions = 32) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.vocab_size = v.size();
  c.n_positions = 64;
  c.n_emotions = n_emotions;
  c.seed = 5;
  return c;
}

DialogueExample example(std::string reply, int emotion = 0) {
  DialogueExample ex;
  ex.conv_id = "c" + reply;
  ex.persona = {"w1 w2"};
  ex.history = {{Role::kUser, "w3 w4 w5"}};
  ex.gold_reply = std::move(reply);
  ex.emotion = emotion;
  return ex;
}

}  // namespace

TEST_CASE("BLEU oracles") {
  CHECK(bleu("a b c d", "a b c d", 4) == doctest::Approx(100.0));
  CHECK(bleu("x", "x", 4) == doctest::Approx(100.0));
  // Brevity penalty exp(1 - 5/4), unigram precision 1.
  CHECK(bleu("a b c d", "a b c d e", 1) == doctest::Approx(100.0 * std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-12));
  CHECK(bleu("a b c d", "a b c d e", 1) == doctest::Approx(77.88).epsilon(0.0001));
  CHECK(bleu("p q r", "a b c", 4) == 0.0);
  const Pairs same{{"hello there friend", "hello there friend"}, {"ok", "ok"}};
  CHECK(avg_bleu(same) == doctest::Approx(100.0));
  const Pairs disjoint{{"p q r s", "a b c d"}};
  CHECK(avg_bleu(disjoint) == 0.0);
  CHECK_THROWS_AS(avg_bleu(Pairs{}), std::invalid_argument);
  // Normalization: case and punctuation splitting apply before matching.
  CHECK(bleu("Hello, World", "hello , world", 4) == doctest::Approx(100.0));
}

TEST_CASE("BLEU smoothing for empty higher orders and corpus pooling") {
  // "a b c" vs "a b d": p1 = 2/3, p2 = 1/2, p3 = 0 -> (0+1)/(1+1).
  const double p1 = 2.0 / 3, p2 = 0.5, p3 = 0.5;
  CHECK(bleu("a b c", "a b d", 3) == doctest::Approx(100.0 * std::cbrt(p1 * p2 * p3)).epsilon(1e-12));
  BleuStats stats;
  stats.add({"a", "b"}, {"a", "b"});
  stats.add({"c"}, {"d", "e"});
  CHECK(stats.matches[0] == 2);
  CHECK(stats.totals[0] == 3);
  CHECK(stats.candidate_length == 3);
  CHECK(stats.reference_length == 4);
  for (std::size_t k = 1; k <= 4; ++k) {
    CHECK(stats.score(k) >= 0.0);
    CHECK(stats.score(k) <= 100.0);
  }
}

TEST_CASE("emotion accuracy") {
  const int p[] = {3, 5}, g[] = {3, 7};
  CHECK(emotion_accuracy(p, g) == 0.5);
  CHECK(emotion_accuracy(g, g) == 1.0);
  const int shuffled_p[] = {5, 3}, shuffled_g[] = {7, 3};
  CHECK(emotion_accuracy(shuffled_p, shuffled_g) == 0.5);
  const int one[] = {1};
  CHECK_THROWS_AS(emotion_accuracy(one, g), std::invalid_argument);
}

TEST_CASE("perplexity of a uniform-logit model equals the vocabulary size") {
  Vocab v = word_vocab(50 - kFirstWordId);
  REQUIRE(v.size() == 50);
  Model<float> m = Model<float>::init(config_for(v));
  for (float& x : m.word_embedding.storage()) x = 0.0f;
  const std::vector<DialogueExample> ex{example("w7 w8 w9"), example("w10")};
  const PerplexityStats stats = perplexity(m, v, ex);
  CHECK(stats.tokens == 4 + 2);
  CHECK(stats.perplexity() == doctest::Approx(50.0).epsilon(1e-5));
  CHECK_THROWS_AS(perplexity(m, v, std::vector<DialogueExample>{}), std::invalid_argument);
}

TEST_CASE("perplexity equals exp of the token-weighted mean lm_loss") {
  Vocab v = word_vocab(40);
  const Model<float> m = Model<float>::init(config_for(v));
  const std::vector<DialogueExample> ex{example("w7 w8 w9"), example("w10"), example("w11 w3")};
  double weighted = 0;
  std::size_t tokens = 0;
  for (const auto& e : ex) {
    const InputEncoding in = build_input(e, e.gold_reply, true, v, 64);
    Graph<float> g;
    const auto out = forward(g, m, in);
    const double l = lm_loss(*out.lm_logits, std::span<const int>(in.lm_labels)).value().item();
    const std::size_t n = std::count_if(in.lm_labels.begin(), in.lm_labels.end(),
                                        [](int x) { return x != kIgnoreLabel; });
    weighted += l * n;
    tokens += n;
  }
  const double ppl = perplexity(m, v, ex).perplexity();
  CHECK(std::abs(std::exp(weighted / tokens) - ppl) / ppl < 1e-6);
}

TEST_CASE("greedy decoding is deterministic and never emits special tokens") {
  Vocab v = word_vocab(40);
  const Model<float> m = Model<float>::init(config_for(v));
  const auto ex = example("w1");
  const auto a = generate_ids(m, v, ex.persona, ex.history, DecodeParams::greedy(12));
  const auto b = generate_ids(m, v, ex.persona, ex.history, DecodeParams::greedy(12));
  CHECK(a == b);
  CHECK(a.size() <= 12);
  for (int id : a) CHECK_FALSE(Vocab::is_special(id));
  const std::string text = generate(m, v, ex.persona, ex.history, DecodeParams::greedy(12));
  CHECK(text.find('<') == std::string::npos);
  CHECK_THROWS_AS(generate(m, v, ex.persona, {}, DecodeParams::greedy()), std::invalid_argument);
}

TEST_CASE("sampling is reproducible per seed and tends to greedy as temperature falls") {
  Vocab v = word_vocab(40);
  const Model<float> m = Model<float>::init(config_for(v));
  const auto ex = example("w1");
  for (Strategy s : {Strategy::kTopK, Strategy::kNucleus}) {
    DecodeParams p;
    p.strategy = s;
    p.temperature = 1.5;
    p.max_new_tokens = 10;
    p.seed = 123;
    const auto a = generate_ids(m, v, ex.persona, ex.history, p);
    CHECK(a == generate_ids(m, v, ex.persona, ex.history, p));
    for (int id : a) CHECK_FALSE(Vocab::is_special(id));
    p.temperature = 1e-6;
    CHECK(generate_ids(m, v, ex.persona, ex.history, p) ==
          generate_ids(m, v, ex.persona, ex.history, DecodeParams::greedy(10)));
  }
  DecodeParams one;
  one.k = 1;
  one.temperature = 2.0;
  one.max_new_tokens = 10;
  CHECK(generate_ids(m, v, ex.persona, ex.history, one) ==
        generate_ids(m, v, ex.persona, ex.history, DecodeParams::greedy(10)));
}

TEST_CASE("decode parameter validation and strategy names") {
  DecodeParams p;
  p.k = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = DecodeParams{};
  p.p = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = DecodeParams{};
  p.temperature = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  for (Strategy s : {Strategy::kGreedy, Strategy::kTopK, Strategy::kNucleus}) {
    CHECK(parse_strategy(strategy_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("beam"), std::invalid_argument);
}

TEST_CASE("emotion prediction is a distribution that ignores any reply") {
  Vocab v = word_vocab(40);
  const Model<float> m = Model<float>::init(config_for(v));
  const auto ex = example("w1");
  const EmotionPrediction pred = classify_emotion(m, v, ex.persona, ex.history);
  CHECK(pred.probabilities.size() == 32);
  CHECK(std::accumulate(pred.probabilities.begin(), pred.probabilities.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(*std::max_element(pred.probabilities.begin(), pred.probabilities.end()) < 2.0 / 32);
  CHECK(pred.label == std::max_element(pred.probabilities.begin(), pred.probabilities.end()) -
                          pred.probabilities.begin());
}

TEST_CASE("evaluation report round trip and disabled metrics") {
  Vocab v = word_vocab(40);
  const Model<float> m = Model<float>::init(config_for(v));
  std::vector<DialogueExample> ex{example("w7 w8", 1), example("w10", 2), example("w9", kNoEmotion)};
  EvalReport r = evaluate(m, v, ex, DecodeParams::greedy(6));
  CHECK(r.examples == 3);
  CHECK(r.ppl.has_value());
  CHECK(r.avg_bleu.has_value());
  CHECK(r.emo_acc.has_value());
  CHECK(EvalReport::from_json(r.to_json()) == r);
  CHECK(r.table().find("PPL") != std::string::npos);

  EvalOptions only_ppl;
  only_ppl.bleu = false;
  only_ppl.emotion = false;
  EvalReport p = evaluate(m, v, ex, DecodeParams::greedy(), only_ppl);
  CHECK_FALSE(p.avg_bleu.has_value());
  CHECK_FALSE(p.emo_acc.has_value());
  CHECK(p.to_json().find("\"avg_bleu\":null") != std::string::npos);
  CHECK(EvalReport::from_json(p.to_json()) == p);
}

TEST_CASE("selection accuracy counts ties as wrong") {
  Vocab v = word_vocab(40);
  Model<float> m = Model<float>::init(config_for(v));
  for (float& x : m.selection_weight.storage()) x = 0.0f;
  std::vector<DialogueExample> ex{example("w7 w8"), example("w10"), example("w9")};
  CHECK(selection_accuracy(m, v, ex, 1) == 0.0);
}
