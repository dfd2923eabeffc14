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

#include <cmath>
#include <cstring>
#include <limits>

#include "empchat/error.hpp"
#include "empchat/trainer.hpp"

using namespace empchat;

namespace {

const std::filesystem::path kFixtures = EMPCHAT_FIXTURES;

struct Setup {
  EmpatheticCorpus corpus;
  std::vector<DialogueExample> examples;
  Vocab vocab;
  ModelConfig config;
};

Setup tiny_setup(std::size_t n_examples = 8) {
  EmpatheticCorpus corpus = load_empathetic_csv(kFixtures / "empathetic_train.csv");
  auto examples = make_examples(corpus.records, corpus.labels, 2, {"my name is caire"});
  examples.resize(n_examples);
  std::vector<std::string> texts{"my name is caire"};
  for (const auto& r : corpus.records)
    for (const auto& u : r.utterances) texts.push_back(u.text);
  Vocab vocab = Vocab::build(texts, 1, 10000);
  ModelConfig config;
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 16;
  config.d_ff = 32;
  config.vocab_size = vocab.size();
  config.n_positions = 96;
  config.n_emotions = corpus.labels.size();
  config.dropout = 0.0;
  config.seed = 4;
  return Setup{std::move(corpus), std::move(examples), std::move(vocab), config};
}

TrainConfig quick(std::size_t epochs = 2) {
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.batch_size = 4;
  tc.epochs = epochs;
  tc.seed = 9;
  return tc;
}

bool same_params(Model<float>& a, Model<float>& b) {
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    auto da = pa[i].tensor->data(), db = pb[i].tensor->data();
    if (std::memcmp(da.data(), db.data(), da.size_bytes()) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("total_loss arithmetic") {
  StepLosses s{1.5, 0.7, 0.3, 0.0};
  CHECK(total_loss(s, 2.0) == doctest::Approx(4.0));
  CHECK(total_loss(s, 0.0) == doctest::Approx(1.0));
  const double l2 = std::log(2.0);
  CHECK(total_loss(StepLosses{l2, l2, l2, 0.0}, 1.0) == doctest::Approx(2.0794415).epsilon(1e-7));
  CHECK(total_loss(StepLosses{std::nullopt, 0.5, std::nullopt, 0.0}, 3.0) == 0.5);
}

TEST_CASE("lm_loss closed forms and a hand-computed case") {
  Graph<double> g;
  const int one_label[] = {kIgnoreLabel, 42};
  auto uniform = lm_loss(g.constant(Tensor<double>(Shape{2, 100}, 0.0)), std::span<const int>(one_label));
  CHECK(uniform.value().item() == doctest::Approx(std::log(100.0)).epsilon(1e-12));

  // Three positions, labels at 1 and 2; row 0 predicts 1, row 1 predicts 2.
  Tensor<double> logits(Shape{3, 3}, std::vector<double>{1, 2, 0, 0, 0, 3, 5, 5, 5});
  const int labels[] = {kIgnoreLabel, 1, 2};
  auto l = lm_loss(g.constant(logits), std::span<const int>(labels));
  const double r0 = -(2 - std::log(std::exp(1) + std::exp(2) + std::exp(0)));
  const double r1 = -(3 - std::log(2 + std::exp(3)));
  CHECK(l.value().item() == doctest::Approx((r0 + r1) / 2).epsilon(1e-12));

  Tensor<double> sharp(Shape{2, 4}, -50.0);
  sharp.at(0, 3) = 50.0;
  const int sharp_labels[] = {kIgnoreLabel, 3};
  CHECK(lm_loss(g.constant(sharp), std::span<const int>(sharp_labels)).value().item() < 1e-12);

  const int none[] = {kIgnoreLabel, kIgnoreLabel};
  CHECK_THROWS_AS(lm_loss(g.constant(Tensor<double>(Shape{2, 4})), std::span<const int>(none)),
                  std::invalid_argument);
}

TEST_CASE("selection and emotion loss closed forms") {
  Graph<double> g;
  auto s = [&](double a) { return g.constant(Tensor<double>(Shape{1, 1}, a)); };
  CHECK(selection_loss(s(0.3), s(0.3)).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(selection_loss(s(1.0), s(0.0)).value().item() == doctest::Approx(0.313262).epsilon(1e-6));
  CHECK(selection_loss(s(60.0), s(0.0)).value().item() < 1e-20);
  CHECK(emotion_loss(g.constant(Tensor<double>(Shape{1, 32}, 0.0)), 17).value().item() ==
        doctest::Approx(std::log(32.0)).epsilon(1e-12));
  Tensor<double> conf(Shape{1, 32}, -40.0);
  conf.at(0, 5) = 40.0;
  CHECK(emotion_loss(g.constant(conf), 5).value().item() < 1e-20);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.objectives = {false, false, false};
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.alpha = -1;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}

TEST_CASE("epoch log line uses nulls for absent values") {
  EpochLog log;
  log.epoch = 3;
  log.mean.lm = 1.25;
  log.mean.total = 1.25;
  const std::string line = epoch_log_line(log);
  CHECK(line.find("\"epoch\":3") != std::string::npos);
  CHECK(line.find("\"l_lm\":1.25") != std::string::npos);
  CHECK(line.find("\"l_sel\":null") != std::string::npos);
  CHECK(line.find("\"l_emo\":null") != std::string::npos);
  CHECK(line.find("\"valid_ppl\":null") != std::string::npos);
}

TEST_CASE("training is deterministic in the seed and reports valid perplexity") {
  Setup s = tiny_setup();
  Model<float> a = Model<float>::init(s.config);
  Model<float> b = Model<float>::init(s.config);
  std::vector<DialogueExample> valid(s.examples.begin(), s.examples.begin() + 2);
  TrainResult ra = train(a, s.vocab, s.examples, quick(), valid);
  TrainResult rb = train(b, s.vocab, s.examples, quick(), valid);
  REQUIRE(ra.epochs.size() == 2);
  CHECK(ra.steps == 4);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(ra.epochs[e].mean.total == rb.epochs[e].mean.total);
    CHECK(ra.epochs[e].valid_ppl.has_value());
    CHECK(*ra.epochs[e].valid_ppl == *rb.epochs[e].valid_ppl);
  }
  CHECK(same_params(a, b));
  CHECK_FALSE(a.word_embedding.requires_grad());
}

TEST_CASE("all three objectives present, and total matches the weighted sum") {
  Setup s = tiny_setup();
  Model<float> m = Model<float>::init(s.config);
  TrainConfig tc = quick(1);
  tc.alpha = 0.5;
  tc.batch_size = 1;
  tc.max_steps = 1;
  TrainResult r = train(m, s.vocab, s.examples, tc);
  const StepLosses& l = r.epochs[0].mean;
  REQUIRE(l.lm.has_value());
  REQUIRE(l.selection.has_value());
  REQUIRE(l.emotion.has_value());
  CHECK(l.total == doctest::Approx(0.5 * *l.lm + *l.selection + *l.emotion).epsilon(1e-6));
  CHECK(r.steps == 1);
}

TEST_CASE("objective toggles leave disabled losses absent") {
  Setup s = tiny_setup();
  Model<float> m = Model<float>::init(s.config);
  TrainConfig tc = quick(1);
  tc.objectives = {true, false, false};
  TrainResult r = train(m, s.vocab, s.examples, tc);
  CHECK(r.epochs[0].mean.lm.has_value());
  CHECK_FALSE(r.epochs[0].mean.selection.has_value());
  CHECK_FALSE(r.epochs[0].mean.emotion.has_value());
  CHECK(epoch_log_line(r.epochs[0]).find("\"l_sel\":null") != std::string::npos);
}

TEST_CASE("unlabeled examples skip the emotion objective") {
  Setup s = tiny_setup();
  for (auto& e : s.examples) e.emotion = kNoEmotion;
  Model<float> m = Model<float>::init(s.config);
  TrainResult r = train(m, s.vocab, s.examples, quick(1));
  CHECK_FALSE(r.epochs[0].mean.emotion.has_value());
  CHECK(r.epochs[0].mean.selection.has_value());
}

TEST_CASE("training loss falls on a small fixture") {
  Setup s = tiny_setup();
  Model<float> m = Model<float>::init(s.config);
  TrainResult r = train(m, s.vocab, s.examples, quick(10));
  CHECK(r.epochs.back().mean.total < r.epochs.front().mean.total);
}

TEST_CASE("a non-finite loss aborts with the step index") {
  Setup s = tiny_setup();
  Model<float> m = Model<float>::init(s.config);
  m.final_gain[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(m, s.vocab, s.examples, quick(1));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("reply tokens reach the embedding through the readouts when alpha is zero") {
  Setup s = tiny_setup();
  Model<float> m = Model<float>::init(s.config);
  m.set_requires_grad(true);
  DialogueExample ex = s.examples[0];
  ex.gold_reply = "coffee";
  const InputEncoding gold = build_input(ex, ex.gold_reply, true, s.vocab, 96);
  const InputEncoding dist = build_input(ex, "lamp", false, s.vocab, 96);
  TrainConfig tc;
  tc.alpha = 0.0;
  Graph<float> g(Mode::kEval);
  auto terms = example_objective(g, m, gold, &dist, ex.emotion, tc);
  g.backward(terms.total);
  const int coffee = s.vocab.id("coffee");
  double norm = 0;
  for (std::size_t c = 0; c < s.config.d_model; ++c) {
    norm += std::abs(m.word_embedding.grad()[coffee * s.config.d_model + c]);
  }
  CHECK(norm > 0);
}

TEST_CASE("feedback refit: empty set is a no-op and missing context is named") {
  Setup s = tiny_setup();
  Model<float> m = Model<float>::init(s.config);
  Model<float> before = Model<float>::init(s.config);
  CHECK_FALSE(finetune_on_feedback(m, s.vocab, {}, quick()));
  CHECK(same_params(m, before));

  std::vector<DialogueExample> items(s.examples.begin(), s.examples.begin() + 2);
  items[1].conv_id = "feedback:17";
  items[1].history.clear();
  try {
    finetune_on_feedback(m, s.vocab, items, quick());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("feedback:17") != std::string::npos);
  }
  CHECK(same_params(m, before));
}

TEST_CASE("feedback refit trains the LM only on a single conversation") {
  Setup s = tiny_setup();
  Model<float> m = Model<float>::init(s.config);
  std::vector<DialogueExample> items(s.examples.begin(), s.examples.begin() + 2);
  items[0].conv_id = items[1].conv_id = "same";
  std::vector<EpochLog> logs;
  CHECK(finetune_on_feedback(m, s.vocab, items, quick(1), [&](const EpochLog& l) { logs.push_back(l); }));
  REQUIRE(logs.size() == 1);
  CHECK(logs[0].mean.lm.has_value());
  CHECK_FALSE(logs[0].mean.selection.has_value());
  CHECK_FALSE(logs[0].mean.emotion.has_value());
}
