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

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "empchat/corpus.hpp"
#include "empchat/error.hpp"
#include "empchat/tokenizer.hpp"

using namespace empchat;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = EMPCHAT_FIXTURES;

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "empchat_text_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

Vocab vocab_of(std::initializer_list<std::string> texts, std::size_t min_freq = 1) {
  std::vector<std::string> v(texts);
  return Vocab::build(v, min_freq, 1000);
}

}  // namespace

TEST_CASE("normalization lowercases and splits punctuation") {
  CHECK(normalize_text("  Hello,   WORLD!! ") == "hello , world ! !");
  CHECK(split_words("That's great.") == std::vector<std::string>{"that", "'", "s", "great", "."});
  CHECK(split_words("").empty());
}

TEST_CASE("vocab keeps specials first and ranks by frequency then spelling") {
  Vocab v = vocab_of({"a a b"});
  CHECK(v.size() == kFirstWordId + 2);
  for (int i = 0; i < kFirstWordId; ++i) CHECK(v.token(i) == kSpecialTokens[i]);
  CHECK(v.id("a") == kFirstWordId);
  CHECK(v.id("b") == kFirstWordId + 1);

  Vocab tie = vocab_of({"zeta alpha"});
  CHECK(tie.token(kFirstWordId) == "alpha");

  Vocab strict = vocab_of({"a a b"}, 2);
  CHECK(strict.contains("a"));
  CHECK_FALSE(strict.contains("b"));
  CHECK(strict.encode("b") == std::vector<int>{kUnk});

  std::vector<std::string> big{"a b c d e f g h"};
  CHECK(Vocab::build(big, 1, kFirstWordId + 3).size() == kFirstWordId + 3);
  std::vector<std::string> empty;
  CHECK_THROWS_AS(Vocab::build(empty, 1, 100), DataError);
}

TEST_CASE("vocab builds are byte-identical and survive a save/load round trip") {
  Vocab a = vocab_of({"the cat sat", "on the mat"});
  Vocab b = vocab_of({"the cat sat", "on the mat"});
  CHECK(a.serialize() == b.serialize());
  CHECK(a.fingerprint() == b.fingerprint());
  const fs::path p = write_temp("vocab.txt", "");
  a.save(p);
  Vocab c = Vocab::load(p);
  CHECK(c.serialize() == a.serialize());
  CHECK(vocab_of({"other words"}).fingerprint() != a.fingerprint());
}

TEST_CASE("encode and decode round trip in-vocabulary text") {
  Vocab v = vocab_of({"hello world , how are you ?"});
  CHECK(v.decode(v.encode("Hello   World")) == "hello world");
  CHECK(v.decode(v.encode("how are you?")) == "how are you ?");
  CHECK(v.encode("").empty());
  CHECK(v.encode("zebra") == std::vector<int>{kUnk});
  const int ids[] = {kBos, v.id("hello"), kEos};
  CHECK(v.decode(ids) == "<bos> hello <eos>");
  CHECK(v.decode(ids, true) == "hello");
  const int bad[] = {static_cast<int>(v.size())};
  CHECK_THROWS_AS(v.decode(bad), std::out_of_range);
  // Appending a word appends at least one id.
  CHECK(v.encode("hello world zebra").size() > v.encode("hello world").size());
}

TEST_CASE("vocab files with a wrong special block are rejected") {
  CHECK_THROWS_AS(Vocab::from_tokens({"<pad>", "<eos>"}), DataError);
  std::vector<std::string> dup(kSpecialTokens.begin(), kSpecialTokens.end());
  dup.push_back("x");
  dup.push_back("x");
  CHECK_THROWS_AS(Vocab::from_tokens(dup), DataError);
}

TEST_CASE("empathetic csv loads records, labels and escapes") {
  EmpatheticCorpus c = load_empathetic_csv(kFixtures / "empathetic_train.csv");
  CHECK(c.records.size() == 8);
  CHECK(c.labels.size() == 8);
  CHECK(std::is_sorted(c.labels.labels().begin(), c.labels.labels().end()));
  const DialogueRecord& first = c.records.front();
  CHECK(first.emotion == "joyful");
  CHECK(first.utterances.size() == 5);
  CHECK(first.utterances[0].text == "I have had a great start to my week!");
  CHECK(first.utterances[1].speaker == 1);
  CHECK(first.utterances[2].speaker == 0);
  bool saw_comma = false;
  for (const auto& r : c.records)
    for (const auto& u : r.utterances) {
      CHECK(u.text.find("_comma_") == std::string::npos);
      saw_comma |= u.text.find("fourteen, we") != std::string::npos;
    }
  CHECK(saw_comma);
  CHECK(unescape_commas("a_comma_ b") == "a, b");
}

TEST_CASE("single conversation fixture gives one record and one label") {
  const fs::path p = write_temp("one.csv",
                                "conv_id,utterance_idx,context,prompt,speaker_idx,utterance\n"
                                "c1,1,joyful,p,1,hello there\n"
                                "c1,2,joyful,p,2,\"hi, friend\"\n");
  EmpatheticCorpus c = load_empathetic_csv(p);
  CHECK(c.records.size() == 1);
  CHECK(c.labels.labels() == std::vector<std::string>{"joyful"});
  CHECK(c.records[0].utterances[1].text == "hi, friend");
}

TEST_CASE("csv errors name the problem") {
  const fs::path missing = write_temp("missing.csv", "conv_id,utterance_idx,context,prompt\nc,1,x,y\n");
  try {
    load_empathetic_csv(missing);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("utterance") != std::string::npos);
  }
  CHECK_THROWS_AS(load_empathetic_csv(write_temp("empty.csv", "")), DataError);
  CHECK_THROWS_AS(load_empathetic_csv(kFixtures / "does_not_exist.csv"), DataError);
}

TEST_CASE("official-format directory with 32 labels loads all splits") {
  CorpusSplits s = load_official_splits(kFixtures / "official");
  CHECK(s.labels.size() == kOfficialEmotionCount);
  CHECK(s.train.size() == 32);
  CHECK(!s.valid.empty());
  CHECK(!s.test.empty());
  CHECK_THROWS_AS(load_official_splits(kFixtures), DataError);
}

TEST_CASE("seeded split partitions conversations") {
  EmpatheticCorpus c = load_empathetic_csv(kFixtures / "official" / "train.csv");
  CorpusSplits a = split_by_conversation(c, 5);
  CorpusSplits b = split_by_conversation(c, 5);
  CHECK(a.train.size() + a.valid.size() + a.test.size() == c.records.size());
  CHECK(a.valid.size() == 3);
  CHECK(a.test.size() == 3);
  CHECK(a.train.front().conv_id == b.train.front().conv_id);
  std::set<std::string> ids;
  for (auto* part : {&a.train, &a.valid, &a.test})
    for (const auto& r : *part) CHECK(ids.insert(r.conv_id).second);
}

TEST_CASE("make_examples expands one example per reply") {
  EmpatheticCorpus c = load_empathetic_csv(kFixtures / "empathetic_train.csv");
  auto ex = make_examples(c.records, c.labels, 3, default_persona());
  CHECK(ex.size() == 32);
  // The five-turn joyful conversation yields four examples, all joyful.
  std::size_t joyful = 0;
  for (const auto& e : ex) {
    if (e.conv_id == c.records[0].conv_id) {
      CHECK(e.emotion == c.labels.id("joyful"));
      ++joyful;
    }
  }
  CHECK(joyful == 4);
  const DialogueExample& last = ex[3];
  CHECK(last.history.size() == 3);
  CHECK(last.gold_reply == c.records[0].utterances[4].text);
  CHECK(last.history.back().role == Role::kUser);
  CHECK(last.history[1].role == Role::kBot);
  CHECK(ex[0].persona == default_persona());

  DialogueRecord four{"x", "joyful", "", {{0, "a"}, {1, "b"}, {0, "c"}, {1, "d"}}};
  DialogueRecord one{"y", "joyful", "", {{0, "a"}}};
  std::vector<DialogueRecord> recs{four, one};
  CHECK(make_examples(recs, c.labels, 3, {}).size() == 3);
}

TEST_CASE("default persona is the three fixed sentences") {
  CHECK(default_persona() == std::vector<std::string>{
                                 "my name is caire",
                                 "i want to help humans to make a better world",
                                 "i am a good friend of humans"});
}

TEST_CASE("distractors come from other conversations, uniformly and reproducibly") {
  EmpatheticCorpus c = load_empathetic_csv(kFixtures / "official" / "train.csv");
  std::vector<DialogueRecord> ten(c.records.begin(), c.records.begin() + 10);
  auto ex = make_examples(ten, c.labels, 3, {});
  DistractorSampler sampler(ex);
  std::map<std::string, std::string> conv_of_reply;
  for (const auto& e : ex) conv_of_reply[e.gold_reply] = e.conv_id;
  std::mt19937_64 rng(11);
  std::set<std::string> seen;
  for (int i = 0; i < 10000; ++i) {
    const auto& cur = ex[i % ex.size()];
    const std::string& d = sampler.sample(cur, rng);
    CHECK(d != cur.gold_reply);
    CHECK(conv_of_reply.at(d) != cur.conv_id);
    if (cur.conv_id == ex[0].conv_id) seen.insert(conv_of_reply.at(d));
  }
  CHECK(seen.size() == 9);

  std::mt19937_64 r1(3), r2(3);
  for (int i = 0; i < 50; ++i) CHECK(sampler.sample(ex[0], r1) == sampler.sample(ex[0], r2));

  std::vector<DialogueExample> single(ex.begin(), ex.begin() + 1);
  CHECK_THROWS_AS(DistractorSampler{single}, DataError);
}

TEST_CASE("persona pretraining format") {
  auto ex = load_persona_pretraining(kFixtures / "persona_pretrain.txt");
  CHECK(ex.size() == 4);
  CHECK(ex[0].persona.size() == 3);
  CHECK(ex[0].persona[0] == "my name is caire.");
  CHECK(ex[0].emotion == kNoEmotion);
  CHECK(ex[1].history.size() == 3);
  CHECK(ex[2].persona.size() == 2);
  CHECK(ex[2].conv_id != ex[0].conv_id);

  auto two = load_persona_pretraining(write_temp(
      "two.txt", "1 your persona: a.\n2 your persona: b.\n3 hi\thello\n4 bye\tsee you\n"));
  CHECK(two.size() == 2);
  CHECK(two[0].persona.size() == 2);
  CHECK(load_persona_pretraining(write_temp("empty.txt", "")).empty());
  try {
    load_persona_pretraining(write_temp("bad.txt", "1 your persona: a.\n2 no tab here\n"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}
