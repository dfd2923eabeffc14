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

#include "empchat/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <unordered_map>
#include <set>

#include "empchat/error.hpp"

namespace empchat {
namespace {

// Comma-separated fields; double quotes group a field and "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back().push_back(c);
    }
  }
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> persona_sentence_list() {
  return {"my name is caire", "i want to help humans to make a better world",
          "i am a good friend of humans"};
}

}  // namespace

EmotionLabels::EmotionLabels(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::set<std::string> seen;
  for (const std::string& l : labels_) {
    if (!seen.insert(l).second) throw DataError("emotion labels: duplicate label '" + l + "'");
  }
}

EmotionLabels EmotionLabels::from_records(std::span<const DialogueRecord> records) {
  std::set<std::string> distinct;
  for (const DialogueRecord& r : records) distinct.insert(r.emotion);
  return EmotionLabels(std::vector<std::string>(distinct.begin(), distinct.end()));
}

int EmotionLabels::id(std::string_view label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it != labels_.end() && *it == label) return static_cast<int>(it - labels_.begin());
  // Tables built elsewhere need not be sorted.
  auto lin = std::find(labels_.begin(), labels_.end(), label);
  if (lin == labels_.end()) throw DataError("unknown emotion label '" + std::string(label) + "'");
  return static_cast<int>(lin - labels_.begin());
}

const std::string& EmotionLabels::name(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= labels_.size()) {
    throw std::out_of_range("emotion id " + std::to_string(id) + " out of range");
  }
  return labels_[static_cast<std::size_t>(id)];
}

std::string unescape_commas(std::string_view text) {
  static constexpr std::string_view kEscape = "_comma_";
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t hit = text.find(kEscape, pos);
    if (hit == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, hit - pos));
    out.push_back(',');
    pos = hit + kEscape.size();
  }
  return out;
}

EmpatheticCorpus load_empathetic_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  strip_cr(line);
  const std::vector<std::string> header = split_csv_line(line);
  auto column = [&](std::string_view name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(path.string() + ": missing required column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_conv = column("conv_id");
  const std::size_t c_idx = column("utterance_idx");
  const std::size_t c_ctx = column("context");
  const std::size_t c_prompt = column("prompt");
  const std::size_t c_utt = column("utterance");
  const std::size_t needed = std::max({c_conv, c_idx, c_ctx, c_prompt, c_utt}) + 1;

  struct Row {
    long index;
    std::string text;
  };
  std::vector<DialogueRecord> records;
  std::vector<std::vector<Row>> rows;
  std::unordered_map<std::string, std::size_t> slot;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() < needed) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected at least " +
                      std::to_string(needed) + " fields, found " + std::to_string(f.size()));
    }
    long index = 0;
    try {
      index = std::stol(f[c_idx]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad utterance_idx '" +
                      f[c_idx] + "'");
    }
    auto [it, fresh] = slot.emplace(f[c_conv], records.size());
    if (fresh) {
      DialogueRecord r;
      r.conv_id = f[c_conv];
      r.emotion = f[c_ctx];
      r.situation = unescape_commas(f[c_prompt]);
      records.push_back(std::move(r));
      rows.emplace_back();
    }
    rows[it->second].push_back(Row{index, unescape_commas(f[c_utt])});
  }
  if (records.empty()) throw DataError(path.string() + ": no data rows");

  for (std::size_t r = 0; r < records.size(); ++r) {
    std::stable_sort(rows[r].begin(), rows[r].end(),
                     [](const Row& a, const Row& b) { return a.index < b.index; });
    for (Row& row : rows[r]) {
      // utterance_idx is 1-based and alternates speakers.
      const int speaker = static_cast<int>((row.index - 1) % 2 == 0 ? 0 : 1);
      records[r].utterances.push_back(Utterance{speaker, std::move(row.text)});
    }
  }
  EmpatheticCorpus corpus;
  corpus.labels = EmotionLabels::from_records(records);
  corpus.records = std::move(records);
  return corpus;
}

CorpusSplits load_official_splits(const std::filesystem::path& dir) {
  CorpusSplits splits;
  EmpatheticCorpus train = load_empathetic_csv(dir / "train.csv");
  if (train.labels.size() != kOfficialEmotionCount) {
    throw DataError((dir / "train.csv").string() + ": expected " +
                    std::to_string(kOfficialEmotionCount) + " emotion labels, found " +
                    std::to_string(train.labels.size()));
  }
  splits.labels = train.labels;
  splits.train = std::move(train.records);
  splits.valid = load_empathetic_csv(dir / "valid.csv").records;
  splits.test = load_empathetic_csv(dir / "test.csv").records;
  return splits;
}

CorpusSplits split_by_conversation(EmpatheticCorpus corpus, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = order.size();
  const std::size_t n_valid = n / 10;
  const std::size_t n_test = n / 10;
  const std::size_t n_train = n - n_valid - n_test;
  CorpusSplits splits;
  splits.labels = corpus.labels;
  for (std::size_t i = 0; i < n; ++i) {
    DialogueRecord& r = corpus.records[order[i]];
    if (i < n_train) {
      splits.train.push_back(std::move(r));
    } else if (i < n_train + n_valid) {
      splits.valid.push_back(std::move(r));
    } else {
      splits.test.push_back(std::move(r));
    }
  }
  return splits;
}

std::vector<std::string> default_persona() { return persona_sentence_list(); }

std::vector<DialogueExample> make_examples(std::span<const DialogueRecord> records,
                                           const EmotionLabels& labels,
                                           std::size_t history_window,
                                           const std::vector<std::string>& persona) {
  if (history_window == 0) throw std::invalid_argument("make_examples: history_window must be >= 1");
  std::vector<DialogueExample> out;
  for (const DialogueRecord& r : records) {
    const int emotion = labels.id(r.emotion);
    for (std::size_t t = 1; t < r.utterances.size(); ++t) {
      const Utterance& reply = r.utterances[t];
      if (reply.text.empty()) continue;
      DialogueExample ex;
      ex.conv_id = r.conv_id;
      ex.persona = persona;
      ex.gold_reply = reply.text;
      ex.emotion = emotion;
      const std::size_t begin = t > history_window ? t - history_window : 0;
      for (std::size_t h = begin; h < t; ++h) {
        const Utterance& u = r.utterances[h];
        ex.history.push_back(Turn{u.speaker == reply.speaker ? Role::kBot : Role::kUser, u.text});
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

DistractorSampler::DistractorSampler(std::span<const DialogueExample> pool) : pool_(pool) {
  bool second = false;
  for (const DialogueExample& ex : pool_) {
    if (ex.conv_id != pool_.front().conv_id) {
      second = true;
      break;
    }
  }
  if (pool_.empty() || !second) {
    throw DataError("distractor sampling needs examples from at least two conversations");
  }
}

const std::string& DistractorSampler::sample(const DialogueExample& current,
                                             std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  auto eligible = [&](const DialogueExample& ex) {
    return ex.conv_id != current.conv_id && ex.gold_reply != current.gold_reply;
  };
  for (int attempt = 0; attempt < 256; ++attempt) {
    const DialogueExample& ex = pool_[pick(rng)];
    if (eligible(ex)) return ex.gold_reply;
  }
  // Most of the pool shares the current conversation; sample the eligible set.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (eligible(pool_[i])) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw DataError("no distractor available for conversation '" + current.conv_id + "'");
  }
  std::uniform_int_distribution<std::size_t> pick_eligible(0, candidates.size() - 1);
  return pool_[candidates[pick_eligible(rng)]].gold_reply;
}

std::vector<DialogueExample> load_persona_pretraining(const std::filesystem::path& path,
                                                      std::size_t history_window) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<DialogueExample> out;
  std::vector<std::string> persona;
  std::vector<Turn> turns;
  bool in_turns = false;
  std::size_t dialogue = 0;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  static constexpr std::string_view kPersonaPrefix = "your persona:";
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::size_t pos = 0;
    while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos == 0 || pos >= line.size() || line[pos] != ' ') fail("expected '<number> <text>'");
    const long number = std::stol(line.substr(0, pos));
    std::string_view body = std::string_view(line).substr(pos + 1);
    if (number == 1) {
      persona.clear();
      turns.clear();
      in_turns = false;
      ++dialogue;
    } else if (dialogue == 0) {
      fail("first dialogue must start at line number 1");
    }
    if (body.substr(0, kPersonaPrefix.size()) == kPersonaPrefix) {
      if (in_turns) fail("persona line after dialogue turns");
      std::string_view sentence = body.substr(kPersonaPrefix.size());
      while (!sentence.empty() && sentence.front() == ' ') sentence.remove_prefix(1);
      if (sentence.empty()) fail("empty persona sentence");
      persona.emplace_back(sentence);
      continue;
    }
    const std::size_t tab = body.find('\t');
    if (tab == std::string_view::npos) fail("turn line needs '<user text>\\t<reply>'");
    std::string user(body.substr(0, tab));
    std::string reply(body.substr(tab + 1));
    if (const std::size_t extra = reply.find('\t'); extra != std::string::npos) reply.resize(extra);
    if (user.empty() || reply.empty()) fail("empty user text or reply");
    in_turns = true;
    turns.push_back(Turn{Role::kUser, std::move(user)});

    DialogueExample ex;
    ex.conv_id = "persona:" + std::to_string(dialogue);
    ex.persona = persona;
    const std::size_t begin = turns.size() > history_window ? turns.size() - history_window : 0;
    ex.history.assign(turns.begin() + static_cast<std::ptrdiff_t>(begin), turns.end());
    ex.gold_reply = reply;
    ex.emotion = kNoEmotion;
    out.push_back(std::move(ex));
    turns.push_back(Turn{Role::kBot, std::move(reply)});
  }
  return out;
}

}  // namespace empchat
