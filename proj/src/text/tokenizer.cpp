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

#include "empchat/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "empchat/error.hpp"

namespace empchat {
namespace {

bool is_ascii_punct(unsigned char c) {
  return c < 0x80 && std::ispunct(c) != 0;
}

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      words.emplace_back(1, ch);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return words;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const std::string& w : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("vocab: duplicate token '" + tokens_[i] + "' at id " + std::to_string(i));
    }
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kSpecialTokens.size()) {
    throw DataError("vocab: " + std::to_string(tokens.size()) + " tokens, fewer than the " +
                    std::to_string(kSpecialTokens.size()) + " reserved specials");
  }
  for (std::size_t i = 0; i < kSpecialTokens.size(); ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw DataError("vocab: id " + std::to_string(i) + " must be '" +
                      std::string(kSpecialTokens[i]) + "', found '" + tokens[i] + "'");
    }
  }
  for (std::size_t i = kSpecialTokens.size(); i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t.empty() || std::any_of(t.begin(), t.end(), [](char c) {
          return is_ascii_space(static_cast<unsigned char>(c));
        })) {
      throw DataError("vocab: invalid token at id " + std::to_string(i));
    }
  }
  return Vocab(std::move(tokens));
}

Vocab Vocab::build(std::span<const std::string> texts, std::size_t min_freq,
                   std::size_t max_size) {
  if (max_size < kSpecialTokens.size()) {
    throw std::invalid_argument("vocab: max_size " + std::to_string(max_size) +
                                " cannot hold the reserved specials");
  }
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const std::string& text : texts) {
    for (std::string& w : split_words(text)) {
      ++counts[std::move(w)];
      ++total;
    }
  }
  if (total == 0) throw DataError("vocab: corpus is empty");

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [word, count] : counts) {
    if (count < std::max<std::size_t>(min_freq, 1)) continue;
    if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), word) != kSpecialTokens.end()) {
      continue;
    }
    ranked.emplace_back(word, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  for (auto& [word, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(word);
  }
  return Vocab(std::move(tokens));
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("vocab: cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

std::string Vocab::serialize() const {
  std::string out;
  for (const std::string& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("vocab: cannot write " + path.string());
  out << serialize();
  if (!out) throw DataError("vocab: write failed for " + path.string());
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& w : split_words(text)) {
    auto it = index_.find(w);
    ids.push_back(it == index_.end() || is_special(it->second) ? kUnk : it->second);
  }
  return ids;
}

std::string Vocab::decode(std::span<const int> ids, bool skip_special) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range for size " +
                              std::to_string(tokens_.size()));
    }
    if (skip_special && is_special(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace empchat
