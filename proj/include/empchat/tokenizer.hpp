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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace empchat {

/// Reserved ids. The six segment markers come first, then the unknown-word
/// token; corpus tokens start at kFirstWordId.
enum SpecialId : int {
  kPad = 0,
  kBos = 1,
  kEos = 2,
  kSpeakerUser = 3,
  kSpeakerBot = 4,
  kPersonaMark = 5,
  kUnk = 6,
  kFirstWordId = 7,
};

inline constexpr std::array<std::string_view, kFirstWordId> kSpecialTokens = {
    "<pad>", "<bos>", "<eos>", "<user>", "<bot>", "<persona>", "<unk>"};

/// Lowercases ASCII, splits ASCII punctuation into standalone tokens and
/// collapses whitespace.
std::vector<std::string> split_words(std::string_view text);

/// split_words joined with single spaces.
std::string normalize_text(std::string_view text);

/// Word-level vocabulary. Immutable once built, safe to share across threads.
class Vocab {
 public:
  /// Counts words over `texts`, keeps those seen at least `min_freq` times,
  /// ranks by descending frequency then lexicographically, and truncates so
  /// the total size (specials included) is at most `max_size`.
  static Vocab build(std::span<const std::string> texts, std::size_t min_freq,
                     std::size_t max_size);

  /// One token per line; line number is the id.
  static Vocab load(const std::filesystem::path& path);
  static Vocab from_tokens(std::vector<std::string> tokens);

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  std::vector<int> encode(std::string_view text) const;
  /// Joins tokens with single spaces. Specials render as their tags unless
  /// `skip_special` is set. Throws std::out_of_range on an invalid id.
  std::string decode(std::span<const int> ids, bool skip_special = false) const;

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  static bool is_special(int id) noexcept { return id >= 0 && id < kFirstWordId; }

  /// FNV-1a 64 over the serialized vocab; checkpoints record it.
  std::uint64_t fingerprint() const;

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  explicit Vocab(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace empchat
