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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "empchat/corpus.hpp"

namespace empchat {

struct TurnFlags {
  bool reported = false;
  bool edited = false;
};

struct SessionTurn {
  std::size_t turn_id = 0;
  std::string user_text;
  std::string bot_text;
  std::string emotion;
  TurnFlags flags;
};

struct Session {
  std::string session_id;
  std::vector<std::string> persona;
  std::vector<SessionTurn> turns;

  /// All utterances before turn `turn_id` plus that turn's user text.
  std::vector<Turn> history_before(std::size_t turn_id) const;
  /// Model context for a new user message: the last `window` utterances.
  std::vector<Turn> context_for(const std::string& user_text, std::size_t window) const;

  const SessionTurn* find_turn(std::size_t turn_id) const;
  SessionTurn* find_turn(std::size_t turn_id);
};

/// Keeps the last `window` entries of `history` (all of them when 0).
std::vector<Turn> trim_history(std::vector<Turn> history, std::size_t window);

/// In-memory sessions. Each session has its own lock, so requests in one
/// session run in order while different sessions proceed in parallel.
class SessionStore {
 public:
  explicit SessionStore(std::vector<std::string> default_persona, std::uint64_t seed = 0);

  /// Returns `id` when known, otherwise opens a fresh session with the
  /// default persona and returns its new id.
  std::string open(const std::optional<std::string>& id);

  bool contains(const std::string& id) const;
  std::size_t size() const;

  /// Runs `fn` under the session's lock. Throws std::out_of_range for an
  /// unknown id.
  void with_session(const std::string& id, const std::function<void(Session&)>& fn);

  void save_snapshot(const std::filesystem::path& path) const;
  /// Replaces current sessions; throws DataError for a malformed file.
  void load_snapshot(const std::filesystem::path& path);

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
  };

  Entry* find(const std::string& id) const;
  std::string fresh_id();

  std::vector<std::string> default_persona_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
  std::uint64_t salt_;
};

}  // namespace empchat
