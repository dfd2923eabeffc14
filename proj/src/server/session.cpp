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


#include "empchat/server/session.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "empchat/error.hpp"

namespace empchat {
namespace {

using nlohmann::json;

// splitmix64 finalizer; a bijection, so distinct counters give distinct ids.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

json turn_to_json(const SessionTurn& t) {
  return {{"turn_id", t.turn_id}, {"user_text", t.user_text}, {"bot_text", t.bot_text},
          {"emotion", t.emotion}, {"reported", t.flags.reported}, {"edited", t.flags.edited}};
}

}  // namespace

std::vector<Turn> trim_history(std::vector<Turn> history, std::size_t window) {
  if (window > 0 && history.size() > window)
    history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(window));
  return history;
}

std::vector<Turn> Session::history_before(std::size_t turn_id) const {
  std::vector<Turn> out;
  for (const SessionTurn& t : turns) {
    out.push_back({Role::kUser, t.user_text});
    if (t.turn_id == turn_id) return out;
    out.push_back({Role::kBot, t.bot_text});
  }
  throw std::out_of_range("session " + session_id + " has no turn " + std::to_string(turn_id));
}

std::vector<Turn> Session::context_for(const std::string& user_text, std::size_t window) const {
  std::vector<Turn> out;
  out.reserve(turns.size() * 2 + 1);
  for (const SessionTurn& t : turns) {
    out.push_back({Role::kUser, t.user_text});
    out.push_back({Role::kBot, t.bot_text});
  }
  out.push_back({Role::kUser, user_text});
  return trim_history(std::move(out), window);
}

const SessionTurn* Session::find_turn(std::size_t turn_id) const {
  for (const SessionTurn& t : turns)
    if (t.turn_id == turn_id) return &t;
  return nullptr;
}

SessionTurn* Session::find_turn(std::size_t turn_id) {
  return const_cast<SessionTurn*>(std::as_const(*this).find_turn(turn_id));
}

SessionStore::SessionStore(std::vector<std::string> default_persona, std::uint64_t seed)
    : default_persona_(std::move(default_persona)),
      salt_(seed != 0 ? seed : (std::uint64_t{std::random_device{}()} << 32) ^ std::random_device{}()) {}

std::string SessionStore::fresh_id() {
  for (;;) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(mix(salt_ + counter_++)));
    if (!sessions_.count(buf)) return buf;
  }
}

std::string SessionStore::open(const std::optional<std::string>& id) {
  std::lock_guard lock(mutex_);
  if (id && sessions_.count(*id)) return *id;
  auto entry = std::make_unique<Entry>();
  entry->session.session_id = fresh_id();
  entry->session.persona = default_persona_;
  std::string out = entry->session.session_id;
  sessions_.emplace(out, std::move(entry));
  return out;
}

bool SessionStore::contains(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return sessions_.count(id) != 0;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

SessionStore::Entry* SessionStore::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

void SessionStore::with_session(const std::string& id, const std::function<void(Session&)>& fn) {
  Entry* e = find(id);
  if (!e) throw std::out_of_range("unknown session " + id);
  std::lock_guard lock(e->mutex);
  fn(e->session);
}

void SessionStore::save_snapshot(const std::filesystem::path& path) const {
  json all = json::array();
  std::lock_guard lock(mutex_);
  for (const auto& [id, entry] : sessions_) {
    std::lock_guard session_lock(entry->mutex);
    json turns = json::array();
    for (const SessionTurn& t : entry->session.turns) turns.push_back(turn_to_json(t));
    all.push_back({{"session_id", id}, {"persona", entry->session.persona}, {"turns", turns}});
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write session snapshot " + tmp.string());
    out << all.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void SessionStore::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open session snapshot " + path.string());
  std::map<std::string, std::unique_ptr<Entry>> loaded;
  try {
    const json all = json::parse(in);
    for (const json& s : all) {
      auto entry = std::make_unique<Entry>();
      Session& session = entry->session;
      session.session_id = s.at("session_id").get<std::string>();
      session.persona = s.at("persona").get<std::vector<std::string>>();
      for (const json& t : s.at("turns")) {
        SessionTurn turn;
        turn.turn_id = t.at("turn_id").get<std::size_t>();
        if (!session.turns.empty() && turn.turn_id <= session.turns.back().turn_id)
          throw DataError("turn ids must increase");
        turn.user_text = t.at("user_text").get<std::string>();
        turn.bot_text = t.at("bot_text").get<std::string>();
        turn.emotion = t.at("emotion").get<std::string>();
        turn.flags.reported = t.at("reported").get<bool>();
        turn.flags.edited = t.at("edited").get<bool>();
        session.turns.push_back(std::move(turn));
      }
      const std::string id = session.session_id;
      loaded.emplace(id, std::move(entry));
    }
  } catch (const json::exception& e) {
    throw DataError("session snapshot " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("session snapshot " + path.string() + ": " + e.what());
  }
  std::lock_guard lock(mutex_);
  sessions_ = std::move(loaded);
}

}  // namespace empchat
