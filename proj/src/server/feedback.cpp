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


#include "empchat/server/feedback.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "empchat/error.hpp"
#include "empchat/server/session.hpp"

namespace empchat {
namespace {

using nlohmann::json;

std::string_view role_name(Role r) { return r == Role::kUser ? "user" : "bot"; }

Role parse_role(const std::string& s) {
  if (s == "user") return Role::kUser;
  if (s == "bot") return Role::kBot;
  throw DataError("unknown role '" + s + "'");
}

[[noreturn]] void io_fail(const std::filesystem::path& path, const char* what) {
  throw std::runtime_error("feedback log " + path.string() + ": " + what + ": " +
                           std::strerror(errno));
}

}  // namespace

std::string_view feedback_kind_name(FeedbackKind kind) {
  return kind == FeedbackKind::kReport ? "report" : "edit";
}

std::string FeedbackRecord::to_json() const {
  json history_json = json::array();
  for (const Turn& t : history)
    history_json.push_back({{"role", role_name(t.role)}, {"text", t.text}});
  nlohmann::ordered_json j;
  j["kind"] = feedback_kind_name(kind);
  j["session_id"] = session_id;
  j["turn_id"] = turn_id;
  j["persona"] = persona;
  j["history"] = history_json;
  j["original_reply"] = original_reply;
  if (kind == FeedbackKind::kEdit)
    j["revised_reply"] = revised_reply;
  else
    j["revised_reply"] = nullptr;
  j["timestamp"] = timestamp;
  return j.dump();
}

FeedbackRecord FeedbackRecord::from_json(std::string_view line) {
  FeedbackRecord r;
  try {
    const json j = json::parse(line);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "report")
      r.kind = FeedbackKind::kReport;
    else if (kind == "edit")
      r.kind = FeedbackKind::kEdit;
    else
      throw DataError("unknown kind '" + kind + "'");
    r.session_id = j.at("session_id").get<std::string>();
    r.turn_id = j.at("turn_id").get<std::size_t>();
    r.persona = j.at("persona").get<std::vector<std::string>>();
    for (const json& t : j.at("history"))
      r.history.push_back({parse_role(t.at("role").get<std::string>()), t.at("text").get<std::string>()});
    r.original_reply = j.at("original_reply").get<std::string>();
    if (r.kind == FeedbackKind::kEdit) {
      r.revised_reply = j.at("revised_reply").get<std::string>();
      if (r.revised_reply.empty()) throw DataError("edit record without a revision");
    }
    r.timestamp = j.at("timestamp").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(e.what());
  }
  return r;
}

bool operator==(const FeedbackRecord& a, const FeedbackRecord& b) {
  if (a.history.size() != b.history.size()) return false;
  for (std::size_t i = 0; i < a.history.size(); ++i)
    if (a.history[i].role != b.history[i].role || a.history[i].text != b.history[i].text) return false;
  return a.kind == b.kind && a.session_id == b.session_id && a.turn_id == b.turn_id &&
         a.persona == b.persona && a.original_reply == b.original_reply &&
         a.revised_reply == b.revised_reply && a.timestamp == b.timestamp;
}

std::string utc_timestamp_now() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const std::time_t secs = system_clock::to_time_t(now);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  const std::size_t n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
  return buf;
}

FeedbackLog::FeedbackLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) io_fail(path_, "open");
}

FeedbackLog::~FeedbackLog() {
  if (fd_ >= 0) ::close(fd_);
}

void FeedbackLog::append(const FeedbackRecord& record) {
  if (record.kind == FeedbackKind::kEdit && record.revised_reply.empty())
    throw std::invalid_argument("edit record needs a revised reply");
  const std::string line = record.to_json() + '\n';
  std::lock_guard lock(mutex_);
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail(path_, "write");
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) io_fail(path_, "fsync");
}

FeedbackExport export_feedback(const std::filesystem::path& path,
                               const std::optional<std::string>& since,
                               std::size_t history_window) {
  FeedbackExport out;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (std::filesystem::exists(path)) throw DataError("cannot read feedback log " + path.string());
    return out;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    FeedbackRecord r;
    try {
      r = FeedbackRecord::from_json(line);
    } catch (const DataError& e) {
      out.warnings.push_back(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    if (since && r.timestamp < *since) continue;
    if (r.kind == FeedbackKind::kReport) {
      ++out.reports;
      continue;
    }
    ++out.edits;
    DialogueExample ex;
    ex.conv_id = "feedback:" + r.session_id;
    ex.persona = std::move(r.persona);
    ex.history = trim_history(std::move(r.history), history_window);
    ex.gold_reply = std::move(r.revised_reply);
    ex.emotion = kNoEmotion;
    out.items.push_back(std::move(ex));
  }
  return out;
}

}  // namespace empchat
