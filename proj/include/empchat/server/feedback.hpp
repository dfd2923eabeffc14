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

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "empchat/corpus.hpp"

namespace empchat {

enum class FeedbackKind { kReport, kEdit };

std::string_view feedback_kind_name(FeedbackKind kind);

struct FeedbackRecord {
  FeedbackKind kind = FeedbackKind::kReport;
  std::string session_id;
  std::size_t turn_id = 0;
  std::vector<std::string> persona;
  std::vector<Turn> history;  // everything the user said and saw up to the reply
  std::string original_reply;
  std::string revised_reply;  // edits only
  std::string timestamp;      // UTC, "YYYY-MM-DDTHH:MM:SS.mmmZ"

  /// One line of structured text, no trailing newline.
  std::string to_json() const;
  /// Throws DataError on malformed input or an edit without a revision.
  static FeedbackRecord from_json(std::string_view line);
};

bool operator==(const FeedbackRecord& a, const FeedbackRecord& b);

std::string utc_timestamp_now();

/// Append-only log, one record per line. append() returns only after the
/// line has been written and flushed to stable storage.
class FeedbackLog {
 public:
  explicit FeedbackLog(std::filesystem::path path);
  ~FeedbackLog();

  FeedbackLog(const FeedbackLog&) = delete;
  FeedbackLog& operator=(const FeedbackLog&) = delete;

  void append(const FeedbackRecord& record);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  int fd_ = -1;
};

struct FeedbackExport {
  std::vector<DialogueExample> items;  // one per edit
  std::size_t edits = 0;
  std::size_t reports = 0;
  std::vector<std::string> warnings;  // "<path>:<line>: <cause>"
};

/// Turns edit records into imitation examples (history trimmed to the last
/// `history_window` utterances, revision as gold, no emotion label, conv_id
/// derived from the session). Records older than `since` are ignored. A
/// missing log reads as empty.
FeedbackExport export_feedback(const std::filesystem::path& path,
                               const std::optional<std::string>& since = std::nullopt,
                               std::size_t history_window = 3);

}  // namespace empchat
