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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "empchat/corpus.hpp"
#include "empchat/generator.hpp"
#include "empchat/server/feedback.hpp"
#include "empchat/server/session.hpp"
#include "empchat/server/worker_pool.hpp"

namespace httplib {
class Server;
}

namespace empchat {

struct ChatReply {
  std::string text;
  std::string emotion;
};

/// Produces one reply. Called concurrently from different workers, never
/// twice at once for the same worker_id.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatReply respond(std::size_t worker_id, const std::vector<std::string>& persona,
                            const std::vector<Turn>& history) = 0;
};

/// Decodes with a frozen model and labels the dialogue's emotion.
class ModelBackend final : public ChatBackend {
 public:
  ModelBackend(std::shared_ptr<const Model<float>> model, Vocab vocab,
               std::vector<std::string> emotion_labels, DecodeParams params);

  ChatReply respond(std::size_t worker_id, const std::vector<std::string>& persona,
                    const std::vector<Turn>& history) override;

 private:
  std::shared_ptr<const Model<float>> model_;
  Vocab vocab_;
  std::vector<std::string> labels_;
  DecodeParams params_;
};

struct ServerOptions {
  std::size_t workers = 2;
  std::size_t queue_capacity = 64;
  std::size_t history_window = 3;
  std::size_t http_threads = 64;
  std::filesystem::path feedback_log = "feedback.jsonl";
  std::optional<std::filesystem::path> static_dir;
  /// Loaded at startup when present, written on stop().
  std::optional<std::filesystem::path> session_snapshot;
  std::vector<std::string> persona = default_persona();
  std::uint64_t session_seed = 0;

  void validate() const;
};

struct ApiResponse {
  int status = 200;
  std::string body;  // structured text
  bool retry_later = false;
};

/// The chat service. The api_* methods are the endpoint handlers and can be
/// driven without a socket.
class ChatServer {
 public:
  ChatServer(std::shared_ptr<ChatBackend> backend, ServerOptions options);
  ~ChatServer();

  ChatServer(const ChatServer&) = delete;
  ChatServer& operator=(const ChatServer&) = delete;

  ApiResponse api_chat(std::string_view body);
  ApiResponse api_report(std::string_view body);
  ApiResponse api_edit(std::string_view body);
  ApiResponse api_health() const;

  /// Binds the listening socket; port 0 picks a free one. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void serve();
  void stop();

  const ServerOptions& options() const noexcept { return options_; }
  const WorkerPool& pool() const noexcept { return pool_; }
  SessionStore& sessions() noexcept { return sessions_; }

 private:
  ApiResponse feedback(std::string_view body, FeedbackKind kind);
  void install_routes();

  ServerOptions options_;
  std::shared_ptr<ChatBackend> backend_;
  SessionStore sessions_;
  FeedbackLog log_;
  WorkerPool pool_;
  std::unique_ptr<httplib::Server> http_;
  bool snapshot_written_ = false;
};

}  // namespace empchat
