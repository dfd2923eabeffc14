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


#include "empchat/server/chat_server.hpp"

#include <future>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace empchat {
namespace {

using nlohmann::json;

ApiResponse ok_json(const json& j) { return {200, j.dump(), false}; }

ApiResponse error_json(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump(), false};
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

ServerOptions validated(ServerOptions o) {
  o.validate();
  return o;
}

// Shared parse of {session_id, turn_id}; empty optional means a 400 was set.
struct TurnRef {
  std::string session_id;
  std::size_t turn_id = 0;
};

std::optional<TurnRef> parse_turn_ref(const json& j, ApiResponse& error) {
  if (!j.is_object() || !j.contains("session_id") || !j["session_id"].is_string()) {
    error = error_json(400, "session_id must be a string");
    return std::nullopt;
  }
  if (!j.contains("turn_id") || !j["turn_id"].is_number_unsigned()) {
    error = error_json(400, "turn_id must be a non-negative integer");
    return std::nullopt;
  }
  return TurnRef{j["session_id"].get<std::string>(), j["turn_id"].get<std::size_t>()};
}

}  // namespace

ModelBackend::ModelBackend(std::shared_ptr<const Model<float>> model, Vocab vocab,
                           std::vector<std::string> emotion_labels, DecodeParams params)
    : model_(std::move(model)),
      vocab_(std::move(vocab)),
      labels_(std::move(emotion_labels)),
      params_(params) {
  if (!model_) throw std::invalid_argument("ModelBackend: null model");
  params_.validate();
  if (labels_.size() != model_->config.n_emotions)
    throw std::invalid_argument("ModelBackend: " + std::to_string(labels_.size()) +
                                " emotion labels for a model with " +
                                std::to_string(model_->config.n_emotions) + " classes");
}

ChatReply ModelBackend::respond(std::size_t, const std::vector<std::string>& persona,
                                const std::vector<Turn>& history) {
  ChatReply r;
  r.text = generate(*model_, vocab_, persona, history, params_);
  r.emotion = labels_.at(classify_emotion(*model_, vocab_, persona, history).label);
  return r;
}

void ServerOptions::validate() const {
  if (workers == 0) throw std::invalid_argument("workers must be at least 1");
  if (http_threads == 0) throw std::invalid_argument("http_threads must be at least 1");
  if (history_window == 0) throw std::invalid_argument("history_window must be at least 1");
  if (feedback_log.empty()) throw std::invalid_argument("feedback_log path is empty");
  if (static_dir && !std::filesystem::is_directory(*static_dir))
    throw std::invalid_argument("static dir " + static_dir->string() + " is not a directory");
}

ChatServer::ChatServer(std::shared_ptr<ChatBackend> backend, ServerOptions options)
    : options_(validated(std::move(options))),
      backend_(std::move(backend)),
      sessions_(options_.persona, options_.session_seed),
      log_(options_.feedback_log),
      pool_(options_.workers, options_.queue_capacity) {
  if (!backend_) throw std::invalid_argument("ChatServer: null backend");
  if (options_.session_snapshot && std::filesystem::exists(*options_.session_snapshot))
    sessions_.load_snapshot(*options_.session_snapshot);
}

ChatServer::~ChatServer() {
  try {
    stop();
  } catch (...) {
  }
  pool_.shutdown();
}

ApiResponse ChatServer::api_chat(std::string_view body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return error_json(400, "body must be a JSON object");
  if (!j.contains("message") || !j["message"].is_string())
    return error_json(400, "message must be a string");
  const std::string message = j["message"].get<std::string>();
  if (blank(message)) return error_json(400, "message is empty");
  std::optional<std::string> requested;
  if (j.contains("session_id") && !j["session_id"].is_null()) {
    if (!j["session_id"].is_string()) return error_json(400, "session_id must be a string or null");
    requested = j["session_id"].get<std::string>();
  }

  const std::string id = sessions_.open(requested);
  ApiResponse out;
  sessions_.with_session(id, [&](Session& s) {
    const std::size_t turn_id = s.turns.empty() ? 0 : s.turns.back().turn_id + 1;
    auto persona = std::make_shared<const std::vector<std::string>>(s.persona);
    auto history = std::make_shared<const std::vector<Turn>>(
        s.context_for(message, options_.history_window));
    auto promise = std::make_shared<std::promise<ChatReply>>();
    std::future<ChatReply> reply = promise->get_future();
    const bool accepted = pool_.submit([this, promise, persona, history](std::size_t worker) {
      try {
        promise->set_value(backend_->respond(worker, *persona, *history));
      } catch (...) {
        promise->set_exception(std::current_exception());
      }
    });
    if (!accepted) {
      out = error_json(503, "all workers busy, retry later");
      out.retry_later = true;
      return;
    }
    ChatReply r;
    try {
      r = reply.get();
    } catch (const std::exception& e) {
      out = error_json(500, std::string("generation failed: ") + e.what());
      return;
    }
    s.turns.push_back({turn_id, message, r.text, r.emotion, {}});
    out = ok_json({{"session_id", id}, {"turn_id", turn_id}, {"reply", r.text}, {"emotion", r.emotion}});
  });
  return out;
}

ApiResponse ChatServer::feedback(std::string_view body, FeedbackKind kind) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return error_json(400, "body must be a JSON object");
  ApiResponse out;
  const auto ref = parse_turn_ref(j, out);
  if (!ref) return out;
  std::string revised;
  if (kind == FeedbackKind::kEdit) {
    if (!j.contains("revised") || !j["revised"].is_string() || blank(j["revised"].get<std::string>()))
      return error_json(400, "revised must be a non-empty string");
    revised = j["revised"].get<std::string>();
  }
  if (!sessions_.contains(ref->session_id)) return error_json(404, "unknown session");

  sessions_.with_session(ref->session_id, [&](Session& s) {
    SessionTurn* turn = s.find_turn(ref->turn_id);
    if (!turn) {
      out = error_json(404, "unknown turn");
      return;
    }
    FeedbackRecord r;
    r.kind = kind;
    r.session_id = s.session_id;
    r.turn_id = turn->turn_id;
    r.persona = s.persona;
    r.history = s.history_before(turn->turn_id);
    r.original_reply = turn->bot_text;
    r.revised_reply = revised;
    r.timestamp = utc_timestamp_now();
    try {
      log_.append(r);
    } catch (const std::exception& e) {
      out = error_json(500, e.what());
      return;
    }
    (kind == FeedbackKind::kReport ? turn->flags.reported : turn->flags.edited) = true;
    out = ok_json({{"ok", true}});
  });
  return out;
}

ApiResponse ChatServer::api_report(std::string_view body) {
  return feedback(body, FeedbackKind::kReport);
}

ApiResponse ChatServer::api_edit(std::string_view body) { return feedback(body, FeedbackKind::kEdit); }

ApiResponse ChatServer::api_health() const {
  json workers = json::array();
  for (const WorkerStats& w : pool_.stats())
    workers.push_back({{"worker_id", w.worker_id},
                       {"in_flight", w.in_flight},
                       {"max_in_flight", w.max_in_flight},
                       {"completed", w.completed}});
  return ok_json({{"status", "ok"},
                  {"workers", pool_.size()},
                  {"queue_depth", pool_.queue_depth()},
                  {"worker_stats", workers}});
}

void ChatServer::install_routes() {
  auto reply = [](httplib::Response& res, const ApiResponse& a) {
    res.status = a.status;
    if (a.retry_later) res.set_header("Retry-After", "1");
    res.set_content(a.body, "application/json");
  };
  http_->Post("/api/chat", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, api_chat(req.body));
  });
  http_->Post("/api/report", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, api_report(req.body));
  });
  http_->Post("/api/edit", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, api_edit(req.body));
  });
  http_->Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, api_health());
  });
  if (options_.static_dir && !http_->set_mount_point("/", options_.static_dir->string()))
    throw std::runtime_error("cannot serve static files from " + options_.static_dir->string());
}

int ChatServer::bind(const std::string& host, int port) {
  if (http_) throw std::logic_error("ChatServer: already bound");
  http_ = std::make_unique<httplib::Server>();
  const std::size_t threads = options_.http_threads;
  http_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  install_routes();
  if (port == 0) {
    port = http_->bind_to_any_port(host);
    if (port < 0) throw std::runtime_error("cannot bind " + host);
  } else if (!http_->bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ChatServer::serve() {
  if (!http_) throw std::logic_error("ChatServer: serve() before bind()");
  http_->listen_after_bind();
}

void ChatServer::stop() {
  if (http_) http_->stop();
  if (options_.session_snapshot && !snapshot_written_) {
    sessions_.save_snapshot(*options_.session_snapshot);
    snapshot_written_ = true;
  }
}

}  // namespace empchat
