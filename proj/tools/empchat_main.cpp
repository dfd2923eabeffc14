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


#include <pthread.h>
#include <signal.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "empchat/checkpoint.hpp"
#include "empchat/corpus.hpp"
#include "empchat/error.hpp"
#include "empchat/generator.hpp"
#include "empchat/metrics.hpp"
#include "empchat/runtime.hpp"
#include "empchat/server/chat_server.hpp"
#include "empchat/trainer.hpp"

namespace fs = std::filesystem;
using namespace empchat;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct Dataset {
  std::vector<DialogueRecord> train, valid, test;
  EmotionLabels labels;
};

// A directory holds the official train/valid/test files; a single file is
// used whole as the training split.
Dataset load_dataset(const fs::path& path) {
  Dataset d;
  if (fs::is_directory(path)) {
    CorpusSplits s = load_official_splits(path);
    d.train = std::move(s.train);
    d.valid = std::move(s.valid);
    d.test = std::move(s.test);
    d.labels = std::move(s.labels);
  } else {
    EmpatheticCorpus c = load_empathetic_csv(path);
    d.train = std::move(c.records);
    d.labels = std::move(c.labels);
  }
  return d;
}

std::vector<std::string> placeholder_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("emotion_" + std::to_string(i));
  return out;
}

struct ModelFlags {
  ModelConfig config;
  std::optional<std::uint64_t> model_seed;

  void add(CLI::App* app) {
    app->add_option("--layers", config.n_layers, "Decoder blocks")->capture_default_str();
    app->add_option("--heads", config.n_heads, "Attention heads")->capture_default_str();
    app->add_option("--d-model", config.d_model, "Hidden width")->capture_default_str();
    app->add_option("--d-ff", config.d_ff, "Feed-forward width")->capture_default_str();
    app->add_option("--positions", config.n_positions, "Maximum sequence length")
        ->capture_default_str();
    app->add_option("--dropout", config.dropout, "Dropout rate during training")
        ->capture_default_str();
    app->add_option("--model-seed", model_seed, "Initialization seed (defaults to --seed)");
  }
};

struct TrainFlags {
  TrainConfig config;
  std::size_t history_window = 3;

  void add(CLI::App* app) {
    app->add_option("--alpha", config.alpha, "Weight of the language-model loss")
        ->capture_default_str();
    app->add_option("--lr", config.lr, "Peak Adam learning rate")->capture_default_str();
    app->add_option("--batch-size", config.batch_size, "Examples per step")->capture_default_str();
    app->add_option("--epochs", config.epochs, "Passes over the data")->capture_default_str();
    app->add_option("--max-steps", config.max_steps, "Stop after this many steps (0: no limit)")
        ->capture_default_str();
    app->add_option("--clip", config.grad_clip_norm, "Global gradient norm bound")
        ->capture_default_str();
    app->add_option("--seed", config.seed, "Shuffle, distractor and dropout seed")
        ->capture_default_str();
    app->add_flag("--lm,!--no-lm", config.objectives.lm, "Language-model objective")
        ->default_str("true");
    app->add_flag("--selection,!--no-selection", config.objectives.selection,
                  "Response-selection objective")
        ->default_str("true");
    app->add_flag("--emotion,!--no-emotion", config.objectives.emotion, "Emotion objective")
        ->default_str("true");
    app->add_option("--history-window", history_window, "Utterances of context per example")
        ->capture_default_str();
  }

  void validate() const {
    config.validate();
    if (history_window == 0) throw std::invalid_argument("history-window must be at least 1");
  }
};

struct DecodeFlags {
  DecodeParams params;
  std::string strategy{strategy_name(DecodeParams{}.strategy)};

  void add(CLI::App* app) {
    app->add_option("--strategy", strategy, "greedy, top_k or nucleus")->capture_default_str();
    app->add_option("--top-k", params.k, "Candidates kept by top_k")->capture_default_str();
    app->add_option("--top-p", params.p, "Probability mass kept by nucleus")
        ->capture_default_str();
    app->add_option("--temperature", params.temperature, "Softmax temperature")
        ->capture_default_str();
    app->add_option("--max-tokens", params.max_new_tokens, "Reply length limit")
        ->capture_default_str();
    app->add_option("--decode-seed", params.seed, "Sampling seed")->capture_default_str();
  }

  DecodeParams resolve() {
    params.strategy = parse_strategy(strategy);
    params.validate();
    return params;
  }
};

void write_epoch(std::ofstream& log, const EpochLog& e) {
  const std::string line = epoch_log_line(e);
  log << line << '\n' << std::flush;
  std::cerr << line << '\n';
}

std::ofstream open_metrics(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write metrics log " + path.string());
  return out;
}

fs::path default_metrics_path(const fs::path& ckpt) { return ckpt.string() + ".metrics.jsonl"; }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// Checks model flags before any file is touched.
void check_model_flags(const ModelFlags& m) {
  ModelConfig probe = m.config;
  probe.vocab_size = kFirstWordId + 1;
  probe.n_emotions = std::max<std::size_t>(probe.n_emotions, 1);
  probe.validate();
}

Model<float> fresh_model(const ModelFlags& m, const Vocab& vocab, std::size_t n_emotions,
                         std::uint64_t seed) {
  ModelConfig c = m.config;
  c.vocab_size = vocab.size();
  c.n_emotions = n_emotions;
  c.seed = m.model_seed.value_or(seed);
  return Model<float>::init(c);
}

Checkpoint init_from(const fs::path& init, const Vocab& vocab, std::size_t n_emotions) {
  Checkpoint ck = load_checkpoint(init, &vocab);
  if (ck.model.config.n_emotions != n_emotions)
    throw DataError("checkpoint " + init.string() + " has " +
                    std::to_string(ck.model.config.n_emotions) + " emotion classes, data has " +
                    std::to_string(n_emotions));
  return ck;
}

std::vector<std::string> read_persona(const std::optional<fs::path>& path) {
  if (!path) return default_persona();
  std::ifstream in(*path);
  if (!in) throw DataError("cannot open persona file " + path->string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  if (out.empty()) throw DataError("persona file " + path->string() + " is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();

  CLI::App app{"Empathetic persona chatbot: vocabulary, training, evaluation and serving"};
  app.set_config("--config", "", "TOML/INI file with flag values; the command line wins");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "empchat 0.1.0");

  // build-vocab
  std::vector<fs::path> vocab_data;
  std::vector<fs::path> vocab_persona;
  std::size_t min_freq = 1, max_size = 20000;
  fs::path vocab_out;
  auto* build_vocab = app.add_subcommand("build-vocab", "Build a word vocabulary from corpora");
  build_vocab->add_option("--data", vocab_data, "Empathetic csv files or official directories");
  build_vocab->add_option("--persona-data", vocab_persona, "Persona dialogue files");
  build_vocab->add_option("--min-freq", min_freq, "Drop rarer words")->capture_default_str();
  build_vocab->add_option("--max-size", max_size, "Vocabulary size cap, specials included")
      ->capture_default_str();
  build_vocab->add_option("--out", vocab_out, "Vocabulary file")->required();

  // pretrain-persona
  fs::path pre_data, pre_vocab, pre_out;
  std::optional<fs::path> pre_init, pre_labels, pre_metrics;
  std::size_t pre_emotions = kOfficialEmotionCount;
  ModelFlags pre_model;
  TrainFlags pre_train;
  auto* pretrain = app.add_subcommand("pretrain-persona",
                                      "Train on persona dialogues with the emotion objective off");
  pretrain->add_option("--data", pre_data, "Persona dialogue file")->required();
  pretrain->add_option("--vocab", pre_vocab, "Vocabulary file")->required();
  pretrain->add_option("--out", pre_out, "Output checkpoint")->required();
  pretrain->add_option("--init", pre_init, "Start from this checkpoint");
  pretrain->add_option("--labels", pre_labels, "Take the emotion label table from this corpus");
  pretrain->add_option("--emotions", pre_emotions, "Emotion classes when --labels is absent")
      ->capture_default_str();
  pretrain->add_option("--metrics-log", pre_metrics, "Per-epoch log (default <out>.metrics.jsonl)");
  pre_model.add(pretrain);
  pre_train.add(pretrain);

  // train
  fs::path train_data, train_vocab, train_out;
  std::optional<fs::path> train_valid, train_init, train_metrics, train_persona;
  ModelFlags train_model;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune on empathetic dialogues");
  train_cmd->add_option("--data", train_data, "Empathetic csv file or official directory")
      ->required();
  train_cmd->add_option("--valid", train_valid, "Validation csv (a directory brings its own)");
  train_cmd->add_option("--vocab", train_vocab, "Vocabulary file")->required();
  train_cmd->add_option("--out", train_out, "Output checkpoint")->required();
  train_cmd->add_option("--init", train_init, "Start from this checkpoint");
  train_cmd->add_option("--metrics-log", train_metrics, "Per-epoch log (default <out>.metrics.jsonl)");
  train_cmd->add_option("--persona-file", train_persona, "Persona sentences, one per line");
  train_model.add(train_cmd);
  train_flags.add(train_cmd);

  // eval
  fs::path eval_ckpt, eval_vocab, eval_data;
  std::string eval_split = "test";
  std::size_t eval_window = 3;
  std::optional<fs::path> eval_out, eval_persona;
  bool eval_ppl = true, eval_bleu = true, eval_emotion = true;
  DecodeFlags eval_decode;
  auto* eval_cmd = app.add_subcommand("eval", "Report perplexity, BLEU and emotion accuracy");
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--vocab", eval_vocab, "Vocabulary file")->required();
  eval_cmd->add_option("--data", eval_data, "Empathetic csv file or official directory")->required();
  eval_cmd->add_option("--split", eval_split, "Split of an official directory")
      ->check(CLI::IsMember({"train", "valid", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--history-window", eval_window, "Utterances of context per example")
      ->capture_default_str();
  eval_cmd->add_option("--persona-file", eval_persona, "Persona sentences, one per line");
  eval_cmd->add_option("--report", eval_out, "Also write the report here");
  eval_cmd->add_flag("--ppl,!--no-ppl", eval_ppl, "Compute perplexity")->default_str("true");
  eval_cmd->add_flag("--bleu,!--no-bleu", eval_bleu, "Compute BLEU")->default_str("true");
  eval_cmd->add_flag("--emo,!--no-emo", eval_emotion, "Compute emotion accuracy")
      ->default_str("true");
  eval_decode.add(eval_cmd);

  // chat and serve share the model-backed responder
  fs::path run_ckpt, run_vocab;
  std::size_t run_window = 3;
  std::optional<fs::path> run_persona;
  DecodeFlags run_decode;
  auto* chat = app.add_subcommand("chat", "Talk to a checkpoint in the terminal");
  auto* serve = app.add_subcommand("serve", "Run the HTTP chat service");
  for (CLI::App* sub : {chat, serve}) {
    sub->add_option("--ckpt", run_ckpt, "Checkpoint")->required();
    sub->add_option("--vocab", run_vocab, "Vocabulary file")->required();
    sub->add_option("--history-window", run_window, "Utterances of context per reply")
        ->capture_default_str();
    sub->add_option("--persona-file", run_persona, "Persona sentences, one per line");
    run_decode.add(sub);
  }
  std::string host = "127.0.0.1";
  int port = 8080;
  ServerOptions server_opts;
  std::optional<fs::path> static_dir, snapshot;
  serve->add_option("--host", host, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port (0 picks a free one)")->capture_default_str();
  serve->add_option("--workers", server_opts.workers, "Inference workers")->capture_default_str();
  serve->add_option("--queue", server_opts.queue_capacity, "Pending request capacity")
      ->capture_default_str();
  serve->add_option("--http-threads", server_opts.http_threads, "Connection handler threads")
      ->capture_default_str();
  serve->add_option("--feedback-log", server_opts.feedback_log, "Report/edit log")
      ->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Serve files from this directory at /");
  serve->add_option("--session-snapshot", snapshot, "Load sessions from and save them to this file");

  // finetune-feedback
  fs::path ff_ckpt, ff_vocab, ff_log, ff_out;
  std::optional<std::string> ff_since;
  std::optional<fs::path> ff_metrics;
  bool ff_dry_run = false;
  TrainFlags ff_train;
  auto* finetune = app.add_subcommand("finetune-feedback",
                                      "Refit a checkpoint on user-edited replies");
  finetune->add_option("--ckpt", ff_ckpt, "Checkpoint to refine")->required();
  finetune->add_option("--vocab", ff_vocab, "Vocabulary file")->required();
  finetune->add_option("--log", ff_log, "Feedback log")->required();
  finetune->add_option("--out", ff_out, "Output checkpoint");
  finetune->add_option("--since", ff_since, "Only records at or after this UTC timestamp");
  finetune->add_option("--metrics-log", ff_metrics, "Per-epoch log (default <out>.metrics.jsonl)");
  finetune->add_flag("--dry-run", ff_dry_run, "Print the exported items and stop");
  ff_train.add(finetune);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  if (finetune->parsed() && !ff_dry_run && ff_out.empty()) {
    std::cerr << "empchat: finetune-feedback needs --out unless --dry-run\n";
    return kUsage;
  }

  for (CLI::App* sub : app.get_subcommands())
    std::cerr << "# resolved configuration: " << sub->get_name() << '\n'
              << sub->config_to_str(true, false);

  try {
    // Flags first, so nothing is loaded for a bad configuration.
    try {
      if (pretrain->parsed()) {
        check_model_flags(pre_model);
        pre_train.validate();
      }
      if (train_cmd->parsed()) {
        check_model_flags(train_model);
        train_flags.validate();
      }
      if (finetune->parsed()) ff_train.validate();
      if (eval_cmd->parsed()) eval_decode.resolve();
      if (chat->parsed() || serve->parsed()) run_decode.resolve();
      if (serve->parsed()) {
        server_opts.history_window = run_window;
        server_opts.static_dir = static_dir;
        server_opts.session_snapshot = snapshot;
        server_opts.validate();
      }
    } catch (const std::invalid_argument& e) {
      std::cerr << "empchat: invalid configuration: " << e.what() << '\n';
      return kUsage;
    }

    if (build_vocab->parsed()) {
      if (vocab_data.empty() && vocab_persona.empty())
        throw DataError("build-vocab needs --data or --persona-data");
      std::vector<std::string> texts = default_persona();
      for (const fs::path& p : vocab_data) {
        const Dataset d = load_dataset(p);
        for (const auto* part : {&d.train, &d.valid})
          for (const DialogueRecord& r : *part)
            for (const Utterance& u : r.utterances) texts.push_back(u.text);
      }
      for (const fs::path& p : vocab_persona)
        for (const DialogueExample& ex : load_persona_pretraining(p)) {
          texts.insert(texts.end(), ex.persona.begin(), ex.persona.end());
          for (const Turn& t : ex.history) texts.push_back(t.text);
          texts.push_back(ex.gold_reply);
        }
      const Vocab v = Vocab::build(texts, min_freq, max_size);
      ensure_parent(vocab_out);
      v.save(vocab_out);
      std::cout << "vocab " << vocab_out.string() << " size " << v.size() << '\n';
      return kOk;
    }

    if (pretrain->parsed()) {
      const Vocab vocab = Vocab::load(pre_vocab);
      const std::vector<DialogueExample> ex =
          load_persona_pretraining(pre_data, pre_train.history_window);
      if (ex.empty()) throw DataError("no persona examples in " + pre_data.string());
      std::vector<std::string> labels =
          pre_labels ? load_dataset(*pre_labels).labels.labels() : placeholder_labels(pre_emotions);
      Model<float> model = pre_init ? init_from(*pre_init, vocab, labels.size()).model
                                    : fresh_model(pre_model, vocab, labels.size(),
                                                  pre_train.config.seed);
      TrainConfig cfg = pre_train.config;
      cfg.objectives.emotion = false;
      std::ofstream log = open_metrics(pre_metrics.value_or(default_metrics_path(pre_out)));
      const TrainResult r = empchat::train(model, vocab, ex, cfg, {},
                                           [&](const EpochLog& e) { write_epoch(log, e); });
      ensure_parent(pre_out);
      save_checkpoint(pre_out, model, vocab, labels);
      std::cout << "checkpoint " << pre_out.string() << " after " << r.steps << " steps\n";
      return kOk;
    }

    if (train_cmd->parsed()) {
      const Vocab vocab = Vocab::load(train_vocab);
      Dataset d = load_dataset(train_data);
      if (train_valid) d.valid = load_empathetic_csv(*train_valid).records;
      const auto persona = read_persona(train_persona);
      const std::size_t window = train_flags.history_window;
      const auto ex = make_examples(d.train, d.labels, window, persona);
      const auto valid = make_examples(d.valid, d.labels, window, persona);
      if (ex.empty()) throw DataError("no training examples in " + train_data.string());
      Model<float> model = train_init ? init_from(*train_init, vocab, d.labels.size()).model
                                      : fresh_model(train_model, vocab, d.labels.size(),
                                                    train_flags.config.seed);
      std::ofstream log = open_metrics(train_metrics.value_or(default_metrics_path(train_out)));
      const TrainResult r = empchat::train(model, vocab, ex, train_flags.config, valid,
                                           [&](const EpochLog& e) { write_epoch(log, e); });
      ensure_parent(train_out);
      save_checkpoint(train_out, model, vocab, d.labels.labels());
      std::cout << "checkpoint " << train_out.string() << " after " << r.steps << " steps on "
                << ex.size() << " examples\n";
      return kOk;
    }

    if (eval_cmd->parsed()) {
      const Vocab vocab = Vocab::load(eval_vocab);
      const Checkpoint ck = load_checkpoint(eval_ckpt, &vocab);
      const Dataset d = load_dataset(eval_data);
      const std::vector<DialogueRecord>* records = &d.train;
      if (fs::is_directory(eval_data))
        records = eval_split == "valid" ? &d.valid : eval_split == "test" ? &d.test : &d.train;
      const EmotionLabels labels(ck.emotion_labels);
      const auto ex = make_examples(*records, labels, eval_window, read_persona(eval_persona));
      const EvalReport report =
          evaluate(ck.model, vocab, ex, eval_decode.params, {eval_ppl, eval_bleu, eval_emotion});
      std::cout << report.to_json() << '\n';
      std::cerr << report.table();
      if (eval_out) {
        ensure_parent(*eval_out);
        std::ofstream(*eval_out) << report.to_json() << '\n';
      }
      return kOk;
    }

    if (chat->parsed() || serve->parsed()) {
      const Vocab vocab = Vocab::load(run_vocab);
      Checkpoint ck = load_checkpoint(run_ckpt, &vocab);
      auto model = std::make_shared<const Model<float>>(std::move(ck.model));
      auto backend =
          std::make_shared<ModelBackend>(model, vocab, ck.emotion_labels, run_decode.params);
      const auto persona = read_persona(run_persona);

      if (chat->parsed()) {
        Session session;
        session.persona = persona;
        std::cerr << "type a message; /reset starts over, /quit or end of input leaves\n";
        for (std::string line; std::getline(std::cin, line);) {
          if (line == "/quit") break;
          if (line == "/reset") {
            session.turns.clear();
            continue;
          }
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          const ChatReply r = backend->respond(0, persona, session.context_for(line, run_window));
          session.turns.push_back({session.turns.size(), line, r.text, r.emotion, {}});
          std::cout << "[" << r.emotion << "] " << r.text << std::endl;
        }
        return kOk;
      }

      server_opts.persona = persona;
      sigset_t stop_signals;
      sigemptyset(&stop_signals);
      sigaddset(&stop_signals, SIGINT);
      sigaddset(&stop_signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

      ChatServer server(backend, server_opts);
      const int bound = server.bind(host, port);
      std::thread waiter([&] {
        int sig = 0;
        sigwait(&stop_signals, &sig);
        server.stop();
      });
      std::cerr << "listening on http://" << host << ":" << bound << std::endl;
      server.serve();
      pthread_kill(waiter.native_handle(), SIGTERM);
      waiter.join();
      server.stop();
      return kOk;
    }

    if (finetune->parsed()) {
      const Vocab vocab = Vocab::load(ff_vocab);
      const FeedbackExport fx = export_feedback(ff_log, ff_since, ff_train.history_window);
      for (const std::string& w : fx.warnings) std::cerr << "warning: skipped " << w << '\n';
      std::cout << "feedback edits " << fx.edits << " reports " << fx.reports << " skipped "
                << fx.warnings.size() << '\n';
      if (ff_dry_run) {
        for (const DialogueExample& ex : fx.items) {
          std::cout << ex.conv_id << '\t';
          for (const Turn& t : ex.history) std::cout << (t.role == Role::kUser ? "U: " : "B: ") << t.text << " / ";
          std::cout << "=> " << ex.gold_reply << '\n';
        }
        return kOk;
      }
      Checkpoint ck = load_checkpoint(ff_ckpt, &vocab);
      std::ofstream log = open_metrics(ff_metrics.value_or(default_metrics_path(ff_out)));
      const bool changed = finetune_on_feedback(ck.model, vocab, fx.items, ff_train.config,
                                                [&](const EpochLog& e) { write_epoch(log, e); });
      ensure_parent(ff_out);
      save_checkpoint(ff_out, ck.model, vocab, ck.emotion_labels);
      std::cout << "checkpoint " << ff_out.string()
                << (changed ? " refit on " + std::to_string(fx.items.size()) + " edits"
                            : " unchanged (no edits)")
                << '\n';
      return kOk;
    }
  } catch (const DataError& e) {
    std::cerr << "empchat: data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "empchat: error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
