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


#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "empchat/checkpoint.hpp"
#include "empchat/corpus.hpp"
#include "empchat/error.hpp"
#include "empchat/generator.hpp"
#include "empchat/metrics.hpp"
#include "empchat/server/feedback.hpp"
#include "empchat/server/worker_pool.hpp"
#include "empchat/trainer.hpp"

namespace py = pybind11;
using namespace empchat;

namespace {

// Owns a float model together with the emotion label table it was trained on.
struct PyModel {
  Model<float> model;
  std::vector<std::string> emotion_labels;
};

py::dict epoch_dict(const EpochLog& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["steps"] = e.steps;
  d["l_lm"] = e.mean.lm;
  d["l_sel"] = e.mean.selection;
  d["l_emo"] = e.mean.emotion;
  d["l_total"] = e.mean.total;
  d["valid_ppl"] = e.valid_ppl;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["ppl"] = r.ppl;
  d["avg_bleu"] = r.avg_bleu;
  d["emo_acc"] = r.emo_acc;
  d["examples"] = r.examples;
  d["tokens"] = r.tokens;
  return d;
}

}  // namespace

PYBIND11_MODULE(_empchat, m) {
  m.doc() = "Empathetic persona chatbot core";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def("normalize_text", &normalize_text, py::arg("text"));
  m.def("split_words", &split_words, py::arg("text"));

  py::class_<Vocab>(m, "Vocab")
      .def_static(
          "build",
          [](const std::vector<std::string>& texts, std::size_t min_freq, std::size_t max_size) {
            return Vocab::build(texts, min_freq, max_size);
          },
          py::arg("texts"), py::arg("min_freq") = 1, py::arg("max_size") = 20000)
      .def_static("load", &Vocab::load, py::arg("path"))
      .def("save", &Vocab::save, py::arg("path"))
      .def("encode", &Vocab::encode, py::arg("text"))
      .def(
          "decode",
          [](const Vocab& v, const std::vector<int>& ids, bool skip_special) {
            return v.decode(ids, skip_special);
          },
          py::arg("ids"), py::arg("skip_special") = false)
      .def("id", &Vocab::id)
      .def("token", &Vocab::token)
      .def("__len__", &Vocab::size)
      .def("__contains__", &Vocab::contains)
      .def_property_readonly("fingerprint", &Vocab::fingerprint)
      .def_property_readonly("tokens", &Vocab::tokens);

  py::enum_<Role>(m, "Role").value("USER", Role::kUser).value("BOT", Role::kBot);

  py::class_<Turn>(m, "Turn")
      .def(py::init([](Role role, std::string text) { return Turn{role, std::move(text)}; }),
           py::arg("role"), py::arg("text"))
      .def_readwrite("role", &Turn::role)
      .def_readwrite("text", &Turn::text)
      .def("__repr__", [](const Turn& t) {
        return std::string(t.role == Role::kUser ? "Turn(USER, " : "Turn(BOT, ") +
               py::repr(py::str(t.text)).cast<std::string>() + ")";
      });

  py::class_<DialogueExample>(m, "DialogueExample")
      .def(py::init<>())
      .def_readwrite("conv_id", &DialogueExample::conv_id)
      .def_readwrite("persona", &DialogueExample::persona)
      .def_readwrite("history", &DialogueExample::history)
      .def_readwrite("gold_reply", &DialogueExample::gold_reply)
      .def_readwrite("emotion", &DialogueExample::emotion);

  m.attr("NO_EMOTION") = kNoEmotion;
  m.def("default_persona", &default_persona);

  m.def(
      "load_examples",
      [](const std::filesystem::path& path, std::size_t history_window) {
        EmpatheticCorpus c = load_empathetic_csv(path);
        auto ex = make_examples(c.records, c.labels, history_window, default_persona());
        return py::make_tuple(ex, c.labels.labels());
      },
      py::arg("path"), py::arg("history_window") = 3,
      "Examples and sorted label table from an empathetic csv file.");
  m.def("load_persona_examples", &load_persona_pretraining, py::arg("path"),
        py::arg("history_window") = 3);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("n_layers", &ModelConfig::n_layers)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("d_ff", &ModelConfig::d_ff)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("n_positions", &ModelConfig::n_positions)
      .def_readwrite("n_emotions", &ModelConfig::n_emotions)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_readwrite("seed", &ModelConfig::seed)
      .def("validate", &ModelConfig::validate);

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const ModelConfig& c, std::vector<std::string> labels) {
             if (labels.empty())
               for (std::size_t i = 0; i < c.n_emotions; ++i)
                 labels.push_back("emotion_" + std::to_string(i));
             if (labels.size() != c.n_emotions)
               throw std::invalid_argument("label count differs from n_emotions");
             return PyModel{Model<float>::init(c), std::move(labels)};
           }),
           py::arg("config"), py::arg("emotion_labels") = std::vector<std::string>{})
      .def_static(
          "load",
          [](const std::filesystem::path& path, const Vocab* vocab) {
            Checkpoint ck = load_checkpoint(path, vocab);
            return PyModel{std::move(ck.model), std::move(ck.emotion_labels)};
          },
          py::arg("path"), py::arg("vocab") = nullptr)
      .def(
          "save",
          [](PyModel& self, const std::filesystem::path& path, const Vocab& vocab) {
            save_checkpoint(path, self.model, vocab, self.emotion_labels);
          },
          py::arg("path"), py::arg("vocab"))
      .def_property_readonly("config", [](const PyModel& self) { return self.model.config; })
      .def_readonly("emotion_labels", &PyModel::emotion_labels)
      .def_property_readonly("parameter_count", [](PyModel& self) {
        std::size_t n = 0;
        for (auto& p : self.model.parameters()) n += p.tensor->numel();
        return n;
      });

  py::enum_<Strategy>(m, "Strategy")
      .value("GREEDY", Strategy::kGreedy)
      .value("TOP_K", Strategy::kTopK)
      .value("NUCLEUS", Strategy::kNucleus);

  py::class_<DecodeParams>(m, "DecodeParams")
      .def(py::init<>())
      .def_static("greedy", &DecodeParams::greedy, py::arg("max_new_tokens") = 40)
      .def_readwrite("strategy", &DecodeParams::strategy)
      .def_readwrite("k", &DecodeParams::k)
      .def_readwrite("p", &DecodeParams::p)
      .def_readwrite("temperature", &DecodeParams::temperature)
      .def_readwrite("max_new_tokens", &DecodeParams::max_new_tokens)
      .def_readwrite("seed", &DecodeParams::seed)
      .def("validate", &DecodeParams::validate);

  m.def(
      "generate",
      [](const PyModel& self, const Vocab& vocab, const std::vector<std::string>& persona,
         const std::vector<Turn>& history, const DecodeParams& params) {
        py::gil_scoped_release release;
        return generate(self.model, vocab, persona, history, params);
      },
      py::arg("model"), py::arg("vocab"), py::arg("persona"), py::arg("history"),
      py::arg("params") = DecodeParams::greedy());
  m.def(
      "classify_emotion",
      [](const PyModel& self, const Vocab& vocab, const std::vector<std::string>& persona,
         const std::vector<Turn>& history) {
        EmotionPrediction p;
        {
          py::gil_scoped_release release;
          p = classify_emotion(self.model, vocab, persona, history);
        }
        return py::make_tuple(self.emotion_labels.at(p.label), p.probabilities);
      },
      py::arg("model"), py::arg("vocab"), py::arg("persona"), py::arg("history"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("max_steps", &TrainConfig::max_steps)
      .def_readwrite("grad_clip_norm", &TrainConfig::grad_clip_norm)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_property(
          "lm", [](const TrainConfig& c) { return c.objectives.lm; },
          [](TrainConfig& c, bool v) { c.objectives.lm = v; })
      .def_property(
          "selection", [](const TrainConfig& c) { return c.objectives.selection; },
          [](TrainConfig& c, bool v) { c.objectives.selection = v; })
      .def_property(
          "emotion", [](const TrainConfig& c) { return c.objectives.emotion; },
          [](TrainConfig& c, bool v) { c.objectives.emotion = v; })
      .def("validate", &TrainConfig::validate);

  m.def(
      "total_loss",
      [](std::optional<double> lm, std::optional<double> sel, std::optional<double> emo,
         double alpha) { return total_loss(StepLosses{lm, sel, emo, 0.0}, alpha); },
      py::arg("lm"), py::arg("selection"), py::arg("emotion"), py::arg("alpha"));

  m.def(
      "train",
      [](PyModel& self, const Vocab& vocab, const std::vector<DialogueExample>& examples,
         const TrainConfig& config, const std::vector<DialogueExample>& valid) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(self.model, vocab, examples, config, valid);
        }
        py::list epochs;
        for (const EpochLog& e : r.epochs) epochs.append(epoch_dict(e));
        return epochs;
      },
      py::arg("model"), py::arg("vocab"), py::arg("examples"), py::arg("config"),
      py::arg("valid") = std::vector<DialogueExample>{},
      "Trains in place and returns one dict per epoch.");
  m.def(
      "finetune_on_feedback",
      [](PyModel& self, const Vocab& vocab, const std::vector<DialogueExample>& items,
         const TrainConfig& config) {
        py::gil_scoped_release release;
        return finetune_on_feedback(self.model, vocab, items, config);
      },
      py::arg("model"), py::arg("vocab"), py::arg("items"), py::arg("config"));

  m.def(
      "bleu",
      [](const std::string& candidate, const std::string& reference, std::size_t max_order) {
        return bleu(candidate, reference, max_order);
      },
      py::arg("candidate"), py::arg("reference"), py::arg("max_order") = 4);
  m.def(
      "avg_bleu",
      [](const std::vector<std::pair<std::string, std::string>>& pairs) { return avg_bleu(pairs); },
      py::arg("pairs"), "Mean of cumulative BLEU-1..4 over (candidate, reference) pairs.");
  m.def(
      "emotion_accuracy",
      [](const std::vector<int>& predictions, const std::vector<int>& golds) {
        return emotion_accuracy(predictions, golds);
      },
      py::arg("predictions"), py::arg("golds"));
  m.def(
      "perplexity",
      [](const PyModel& self, const Vocab& vocab, const std::vector<DialogueExample>& examples) {
        py::gil_scoped_release release;
        return perplexity(self.model, vocab, examples).perplexity();
      },
      py::arg("model"), py::arg("vocab"), py::arg("examples"));
  m.def(
      "evaluate",
      [](const PyModel& self, const Vocab& vocab, const std::vector<DialogueExample>& examples,
         const DecodeParams& params) {
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = evaluate(self.model, vocab, examples, params);
        }
        return report_dict(r);
      },
      py::arg("model"), py::arg("vocab"), py::arg("examples"),
      py::arg("params") = DecodeParams::greedy());

  m.def(
      "export_feedback",
      [](const std::filesystem::path& path, std::optional<std::string> since,
         std::size_t history_window) {
        FeedbackExport fx = export_feedback(path, since, history_window);
        py::dict d;
        d["items"] = fx.items;
        d["edits"] = fx.edits;
        d["reports"] = fx.reports;
        d["warnings"] = fx.warnings;
        return d;
      },
      py::arg("path"), py::arg("since") = py::none(), py::arg("history_window") = 3);

  m.def(
      "pick_idle_worker",
      [](const std::vector<std::tuple<std::size_t, bool>>& loads) {
        std::vector<WorkerLoad> w;
        for (std::size_t i = 0; i < loads.size(); ++i)
          w.push_back({i, std::get<0>(loads[i]), std::get<1>(loads[i])});
        return pick_idle_worker(w);
      },
      py::arg("loads"),
      "Dispatch rule over (completed, busy) pairs indexed by worker id; None if all busy.");
}
