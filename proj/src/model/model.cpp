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

#include "empchat/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace empchat {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("model config: " + why); };
  if (n_layers == 0) fail("n_layers must be >= 1");
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    fail("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
         std::to_string(n_heads) + ")");
  }
  if (d_ff == 0) fail("d_ff must be >= 1");
  if (vocab_size <= static_cast<std::size_t>(kFirstWordId)) fail("vocab_size must exceed the reserved specials");
  if (n_positions < 4) fail("n_positions must be >= 4");
  if (n_states != static_cast<std::size_t>(kDialogueStates)) fail("n_states must be 3");
  if (n_emotions == 0) fail("n_emotions must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.n_layers == b.n_layers && a.n_heads == b.n_heads && a.d_model == b.d_model &&
         a.d_ff == b.d_ff && a.vocab_size == b.vocab_size && a.n_positions == b.n_positions &&
         a.n_states == b.n_states && a.n_emotions == b.n_emotions && a.dropout == b.dropout &&
         a.seed == b.seed;
}

template <typename T>
Model<T> Model<T>::init(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto weight = [&](Shape shape) {
    Tensor<T> t(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(normal(rng));
    return t;
  };
  auto zeros = [](std::size_t n) { return Tensor<T>(Shape{n}, T{0}); };
  auto ones = [](std::size_t n) { return Tensor<T>(Shape{n}, T{1}); };

  Model m;
  m.config = config;
  m.word_embedding = weight({config.vocab_size, d});
  m.position_embedding = weight({config.n_positions, d});
  m.state_embedding = weight({config.n_states, d});
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    DecoderBlock<T> b;
    b.ln1_gain = ones(d);
    b.ln1_bias = zeros(d);
    b.attn_weight = weight({d, 3 * d});
    b.attn_bias = zeros(3 * d);
    b.proj_weight = weight({d, d});
    b.proj_bias = zeros(d);
    b.ln2_gain = ones(d);
    b.ln2_bias = zeros(d);
    b.fc_weight = weight({d, config.d_ff});
    b.fc_bias = zeros(config.d_ff);
    b.out_weight = weight({config.d_ff, d});
    b.out_bias = zeros(d);
    m.blocks.push_back(std::move(b));
  }
  m.final_gain = ones(d);
  m.final_bias = zeros(d);
  m.selection_weight = weight({d, 1});
  m.selection_bias = zeros(1);
  m.emotion_weight = weight({d, config.n_emotions});
  m.emotion_bias = zeros(config.n_emotions);
  return m;
}

template <typename T>
ParamList<T> Model<T>::parameters() {
  ParamList<T> out;
  out.push_back({"wte", &word_embedding});
  out.push_back({"wpe", &position_embedding});
  out.push_back({"wse", &state_embedding});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    DecoderBlock<T>& b = blocks[l];
    const std::string p = "h" + std::to_string(l) + ".";
    out.push_back({p + "ln1.g", &b.ln1_gain});
    out.push_back({p + "ln1.b", &b.ln1_bias});
    out.push_back({p + "attn.w", &b.attn_weight});
    out.push_back({p + "attn.b", &b.attn_bias});
    out.push_back({p + "proj.w", &b.proj_weight});
    out.push_back({p + "proj.b", &b.proj_bias});
    out.push_back({p + "ln2.g", &b.ln2_gain});
    out.push_back({p + "ln2.b", &b.ln2_bias});
    out.push_back({p + "fc.w", &b.fc_weight});
    out.push_back({p + "fc.b", &b.fc_bias});
    out.push_back({p + "out.w", &b.out_weight});
    out.push_back({p + "out.b", &b.out_bias});
  }
  out.push_back({"ln_f.g", &final_gain});
  out.push_back({"ln_f.b", &final_bias});
  out.push_back({"sel.w", &selection_weight});
  out.push_back({"sel.b", &selection_bias});
  out.push_back({"emo.w", &emotion_weight});
  out.push_back({"emo.b", &emotion_bias});
  return out;
}

template <typename T>
void Model<T>::set_requires_grad(bool on) {
  for (NamedParam<T>& p : parameters()) p.tensor->set_requires_grad(on);
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.config = config;
  auto& self = const_cast<Model<T>&>(*this);
  ParamList<T> src = self.parameters();
  // Shape the destination like the source, then copy values over.
  out.blocks.resize(blocks.size());
  ParamList<U> dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<U>();
  return out;
}

namespace {

template <typename T>
Var<T> bind(Graph<T>& g, Tensor<T>& t) {
  return g.parameter(t);
}

template <typename T>
Var<T> bind(Graph<T>& g, const Tensor<T>& t) {
  return g.constant_ref(t);
}

template <typename T, typename M>
ForwardResult<T> forward_impl(Graph<T>& g, M& model, const InputEncoding& input,
                              const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  const std::size_t len = input.size();
  if (len == 0) throw std::invalid_argument("forward: empty input");
  if (len > cfg.n_positions) {
    throw DataError("forward: input length " + std::to_string(len) + " exceeds n_positions " +
                    std::to_string(cfg.n_positions));
  }
  if (input.positions.size() != len || input.states.size() != len) {
    throw ShapeError("forward: token/position/state sequences differ in length");
  }
  if (input.sen_index >= len || input.emo_index >= len) {
    throw std::invalid_argument("forward: readout index outside the input");
  }
  const T p_drop = static_cast<T>(cfg.dropout);
  const std::size_t d = cfg.d_model;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = d / heads;
  const T attn_scale = T{1} / std::sqrt(static_cast<T>(dh));

  Var<T> wte = bind(g, model.word_embedding);
  Var<T> x = add(add(embedding(wte, std::span<const int>(input.tokens)),
                     embedding(bind(g, model.position_embedding), std::span<const int>(input.positions))),
                 embedding(bind(g, model.state_embedding), std::span<const int>(input.states)));
  x = dropout(x, p_drop);

  for (auto& block : model.blocks) {
    Var<T> a = layer_norm(x, bind(g, block.ln1_gain), bind(g, block.ln1_bias));
    Var<T> qkv = add_bias(matmul(a, bind(g, block.attn_weight)), bind(g, block.attn_bias));
    std::vector<Var<T>> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Var<T> q = slice_cols(qkv, h * dh, dh);
      Var<T> k = slice_cols(qkv, d + h * dh, dh);
      Var<T> v = slice_cols(qkv, 2 * d + h * dh, dh);
      Var<T> probs = softmax(scale(matmul_nt(q, k), attn_scale), /*causal=*/true);
      head_out.push_back(matmul(dropout(probs, p_drop), v));
    }
    Var<T> attn = concat_cols(std::span<const Var<T>>(head_out));
    attn = add_bias(matmul(attn, bind(g, block.proj_weight)), bind(g, block.proj_bias));
    x = add(x, dropout(attn, p_drop));

    Var<T> m = layer_norm(x, bind(g, block.ln2_gain), bind(g, block.ln2_bias));
    Var<T> f = gelu(add_bias(matmul(m, bind(g, block.fc_weight)), bind(g, block.fc_bias)));
    f = add_bias(matmul(f, bind(g, block.out_weight)), bind(g, block.out_bias));
    x = add(x, dropout(f, p_drop));
  }
  Var<T> hidden = layer_norm(x, bind(g, model.final_gain), bind(g, model.final_bias));

  ForwardResult<T> out;
  if (options.lm_logits) {
    Var<T> rows = options.lm_last_only ? select_row(hidden, len - 1) : hidden;
    out.lm_logits = matmul_nt(rows, wte);
  }
  out.selection_score =
      add_bias(matmul(select_row(hidden, input.sen_index), bind(g, model.selection_weight)),
               bind(g, model.selection_bias));
  out.emotion_logits =
      add_bias(matmul(select_row(hidden, input.emo_index), bind(g, model.emotion_weight)),
               bind(g, model.emotion_bias));
  return out;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(Graph<T>& graph, Model<T>& model, const InputEncoding& input,
                         const ForwardOptions& options) {
  return forward_impl<T>(graph, model, input, options);
}

template <typename T>
ForwardResult<T> forward(Graph<T>& graph, const Model<T>& model, const InputEncoding& input,
                         const ForwardOptions& options) {
  return forward_impl<T>(graph, model, input, options);
}

template struct Model<float>;
template struct Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template ForwardResult<float> forward(Graph<float>&, Model<float>&, const InputEncoding&,
                                      const ForwardOptions&);
template ForwardResult<float> forward(Graph<float>&, const Model<float>&, const InputEncoding&,
                                      const ForwardOptions&);
template ForwardResult<double> forward(Graph<double>&, Model<double>&, const InputEncoding&,
                                       const ForwardOptions&);
template ForwardResult<double> forward(Graph<double>&, const Model<double>&, const InputEncoding&,
                                       const ForwardOptions&);

}  // namespace empchat
