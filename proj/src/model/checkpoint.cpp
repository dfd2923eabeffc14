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

#include "empchat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "empchat/error.hpp"

namespace empchat {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'E', 'M', 'P', 'C', 'H', 'A', 'T', '\x01'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& bytes, std::size_t count) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < count; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 1099511628211ull;
  }
  return h;
}

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"d_model", c.d_model},       {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size}, {"n_positions", c.n_positions},
          {"n_states", c.n_states},     {"n_emotions", c.n_emotions},
          {"dropout", c.dropout},       {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.n_positions = j.at("n_positions").get<std::size_t>();
  c.n_states = j.at("n_states").get<std::size_t>();
  c.n_emotions = j.at("n_emotions").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

[[noreturn]] void fail_at(const std::filesystem::path& path, const std::string& why) {
  throw DataError("checkpoint " + path.string() + ": " + why);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model<float>& model, const Vocab& vocab,
                     const std::vector<std::string>& emotion_labels) {
  if (model.config.vocab_size != vocab.size()) {
    throw DataError("checkpoint: model vocab size " + std::to_string(model.config.vocab_size) +
                    " differs from vocab size " + std::to_string(vocab.size()));
  }
  ParamList<float> params = model.parameters();
  nlohmann::json header;
  header["config"] = config_to_json(model.config);
  header["vocab_fingerprint"] = hex64(vocab.fingerprint());
  header["emotion_labels"] = emotion_labels;
  nlohmann::json tensors = nlohmann::json::array();
  for (const NamedParam<float>& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor->shape()}});
  }
  header["tensors"] = tensors;
  const std::string header_text = header.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  put(bytes, kVersion);
  put(bytes, static_cast<std::uint64_t>(header_text.size()));
  bytes += header_text;
  for (const NamedParam<float>& p : params) {
    std::span<const float> data = p.tensor->data();
    bytes.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());
  }
  put(bytes, fnv1a(bytes, bytes.size()));

  // Write-then-rename so a crash never leaves a half-written checkpoint.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocab* expected_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { fail_at(path, why); };

  constexpr std::size_t kFixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < kFixed + sizeof(std::uint64_t)) fail("file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) fail("bad magic");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kVersion) fail("unsupported version " + std::to_string(version));
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + sizeof(kMagic) + sizeof(version), sizeof(header_len));
  if (header_len > bytes.size() - kFixed - sizeof(std::uint64_t)) fail("truncated header");

  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - sizeof(stored_sum), sizeof(stored_sum));
  const std::size_t body_end = bytes.size() - sizeof(stored_sum);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kFixed, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.model.config = config_from_json(header.at("config"));
    ckpt.model.config.validate();
    ckpt.vocab_fingerprint = std::stoull(header.at("vocab_fingerprint").get<std::string>(), nullptr, 16);
    ckpt.emotion_labels = header.at("emotion_labels").get<std::vector<std::string>>();
  } catch (const std::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }

  // Build shapes from the config, then check them against the header.
  ckpt.model = Model<float>::init(ckpt.model.config);
  ParamList<float> params = ckpt.model.parameters();
  const nlohmann::json& tensors = header.at("tensors");
  if (!tensors.is_array() || tensors.size() != params.size()) fail("tensor table does not match config");
  std::size_t offset = kFixed + header_len;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<Shape>();
    if (name != params[i].name || shape != params[i].tensor->shape()) {
      fail("tensor " + std::to_string(i) + " is " + name + " " + shape_string(shape) +
           ", expected " + params[i].name + " " + shape_string(params[i].tensor->shape()));
    }
    const std::size_t n_bytes = params[i].tensor->numel() * sizeof(float);
    if (offset + n_bytes > body_end) fail("truncated tensor data at " + name);
    std::memcpy(params[i].tensor->data().data(), bytes.data() + offset, n_bytes);
    offset += n_bytes;
  }
  if (offset != body_end) fail("trailing bytes after tensor data");
  if (fnv1a(bytes, body_end) != stored_sum) fail("checksum mismatch");

  if (expected_vocab != nullptr && expected_vocab->fingerprint() != ckpt.vocab_fingerprint) {
    fail("vocab fingerprint " + hex64(expected_vocab->fingerprint()) +
         " does not match the checkpoint's " + hex64(ckpt.vocab_fingerprint));
  }
  if (expected_vocab != nullptr && expected_vocab->size() != ckpt.model.config.vocab_size) {
    fail("vocab size mismatch");
  }
  return ckpt;
}

}  // namespace empchat
