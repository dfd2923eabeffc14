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

// Checkpoint file layout (all integers little-endian):
//
//   8 bytes   magic "EMPCHAT\x01"
//   u32       format version (1)
//   u64       header length H
//   H bytes   JSON header: config, vocab fingerprint, emotion labels and the
//             ordered list of {name, shape} tensors
//   ...       each tensor's values as float32, row-major, in header order
//   u64       FNV-1a 64 checksum of every preceding byte

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "empchat/model.hpp"
#include "empchat/tokenizer.hpp"

namespace empchat {

struct Checkpoint {
  Model<float> model;
  std::uint64_t vocab_fingerprint = 0;
  std::vector<std::string> emotion_labels;
};

void save_checkpoint(const std::filesystem::path& path, Model<float>& model, const Vocab& vocab,
                     const std::vector<std::string>& emotion_labels);

/// Throws DataError on a truncated or corrupt file, or when `expected_vocab`
/// is given and its fingerprint differs from the one recorded at save time.
/// Nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const Vocab* expected_vocab = nullptr);

}  // namespace empchat
