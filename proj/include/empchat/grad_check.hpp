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
#include <functional>
#include <string>
#include <vector>

#include "empchat/optim.hpp"

namespace empchat {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates drawn per parameter group; groups smaller than this are
  /// checked exhaustively.
  std::size_t samples_per_group = 64;
  std::uint64_t seed = 0;
};

struct GroupError {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::vector<GroupError> groups;
};

/// Loss closure over the parameters it was built with. When `backward` is
/// set it must also run reverse mode so that every parameter grad holds
/// d(loss)/d(param). It must be deterministic: re-seed any dropout RNG on
/// every call.
using LossFn = std::function<double(bool backward)>;

/// Compares analytic gradients against central differences
/// (f(w + h) - f(w - h)) / 2h. Relative error per coordinate is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
///
/// Throws std::logic_error if two evaluations at the same point disagree.
GradCheckReport grad_check(const LossFn& loss, const ParamList<double>& params,
                           const GradCheckOptions& options = {});

}  // namespace empchat
