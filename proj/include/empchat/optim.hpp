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
#include <string>
#include <vector>

#include "empchat/tensor.hpp"

namespace empchat {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

struct AdamConfig {
  double lr = 6.25e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators, one pair per parameter.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;

  explicit AdamState(const ParamList<T>& params = {});
};

/// One bias-corrected Adam update over every parameter. All gradients are
/// checked before any parameter is touched; a non-finite gradient throws
/// NumericError naming the parameter and leaves params and state unchanged.
template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state, const AdamConfig& config);

/// Global L2 norm of all gradients.
template <typename T>
double grad_norm(const ParamList<T>& params);

/// Rescales gradients so the global norm is at most `max_norm`. Returns the
/// norm measured before clipping.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm);

template <typename T>
void zero_grad(const ParamList<T>& params);

}  // namespace empchat
