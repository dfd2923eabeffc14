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

#include "empchat/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace empchat {

GradCheckReport grad_check(const LossFn& loss, const ParamList<double>& params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0)) throw std::invalid_argument("grad_check: step must be positive");
  for (const NamedParam<double>& p : params) {
    p.tensor->set_requires_grad(true);
    p.tensor->zero_grad();
  }
  const double base = loss(true);
  const double again = loss(false);
  if (base != again) {
    throw std::logic_error("grad_check: loss is not deterministic (" + std::to_string(base) +
                           " vs " + std::to_string(again) + ")");
  }

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const NamedParam<double>& p : params) {
    analytic.emplace_back(p.tensor->grad().begin(), p.tensor->grad().end());
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t g = 0; g < params.size(); ++g) {
    Tensor<double>& tensor = *params[g].tensor;
    const std::size_t n = tensor.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > options.samples_per_group) {
      // Partial Fisher-Yates: the first k entries are a uniform sample.
      for (std::size_t i = 0; i < options.samples_per_group; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(coords[i], coords[pick(rng)]);
      }
      coords.resize(options.samples_per_group);
    }

    GroupError group{params[g].name, coords.size(), 0.0};
    for (std::size_t c : coords) {
      const double original = tensor[c];
      tensor[c] = original + options.step;
      const double plus = loss(false);
      tensor[c] = original - options.step;
      const double minus = loss(false);
      tensor[c] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[g][c];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      group.max_relative_error = std::max(group.max_relative_error, std::abs(a - numeric) / denom);
    }
    report.max_relative_error = std::max(report.max_relative_error, group.max_relative_error);
    report.coordinates += group.coordinates;
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace empchat
