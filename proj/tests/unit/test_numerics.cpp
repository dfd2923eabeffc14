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

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <vector>

#include "empchat/error.hpp"
#include "empchat/grad_check.hpp"
#include "empchat/graph.hpp"
#include "empchat/optim.hpp"

using namespace empchat;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (double& x : t.storage()) x = n(rng);
  return t;
}

// Straightforward triple loop, used as the reference for the blocked kernel.
std::vector<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  std::vector<double> c(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c[i * b.cols() + j] += a.at(i, k) * b.at(k, j);
  return c;
}

}  // namespace

TEST_CASE("tensor rejects zero extents and mismatched data") {
  CHECK_THROWS_AS(Tensor<float>(Shape{0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  CHECK(shape_string(Shape{2, 3}) == "[2x3]");
}

TEST_CASE("matmul matches the triple loop and names both shapes on mismatch") {
  std::mt19937_64 rng(1);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {3, 5, 7}, {9, 4, 6}, {17, 33, 5}}) {
    Graph<double> g;
    auto a = random_tensor({std::size_t(m), std::size_t(k)}, rng);
    auto b = random_tensor({std::size_t(k), std::size_t(n)}, rng);
    auto c = matmul(g.constant(a), g.constant(b));
    const auto ref = naive_matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(c.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    Graph<double> g2;
    auto bt = random_tensor({std::size_t(n), std::size_t(k)}, rng);
    auto c2 = matmul_nt(g2.constant(a), g2.constant(bt));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int q = 0; q < k; ++q) s += a.at(i, q) * bt.at(j, q);
        CHECK(c2.value().at(i, j) == doctest::Approx(s).epsilon(1e-12));
      }
  }
  Graph<float> g;
  auto a = g.constant(Tensor<float>(Shape{2, 3}));
  auto b = g.constant(Tensor<float>(Shape{4, 5}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("a matmul output row does not depend on how many rows were multiplied") {
  std::mt19937_64 rng(2);
  Tensor<float> b(Shape{64, 48});
  Tensor<float> a(Shape{11, 64});
  std::normal_distribution<float> n(0.f, 1.f);
  for (float& x : b.storage()) x = n(rng);
  for (float& x : a.storage()) x = n(rng);
  Graph<float> g;
  auto full = matmul(g.constant(a), g.constant(b));
  for (std::size_t rows = 1; rows <= a.rows(); ++rows) {
    std::vector<float> prefix(a.data().begin(), a.data().begin() + rows * 64);
    auto part = matmul(g.constant(Tensor<float>(Shape{rows, 64}, prefix)), g.constant(b));
    CHECK(std::memcmp(part.value().data().data(), full.value().data().data(),
                      rows * 48 * sizeof(float)) == 0);
  }
}

TEST_CASE("softmax rows sum to one and uniform logits give uniform output") {
  Graph<double> g;
  auto u = softmax(g.constant(Tensor<double>(Shape{2, 4}, 0.0)));
  for (double p : u.value().data()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  std::mt19937_64 rng(3);
  auto x = random_tensor({5, 7}, rng, 10.0);
  auto s = softmax(g.constant(x));
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 7; ++c) sum += s.value().at(r, c);
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("causal softmax zeroes the future exactly") {
  std::mt19937_64 rng(4);
  Graph<double> g;
  auto s = softmax(g.constant(random_tensor({4, 4}, rng)), /*causal=*/true);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = r + 1; c < 4; ++c) CHECK(s.value().at(r, c) == 0.0);
  CHECK(s.value().at(0, 0) == 1.0);
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  std::mt19937_64 rng(5);
  Graph<double> g;
  auto x = g.constant(random_tensor({3, 16}, rng, 4.0));
  auto y = layer_norm(x, g.constant(Tensor<double>(Shape{16}, 1.0)), g.constant(Tensor<double>(Shape{16}, 0.0)));
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 16; ++c) mean += y.value().at(r, c) / 16;
    for (std::size_t c = 0; c < 16; ++c) var += std::pow(y.value().at(r, c) - mean, 2) / 16;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
}

TEST_CASE("cross entropy closed forms") {
  Graph<double> g;
  const int t0[] = {0};
  auto two = cross_entropy(g.constant(Tensor<double>(Shape{1, 2}, 0.0)), std::span<const int>(t0));
  CHECK(two.value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const int t3[] = {3, 31, -100};
  auto logits = g.constant(Tensor<double>(Shape{3, 32}, 1.5));
  auto ce = cross_entropy(logits, std::span<const int>(t3));
  CHECK(ce.value().item() == doctest::Approx(std::log(32.0)).epsilon(1e-12));

  const int bad[] = {32};
  CHECK_THROWS_AS(cross_entropy(g.constant(Tensor<double>(Shape{1, 32})), std::span<const int>(bad)),
                  std::out_of_range);
  const int none[] = {-100};
  CHECK_THROWS_AS(cross_entropy(g.constant(Tensor<double>(Shape{1, 32})), std::span<const int>(none)),
                  std::invalid_argument);
}

TEST_CASE("gradient of uniform cross entropy is (1/K - onehot) / rows") {
  Tensor<double> w(Shape{2, 4}, 0.0);
  w.set_requires_grad(true);
  Graph<double> g;
  const int t[] = {1, 3};
  g.backward(cross_entropy(g.parameter(w), std::span<const int>(t)));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const double expected = (0.25 - (static_cast<int>(c) == t[r] ? 1.0 : 0.0)) / 2.0;
      CHECK(w.grad()[r * 4 + c] == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("d/dw sum(w*w) = 2w and gradients accumulate across backward calls") {
  Tensor<double> w(Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
  w.set_requires_grad(true);
  for (int pass = 1; pass <= 2; ++pass) {
    Graph<double> g;
    auto v = g.parameter(w);
    g.backward(sum(mul(v, v)));
    for (std::size_t i = 0; i < 3; ++i) CHECK(w.grad()[i] == doctest::Approx(2.0 * pass * w[i]));
  }
  Graph<double> g;
  CHECK_THROWS_AS(g.backward(g.parameter(w)), ShapeError);
}

TEST_CASE("dropout is the identity in eval mode and scales survivors in train mode") {
  Tensor<float> x(Shape{4, 50}, 1.0f);
  Graph<float> eval;
  auto y = dropout(eval.constant(x), 0.5f);
  for (float v : y.value().data()) CHECK(v == 1.0f);
  Graph<float> train(Mode::kTrain, 9);
  auto z = dropout(train.constant(x), 0.5f);
  std::size_t kept = 0;
  for (float v : z.value().data()) {
    CHECK((v == 0.0f || v == 2.0f));
    kept += v != 0.0f;
  }
  CHECK(kept > 60);
  CHECK(kept < 140);
}

TEST_CASE("slice, concat and select_row route values and gradients") {
  Tensor<double> a(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  a.set_requires_grad(true);
  Graph<double> g;
  auto av = g.parameter(a);
  auto s = slice_cols(av, 1, 2);
  CHECK(s.value().at(1, 0) == 5);
  const Var<double> parts[] = {s, av};
  auto c = concat_cols(std::span<const Var<double>>(parts));
  CHECK(c.cols() == 5);
  CHECK(c.value().at(0, 2) == 1);
  auto r = select_row(c, 1);
  CHECK(r.value().at(0, 4) == 6);
  g.backward(sum(r));
  const std::vector<double> expected{0, 0, 0, 1, 2, 2};
  for (std::size_t i = 0; i < 6; ++i) CHECK(a.grad()[i] == expected[i]);
}

TEST_CASE("single Adam step moves each weight by lr against the gradient sign") {
  Tensor<double> w(Shape{3}, std::vector<double>{0.5, 0.5, 0.5});
  w.set_requires_grad(true);
  w.grad()[0] = 2.0;
  w.grad()[1] = -0.01;
  w.grad()[2] = 0.0;
  ParamList<double> params{{"w", &w}};
  AdamState<double> state(params);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  adam_step(params, state, cfg);
  CHECK(w[0] == doctest::Approx(0.5 - 1e-3).epsilon(1e-9));
  CHECK(w[1] == doctest::Approx(0.5 + 1e-3).epsilon(1e-6));
  CHECK(w[2] == 0.5);
  CHECK(state.step == 1);
}

TEST_CASE("Adam rejects a non-finite gradient without touching any parameter") {
  Tensor<float> a(Shape{2}, 1.0f), b(Shape{2}, 1.0f);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  a.grad()[0] = 1.0f;
  b.grad()[1] = std::nanf("");
  ParamList<float> params{{"a", &a}, {"b", &b}};
  AdamState<float> state(params);
  try {
    adam_step(params, state, AdamConfig{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK(a[0] == 1.0f);
  CHECK(state.step == 0);
}

TEST_CASE("clip_grad_norm rescales to the bound and reports the old norm") {
  Tensor<double> w(Shape{2}, 0.0);
  w.set_requires_grad(true);
  w.grad()[0] = 3.0;
  w.grad()[1] = 4.0;
  ParamList<double> params{{"w", &w}};
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(grad_norm(params) == doctest::Approx(1.0));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1.0));
  CHECK(grad_norm(params) == doctest::Approx(1.0));
}

TEST_CASE("grad_check agrees with a small network built from every differentiable op") {
  std::mt19937_64 rng(6);
  Tensor<double> w1 = random_tensor({6, 8}, rng, 0.5);
  Tensor<double> b1 = random_tensor({8}, rng, 0.1);
  Tensor<double> gain = random_tensor({8}, rng, 0.1);
  for (double& x : gain.storage()) x += 1.0;
  Tensor<double> bias = random_tensor({8}, rng, 0.1);
  Tensor<double> w2 = random_tensor({8, 5}, rng, 0.5);
  Tensor<double> table = random_tensor({10, 6}, rng, 1.0);
  ParamList<double> params{{"w1", &w1}, {"b1", &b1}, {"gain", &gain},
                           {"bias", &bias}, {"w2", &w2}, {"table", &table}};
  for (auto& p : params) p.tensor->set_requires_grad(true);
  const int ids[] = {3, 1, 4, 1};
  const int targets[] = {2, 0, -100, 4};
  LossFn loss = [&](bool do_backward) {
    Graph<double> g(Mode::kTrain, 42);
    auto x = embedding(g.parameter(table), std::span<const int>(ids));
    auto h = gelu(add_bias(matmul(x, g.parameter(w1)), g.parameter(b1)));
    h = layer_norm(h, g.parameter(gain), g.parameter(bias));
    auto att = softmax(matmul_nt(h, h), true);
    h = add(matmul(att, h), scale(h, 0.5));
    h = dropout(h, 0.2);
    auto logits = matmul(h, g.parameter(w2));
    auto l = cross_entropy(logits, std::span<const int>(targets));
    if (do_backward) g.backward(l);
    return l.value().item();
  };
  GradCheckReport report = grad_check(loss, params);
  CHECK(report.groups.size() == params.size());
  CHECK(report.coordinates > 100);
  CHECK(report.max_relative_error < 1e-6);
}
