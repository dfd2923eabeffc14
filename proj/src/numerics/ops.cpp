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

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "empchat/graph.hpp"
#include "numerics/kernels.hpp"

namespace empchat {
namespace {

template <typename T>
[[noreturn]] void shape_mismatch(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                   shape_string(b.shape()));
}

template <typename T>
void same_graph(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw std::invalid_argument("operands belong to different graphs");
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_graph(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.rows() || bv.rank() != 2) shape_mismatch("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nn(m, n, k, av.data().data(), bv.data().data(), out.data().data(), false);
  return a.graph->push(std::move(out), {a.id, b.id}, [a, b, m, n, k](Graph<T>& g, int self) {
    std::span<T> dc = g.grad(self);
    if (g.needs_grad(a.id)) {
      // dA += dC . B^T
      kernels::gemm_nt(m, k, n, dc.data(), g.value(b.id).data().data(), g.grad(a.id).data(),
                       true);
    }
    if (g.needs_grad(b.id)) {
      // dB += A^T . dC
      kernels::gemm_tn_acc(k, n, m, g.value(a.id).data().data(), dc.data(),
                           g.grad(b.id).data());
    }
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  same_graph(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.cols()) shape_mismatch("matmul_nt", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nt(m, n, k, av.data().data(), bv.data().data(), out.data().data(), false);
  return a.graph->push(std::move(out), {a.id, b.id}, [a, b, m, n, k](Graph<T>& g, int self) {
    std::span<T> dc = g.grad(self);
    if (g.needs_grad(a.id)) {
      // dA += dC . B
      kernels::gemm_nn(m, k, n, dc.data(), g.value(b.id).data().data(), g.grad(a.id).data(),
                       true);
    }
    if (g.needs_grad(b.id)) {
      // dB += dC^T . A
      kernels::gemm_tn_acc(n, k, m, dc.data(), g.value(a.id).data().data(),
                           g.grad(b.id).data());
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_graph(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("add", av, bv);
  Tensor<T> out(av.shape(), std::vector<T>(av.data().begin(), av.data().end()));
  auto od = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  return a.graph->push(std::move(out), {a.id, b.id}, [a, b](Graph<T>& g, int self) {
    std::span<T> dc = g.grad(self);
    for (int id : {a.id, b.id}) {
      if (!g.needs_grad(id)) continue;
      std::span<T> d = g.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i];
    }
  });
}

template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  same_graph(a, bias);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = bias.value();
  if (bv.numel() != av.cols()) shape_mismatch("add_bias", av, bv);
  const std::size_t m = av.rows(), n = av.cols();
  Tensor<T> out(av.shape());
  auto od = out.data();
  auto ad = av.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) od[i * n + j] = ad[i * n + j] + bd[j];
  }
  return a.graph->push(std::move(out), {a.id, bias.id}, [a, bias, m, n](Graph<T>& g, int self) {
    std::span<T> dc = g.grad(self);
    if (g.needs_grad(a.id)) {
      std::span<T> d = g.grad(a.id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i];
    }
    if (g.needs_grad(bias.id)) {
      std::span<T> d = g.grad(bias.id);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[j] += dc[i * n + j];
      }
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  same_graph(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("mul", av, bv);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return a.graph->push(std::move(out), {a.id, b.id}, [a, b](Graph<T>& g, int self) {
    std::span<T> dc = g.grad(self);
    const Tensor<T>& av = g.value(a.id);
    const Tensor<T>& bv = g.value(b.id);
    if (g.needs_grad(a.id)) {
      std::span<T> d = g.grad(a.id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i] * bv[i];
    }
    if (g.needs_grad(b.id)) {
      std::span<T> d = g.grad(b.id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * factor;
  return a.graph->push(std::move(out), {a.id}, [a, factor](Graph<T>& g, int self) {
    std::span<T> dc = g.grad(self);
    std::span<T> d = g.grad(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i] * factor;
  });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const int> ids) {
  const Tensor<T>& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_string(tv.shape()));
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  const std::size_t vocab = tv.rows(), d = tv.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(id) + " out of range for table " +
                       shape_string(tv.shape()));
    }
  }
  Tensor<T> out(Shape{ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<int> rows(ids.begin(), ids.end());
  return table.graph->push(std::move(out), {table.id},
                           [table, rows = std::move(rows), d](Graph<T>& g, int self) {
                             std::span<T> dc = g.grad(self);
                             std::span<T> dt = g.grad(table.id);
                             for (std::size_t r = 0; r < rows.size(); ++r) {
                               T* dst = dt.data() + static_cast<std::size_t>(rows[r]) * d;
                               const T* src = dc.data() + r * d;
                               for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                             }
                           });
}

template <typename T>
Var<T> softmax(Var<T> a, bool causal) {
  const Tensor<T>& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (causal && m > n) throw ShapeError("softmax: causal mask needs cols >= rows, got " + shape_string(av.shape()));
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? i + 1 : n;
    const T* x = av.data().data() + i * n;
    T* y = out.data().data() + i * n;
    T mx = x[0];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, x[j]);
    T total{};
    for (std::size_t j = 0; j < width; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < width; ++j) y[j] *= inv;
    for (std::size_t j = width; j < n; ++j) y[j] = T{};
  }
  return a.graph->push(std::move(out), {a.id}, [a, m, n](Graph<T>& g, int self) {
    std::span<T> dy = g.grad(self);
    const T* y = g.value(self).data().data();
    std::span<T> dx = g.grad(a.id);
    for (std::size_t i = 0; i < m; ++i) {
      T dot{};
      for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  same_graph(x, gain);
  same_graph(x, bias);
  const Tensor<T>& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().numel() != n) shape_mismatch("layer_norm", xv, gain.value());
  if (bias.value().numel() != n) shape_mismatch("layer_norm", xv, bias.value());
  Tensor<T> out(xv.shape());
  // Per-row normalized input and inverse std, kept for backward.
  auto xhat = std::make_shared<std::vector<T>>(m * n);
  auto rstd = std::make_shared<std::vector<T>>(m);
  const T* gv = gain.value().data().data();
  const T* bv = bias.value().data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data().data() + i * n;
    T mean{};
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<T>(n);
    T var{};
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(n);
    const T r = T{1} / std::sqrt(var + eps);
    (*rstd)[i] = r;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mean) * r;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  return x.graph->push(
      std::move(out), {x.id, gain.id, bias.id},
      [x, gain, bias, m, n, xhat, rstd](Graph<T>& g, int self) {
        std::span<T> dy = g.grad(self);
        const T* gv = g.value(gain.id).data().data();
        if (g.needs_grad(gain.id)) {
          std::span<T> dg = g.grad(gain.id);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dg[j] += dy[i * n + j] * (*xhat)[i * n + j];
        }
        if (g.needs_grad(bias.id)) {
          std::span<T> db = g.grad(bias.id);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
        }
        if (g.needs_grad(x.id)) {
          std::span<T> dx = g.grad(x.id);
          for (std::size_t i = 0; i < m; ++i) {
            T mean_dh{}, mean_dh_h{};
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = dy[i * n + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * (*xhat)[i * n + j];
            }
            mean_dh /= static_cast<T>(n);
            mean_dh_h /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = dy[i * n + j] * gv[j];
              dx[i * n + j] += (*rstd)[i] * (dh - mean_dh - (*xhat)[i * n + j] * mean_dh_h);
            }
          }
        }
      });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
  const T k = static_cast<T>(0.044715);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T{1} + std::tanh(c * (v + k * v * v * v)));
  }
  return x.graph->push(std::move(out), {x.id}, [x, c, k](Graph<T>& g, int self) {
    std::span<T> dy = g.grad(self);
    const Tensor<T>& xv = g.value(x.id);
    std::span<T> dx = g.grad(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T v = xv[i];
      const T t = std::tanh(c * (v + k * v * v * v));
      const T dt = (T{1} - t * t) * c * (T{1} + T{3} * k * v * v);
      dx[i] += dy[i] * (T(0.5) * (T{1} + t) + T(0.5) * v * dt);
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> x, T p) {
  if (!(p >= T{0} && p < T{1})) throw std::invalid_argument("dropout: p must be in [0, 1)");
  Graph<T>& graph = *x.graph;
  if (!graph.training() || p == T{0}) return x;
  const Tensor<T>& xv = x.value();
  auto mask = std::make_shared<std::vector<T>>(xv.numel());
  const T keep = T{1} / (T{1} - p);
  for (T& v : *mask) {
    // 53 random bits -> uniform in [0, 1).
    const double u = static_cast<double>(graph.rng()() >> 11) * 0x1.0p-53;
    v = u < static_cast<double>(p) ? T{} : keep;
  }
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * (*mask)[i];
  return graph.push(std::move(out), {x.id}, [x, mask](Graph<T>& g, int self) {
    std::span<T> dy = g.grad(self);
    std::span<T> dx = g.grad(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (*mask)[i];
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets, int ignore_index) {
  const Tensor<T>& lv = logits.value();
  const std::size_t m = lv.rows(), n = lv.cols();
  if (targets.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits of shape " + shape_string(lv.shape()));
  }
  std::size_t counted = 0;
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= n) {
      throw std::out_of_range("cross_entropy: target id " + std::to_string(t) +
                              " out of range for " + std::to_string(n) + " classes");
    }
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross_entropy: no non-ignored targets");
  auto probs = std::make_shared<std::vector<T>>(m * n);
  T total{};
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] == ignore_index) continue;
    const T* x = lv.data().data() + i * n;
    T* p = probs->data() + i * n;
    T mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    T z{};
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = std::exp(x[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) p[j] /= z;
    total += -(x[targets[i]] - mx - std::log(z));
  }
  const T inv_count = T{1} / static_cast<T>(counted);
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.graph->push(
      Tensor<T>::scalar(total * inv_count), {logits.id},
      [logits, probs, tgt = std::move(tgt), m, n, inv_count, ignore_index](Graph<T>& g, int self) {
        const T up = g.grad(self)[0] * inv_count;
        std::span<T> dx = g.grad(logits.id);
        for (std::size_t i = 0; i < m; ++i) {
          if (tgt[i] == ignore_index) continue;
          const T* p = probs->data() + i * n;
          for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += up * p[j];
          dx[i * n + static_cast<std::size_t>(tgt[i])] -= up;
        }
      });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  const Tensor<T>& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (count == 0 || begin + count > n) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside shape " + shape_string(av.shape()));
  }
  Tensor<T> out(Shape{m, count});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(i * n + begin), count,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * count));
  }
  return a.graph->push(std::move(out), {a.id}, [a, begin, count, m, n](Graph<T>& g, int self) {
    std::span<T> dy = g.grad(self);
    std::span<T> dx = g.grad(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) dx[i * n + begin + j] += dy[i * count + j];
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph<T>* graph = parts[0].graph;
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Var<T>& p : parts) {
    same_graph(parts[0], p);
    if (p.rows() != m) shape_mismatch("concat_cols", parts[0].value(), p.value());
    n += p.cols();
  }
  Tensor<T> out(Shape{m, n});
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Var<T>& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.value().data().begin() + static_cast<std::ptrdiff_t>(i * w), w,
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * n + offset));
    }
    ids.push_back(p.id);
    widths.push_back(w);
    offset += w;
  }
  Var<T> result = graph->push(std::move(out), ids, [ids, widths, m, n](Graph<T>& g, int self) {
    std::span<T> dy = g.grad(self);
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t w = widths[p];
      if (g.needs_grad(ids[p])) {
        std::span<T> dx = g.grad(ids[p]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) dx[i * w + j] += dy[i * n + off + j];
      }
      off += w;
    }
  });
  return result;
}

template <typename T>
Var<T> select_row(Var<T> a, std::size_t r) {
  const Tensor<T>& av = a.value();
  if (r >= av.rows()) {
    throw ShapeError("select_row: row " + std::to_string(r) + " outside shape " +
                     shape_string(av.shape()));
  }
  const std::size_t n = av.cols();
  std::vector<T> row(av.data().begin() + static_cast<std::ptrdiff_t>(r * n),
                     av.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  return a.graph->push(Tensor<T>(Shape{1, n}, std::move(row)), {a.id},
                       [a, r, n](Graph<T>& g, int self) {
                         std::span<T> dy = g.grad(self);
                         std::span<T> dx = g.grad(a.id);
                         for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += dy[j];
                       });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T total{};
  for (T v : a.value().data()) total += v;
  return a.graph->push(Tensor<T>::scalar(total), {a.id}, [a](Graph<T>& g, int self) {
    const T up = g.grad(self)[0];
    for (T& d : g.grad(a.id)) d += up;
  });
}

#define EMPCHAT_INSTANTIATE_OPS(T)                                                  \
  template Var<T> matmul(Var<T>, Var<T>);                                           \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                        \
  template Var<T> add(Var<T>, Var<T>);                                              \
  template Var<T> add_bias(Var<T>, Var<T>);                                         \
  template Var<T> mul(Var<T>, Var<T>);                                              \
  template Var<T> scale(Var<T>, T);                                                 \
  template Var<T> embedding(Var<T>, std::span<const int>);                          \
  template Var<T> softmax(Var<T>, bool);                                            \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                            \
  template Var<T> gelu(Var<T>);                                                     \
  template Var<T> dropout(Var<T>, T);                                               \
  template Var<T> cross_entropy(Var<T>, std::span<const int>, int);                 \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> concat_cols(std::span<const Var<T>>);                             \
  template Var<T> select_row(Var<T>, std::size_t);                                  \
  template Var<T> sum(Var<T>);

EMPCHAT_INSTANTIATE_OPS(float)
EMPCHAT_INSTANTIATE_OPS(double)

#undef EMPCHAT_INSTANTIATE_OPS

}  // namespace empchat
