// Copyright 2026 The pitchacc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable ops for the CNN + BiLSTM token labeler.
//
// Layout conventions: sequences are [features, time] row-major, so a token
// or frame is a column. Dense algebra goes through Eigen maps; every op
// checks its input shapes and throws ShapeError naming itself.
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pitchacc/nn/tensor.hpp"
#include "pitchacc/rng.hpp"

namespace pitchacc::nn {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;
template <class T>
using MatC = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

namespace detail {

template <class T>
CMapR<T> cmat(std::span<const T> v, std::size_t rows, std::size_t cols) {
  return CMapR<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <class T>
MapR<T> mat(std::span<T> v, std::size_t rows, std::size_t cols) {
  return MapR<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] inline void shape_fail(const char* op, const std::string& why) {
  throw ShapeError(std::string(op) + ": " + why);
}

// Rank-1 [D] is treated as [D, 1].
inline std::pair<std::size_t, std::size_t> as_matrix(const Shape& s, const char* op) {
  if (s.size() == 1) return {s[0], 1};
  if (s.size() == 2) return {s[0], s[1]};
  shape_fail(op, "expected rank 1 or 2, got " + shape_str(s));
}

template <class T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace detail

// y = W x + b for x [D, T] (or [D]) and W [O, D].
template <class T>
Var<T> linear(Var<T> x, Var<T> W, std::optional<std::type_identity_t<Var<T>>> b = std::nullopt) {
  Tape<T>& tp = *x.tape;
  const auto [d, t] = detail::as_matrix(x.shape(), "linear");
  if (W.shape().size() != 2 || W.dim(1) != d)
    detail::shape_fail("linear", "weight " + shape_str(W.shape()) + " does not match input " + shape_str(x.shape()));
  const std::size_t o = W.dim(0);
  if (b && (b->shape().size() != 1 || b->dim(0) != o)) detail::shape_fail("linear", "bias shape mismatch");

  std::vector<T> out(o * t);
  auto Y = detail::mat<T>(out, o, t);
  Y.noalias() = detail::cmat<T>(W.value(), o, d) * detail::cmat<T>(x.value(), d, t);
  if (b) {
    auto bv = b->value();
    for (std::size_t r = 0; r < o; ++r) Y.row(static_cast<Eigen::Index>(r)).array() += bv[r];
  }
  Shape shape = x.shape().size() == 1 ? Shape{o} : Shape{o, t};
  const std::size_t bid = b ? b->id : 0;
  const bool has_b = b.has_value();
  auto backward = [x, W, bid, has_b, o, d, t](Tape<T>& tp, std::size_t self) {
    auto dY = detail::cmat<T>(tp.grad(self), o, t);
    if (tp.needs_grad(x))
      detail::mat<T>(tp.grad(x), d, t).noalias() += detail::cmat<T>(W.value(), o, d).transpose() * dY;
    if (tp.needs_grad(W))
      detail::mat<T>(tp.grad(W), o, d).noalias() += dY * detail::cmat<T>(x.value(), d, t).transpose();
    if (has_b && tp.needs_grad(bid)) {
      auto gb = tp.grad(bid);
      for (std::size_t r = 0; r < o; ++r) gb[r] += dY.row(static_cast<Eigen::Index>(r)).sum();
    }
  };
  if (b) return tp.record("linear", std::move(shape), std::move(out), {x, W, *b}, backward);
  return tp.record("linear", std::move(shape), std::move(out), {x, W}, backward);
}

// Cross-correlation of x [C_in, L] with kernels [C_out, C_in, W]:
//   y[o, t] = sum_{c, w} k[o, c, w] * x[c, t*stride + w - padding] (+ b[o])
// with zeros outside [0, L). Output length floor((L + 2P - W) / stride) + 1.
template <class T>
Var<T> conv1d(Var<T> x, Var<T> kernels, std::optional<std::type_identity_t<Var<T>>> bias, std::size_t stride, std::size_t padding) {
  Tape<T>& tp = *x.tape;
  if (x.shape().size() != 2) detail::shape_fail("conv1d", "input must be [C, L], got " + shape_str(x.shape()));
  if (kernels.shape().size() != 3) detail::shape_fail("conv1d", "kernels must be [C_out, C_in, W]");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = kernels.dim(0), width = kernels.dim(2);
  if (kernels.dim(1) != cin)
    detail::shape_fail("conv1d", "kernel channels " + std::to_string(kernels.dim(1)) + " != input channels " +
                                     std::to_string(cin));
  if (stride == 0) detail::shape_fail("conv1d", "stride must be positive");
  if (len + 2 * padding < width) detail::shape_fail("conv1d", "input shorter than kernel");
  if (bias && (bias->shape().size() != 1 || bias->dim(0) != cout)) detail::shape_fail("conv1d", "bias shape");
  const std::size_t lout = (len + 2 * padding - width) / stride + 1;
  const std::size_t rows = cin * width;

  // im2col
  auto cols = std::make_shared<std::vector<T>>(rows * lout, T(0));
  auto xv = x.value();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t w = 0; w < width; ++w) {
      T* dst = cols->data() + (c * width + w) * lout;
      for (std::size_t t = 0; t < lout; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + w) - static_cast<std::ptrdiff_t>(padding);
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) dst[t] = xv[c * len + static_cast<std::size_t>(src)];
      }
    }
  }
  std::vector<T> out(cout * lout);
  auto Y = detail::mat<T>(out, cout, lout);
  Y.noalias() = detail::cmat<T>(kernels.value(), cout, rows) * detail::cmat<T>(*cols, rows, lout);
  if (bias) {
    auto bv = bias->value();
    for (std::size_t r = 0; r < cout; ++r) Y.row(static_cast<Eigen::Index>(r)).array() += bv[r];
  }
  const bool has_b = bias.has_value();
  const std::size_t bid = has_b ? bias->id : 0;
  auto backward = [=](Tape<T>& tp, std::size_t self) {
    auto dY = detail::cmat<T>(tp.grad(self), cout, lout);
    if (tp.needs_grad(kernels))
      detail::mat<T>(tp.grad(kernels), cout, rows).noalias() +=
          dY * detail::cmat<T>(std::span<const T>(*cols), rows, lout).transpose();
    if (has_b && tp.needs_grad(bid)) {
      auto gb = tp.grad(bid);
      for (std::size_t r = 0; r < cout; ++r) gb[r] += dY.row(static_cast<Eigen::Index>(r)).sum();
    }
    if (tp.needs_grad(x)) {
      MatR<T> dcols = detail::cmat<T>(kernels.value(), cout, rows).transpose() * dY;
      auto gx = tp.grad(x);
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t w = 0; w < width; ++w) {
          const T* src = dcols.data() + (c * width + w) * lout;
          for (std::size_t t = 0; t < lout; ++t) {
            const std::ptrdiff_t dst =
                static_cast<std::ptrdiff_t>(t * stride + w) - static_cast<std::ptrdiff_t>(padding);
            if (dst >= 0 && dst < static_cast<std::ptrdiff_t>(len)) gx[c * len + static_cast<std::size_t>(dst)] += src[t];
          }
        }
      }
    }
  };
  if (bias) return tp.record("conv1d", {cout, lout}, std::move(out), {x, kernels, *bias}, backward);
  return tp.record("conv1d", {cout, lout}, std::move(out), {x, kernels}, backward);
}

template <class T>
Var<T> relu(Var<T> x) {
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return x.tape->record("relu", x.shape(), std::move(out), {x}, [x](Tape<T>& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto v = tp.value(Var<T>{&tp, self});
    auto gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (v[i] > T(0)) gx[i] += g[i];
  });
}

// Inverted dropout: kept units are scaled by 1/(1-p) so E[y] = x.
template <class T>
Var<T> dropout(Var<T> x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (p == 0.0) return x;
  auto xv = x.value();
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(xv.size());
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = rng.uniform() < p ? T(0) : scale;
    out[i] = xv[i] * (*mask)[i];
  }
  return x.tape->record("dropout", x.shape(), std::move(out), {x}, [x, mask](Tape<T>& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

// Column sum over frames [begin, end) of x [C, K] -> [C].
template <class T>
Var<T> sum_over_span(Var<T> x, std::size_t begin, std::size_t end) {
  if (x.shape().size() != 2) detail::shape_fail("sum_over_span", "input must be [C, K]");
  const std::size_t c = x.dim(0), k = x.dim(1);
  if (!(begin < end && end <= k)) detail::shape_fail("sum_over_span", "empty or out-of-range span");
  auto xv = x.value();
  std::vector<T> out(c, T(0));
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t t = begin; t < end; ++t) out[r] += xv[r * k + t];
  return x.tape->record("sum_over_span", {c}, std::move(out), {x}, [=](Tape<T>& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto gx = tp.grad(x);
    for (std::size_t r = 0; r < c; ++r)
      for (std::size_t t = begin; t < end; ++t) gx[r * k + t] += g[r];
  });
}

enum class Pooling { sum, max };

// Pools each span of x [C, K] into one column of the [C, m] output.
template <class T>
Var<T> span_pool(Var<T> x, const std::vector<std::pair<std::size_t, std::size_t>>& spans, Pooling kind) {
  if (x.shape().size() != 2) detail::shape_fail("span_pool", "input must be [C, K]");
  const std::size_t c = x.dim(0), k = x.dim(1), m = spans.size();
  for (const auto& [b, e] : spans)
    if (!(b < e && e <= k)) detail::shape_fail("span_pool", "empty or out-of-range span");
  auto xv = x.value();
  std::vector<T> out(c * m);
  auto argmax = std::make_shared<std::vector<std::size_t>>(kind == Pooling::max ? c * m : 0);
  for (std::size_t r = 0; r < c; ++r) {
    const T* row = xv.data() + r * k;
    for (std::size_t j = 0; j < m; ++j) {
      const auto [b, e] = spans[j];
      if (kind == Pooling::sum) {
        T s = T(0);
        for (std::size_t t = b; t < e; ++t) s += row[t];
        out[r * m + j] = s;
      } else {
        std::size_t best = b;
        for (std::size_t t = b + 1; t < e; ++t)
          if (row[t] > row[best]) best = t;
        out[r * m + j] = row[best];
        (*argmax)[r * m + j] = best;
      }
    }
  }
  return x.tape->record("span_pool", {c, m}, std::move(out), {x},
                        [=, spans = spans](Tape<T>& tp, std::size_t self) {
                          auto g = tp.grad(self);
                          auto gx = tp.grad(x);
                          for (std::size_t r = 0; r < c; ++r) {
                            for (std::size_t j = 0; j < m; ++j) {
                              if (kind == Pooling::sum) {
                                for (std::size_t t = spans[j].first; t < spans[j].second; ++t)
                                  gx[r * k + t] += g[r * m + j];
                              } else {
                                gx[r * k + (*argmax)[r * m + j]] += g[r * m + j];
                              }
                            }
                          }
                        });
}

// Concatenation along the first axis: [Da] ++ [Db] or [Da, T] ++ [Db, T].
template <class T>
Var<T> concat(Var<T> a, Var<T> b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || sa.empty() || sa.size() > 2 || (sa.size() == 2 && sa[1] != sb[1]))
    detail::shape_fail("concat", "incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  Shape shape = sa;
  shape[0] += sb[0];
  std::vector<T> out;
  out.reserve(a.numel() + b.numel());
  auto av = a.value();
  auto bv = b.value();
  out.insert(out.end(), av.begin(), av.end());
  out.insert(out.end(), bv.begin(), bv.end());
  const std::size_t na = av.size();
  return a.tape->record("concat", std::move(shape), std::move(out), {a, b}, [=](Tape<T>& tp, std::size_t self) {
    auto g = tp.grad(self);
    if (tp.needs_grad(a)) {
      auto ga = tp.grad(a);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

// Rows of table [V, D] for each id, laid out as columns: [D, T].
template <class T>
Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) detail::shape_fail("embedding", "table must be [V, D]");
  const std::size_t v = table.dim(0), d = table.dim(1), t = ids.size();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw std::out_of_range("embedding: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(v));
  auto tv = table.value();
  std::vector<T> out(d * t);
  for (std::size_t j = 0; j < t; ++j)
    for (std::size_t r = 0; r < d; ++r) out[r * t + j] = tv[static_cast<std::size_t>(ids[j]) * d + r];
  return table.tape->record("embedding", {d, t}, std::move(out), {table},
                            [=, ids = ids](Tape<T>& tp, std::size_t self) {
                              auto g = tp.grad(self);
                              auto gt = tp.grad(table);
                              for (std::size_t j = 0; j < t; ++j)
                                for (std::size_t r = 0; r < d; ++r)
                                  gt[static_cast<std::size_t>(ids[j]) * d + r] += g[r * t + j];
                            });
}

// Mean token cross-entropy of logits [C, T] against labels. Only positions
// with mask[t] != 0 contribute (empty mask = all); the sum is divided by
// `denominator`, or by the number of contributing positions when it is 0.
// Gradient: (softmax - onehot) / denominator.
template <class T>
Var<T> softmax_xent(Var<T> logits, const std::vector<int>& labels, const std::vector<char>& mask = {},
                    double denominator = 0.0) {
  const auto [c, t] = detail::as_matrix(logits.shape(), "softmax_xent");
  if (labels.size() != t) detail::shape_fail("softmax_xent", "label count does not match logits");
  if (!mask.empty() && mask.size() != t) detail::shape_fail("softmax_xent", "mask length does not match logits");
  auto z = logits.value();
  auto probs = std::make_shared<std::vector<T>>(c * t, T(0));
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t j = 0; j < t; ++j) {
    if (!mask.empty() && !mask[j]) continue;
    if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= c)
      throw std::out_of_range("softmax_xent: label out of range");
    T mx = z[j];
    for (std::size_t r = 1; r < c; ++r) mx = std::max(mx, z[r * t + j]);
    T sum = T(0);
    for (std::size_t r = 0; r < c; ++r) sum += std::exp(z[r * t + j] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t r = 0; r < c; ++r) (*probs)[r * t + j] = std::exp(z[r * t + j] - lse);
    total += static_cast<double>(lse - z[static_cast<std::size_t>(labels[j]) * t + j]);
    ++counted;
  }
  const double denom = denominator > 0.0 ? denominator : static_cast<double>(std::max<std::size_t>(counted, 1));
  std::vector<T> out{static_cast<T>(total / denom)};
  return logits.tape->record(
      "softmax_xent", {1}, std::move(out), {logits},
      [=, cc = c, tt = t, labels = labels, mask = mask](Tape<T>& tp, std::size_t self) {
        const T g = tp.grad(self)[0] / static_cast<T>(denom);
        auto gz = tp.grad(logits);
        for (std::size_t j = 0; j < tt; ++j) {
          if (!mask.empty() && !mask[j]) continue;
          for (std::size_t r = 0; r < cc; ++r) {
            const T onehot = static_cast<std::size_t>(labels[j]) == r ? T(1) : T(0);
            gz[r * tt + j] += g * ((*probs)[r * tt + j] - onehot);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// LSTM
//
// Gate order in the 4H weight rows is (input, forget, cell, output):
//   z = Wx x + Wh h_prev + b
//   i = sigma(z_i), f = sigma(z_f), g = tanh(z_g), o = sigma(z_o)
//   c = f * c_prev + i * g,  h = o * tanh(c)

namespace detail {

template <class T>
void check_lstm_weights(const char* op, const Shape& wx, const Shape& wh, const Shape& b, std::size_t d) {
  if (wx.size() != 2 || wh.size() != 2 || b.size() != 1) shape_fail(op, "weights must be [4H,D], [4H,H], [4H]");
  const std::size_t h4 = wx[0];
  if (h4 % 4 != 0 || wh[0] != h4 || wh[1] != h4 / 4 || b[0] != h4 || wx[1] != d)
    shape_fail(op, "inconsistent LSTM weight shapes " + shape_str(wx) + " " + shape_str(wh) + " " + shape_str(b) +
                       " for input dim " + std::to_string(d));
}

// Activations of one step, given pre-activations z (4H).
template <class T>
void lstm_gates(Eigen::Ref<VecT<T>> z, std::size_t h) {
  const auto H = static_cast<Eigen::Index>(h);
  for (Eigen::Index r = 0; r < 2 * H; ++r) z[r] = sigmoid(z[r]);
  for (Eigen::Index r = 2 * H; r < 3 * H; ++r) z[r] = std::tanh(z[r]);
  for (Eigen::Index r = 3 * H; r < 4 * H; ++r) z[r] = sigmoid(z[r]);
}

// Backward of one step. `gates` holds activated (i, f, g, o); returns dz
// and adds the recurrent contributions into dc_prev.
template <class T>
VecT<T> lstm_step_backward(const VecT<T>& gates, const VecT<T>& c_prev, const VecT<T>& tanh_c, const VecT<T>& dh,
                           const VecT<T>& dc_in, VecT<T>& dc_prev) {
  const auto H = dh.size();
  const auto i = gates.segment(0, H).array();
  const auto f = gates.segment(H, H).array();
  const auto g = gates.segment(2 * H, H).array();
  const auto o = gates.segment(3 * H, H).array();
  const auto tc = tanh_c.array();
  VecT<T> dc = (dh.array() * o * (T(1) - tc * tc) + dc_in.array()).matrix();
  VecT<T> dz(4 * H);
  dz.segment(0, H) = (dc.array() * g * i * (T(1) - i)).matrix();
  dz.segment(H, H) = (dc.array() * c_prev.array() * f * (T(1) - f)).matrix();
  dz.segment(2 * H, H) = (dc.array() * i * (T(1) - g * g)).matrix();
  dz.segment(3 * H, H) = (dh.array() * tc * o * (T(1) - o)).matrix();
  dc_prev = (dc.array() * f).matrix();
  return dz;
}

}  // namespace detail

// One LSTM step: x [D], h [H], c [H] -> [2H] holding (h', c').
template <class T>
Var<T> lstm_cell(Var<T> x, Var<T> h, Var<T> c, Var<T> Wx, Var<T> Wh, Var<T> b) {
  if (x.shape().size() != 1 || h.shape().size() != 1 || c.shape().size() != 1)
    detail::shape_fail("lstm_cell", "x, h and c must be vectors");
  const std::size_t d = x.dim(0), hd = h.dim(0);
  detail::check_lstm_weights<T>("lstm_cell", Wx.shape(), Wh.shape(), b.shape(), d);
  if (Wh.dim(1) != hd || c.dim(0) != hd) detail::shape_fail("lstm_cell", "state size mismatch");
  using V = VecT<T>;
  using CV = Eigen::Map<const V>;
  auto xv = CV(x.value().data(), static_cast<Eigen::Index>(d));
  auto hv = CV(h.value().data(), static_cast<Eigen::Index>(hd));
  auto cv = CV(c.value().data(), static_cast<Eigen::Index>(hd));
  auto st = std::make_shared<std::pair<V, V>>();  // gates, tanh(c')
  V z = detail::cmat<T>(Wx.value(), 4 * hd, d) * xv + detail::cmat<T>(Wh.value(), 4 * hd, hd) * hv +
        CV(b.value().data(), static_cast<Eigen::Index>(4 * hd));
  detail::lstm_gates<T>(z, hd);
  const auto H = static_cast<Eigen::Index>(hd);
  V cn = (z.segment(H, H).array() * cv.array() + z.segment(0, H).array() * z.segment(2 * H, H).array()).matrix();
  V tc = cn.array().tanh().matrix();
  V hn = (z.segment(3 * H, H).array() * tc.array()).matrix();
  std::vector<T> out(2 * hd);
  for (Eigen::Index r = 0; r < H; ++r) {
    out[static_cast<std::size_t>(r)] = hn[r];
    out[hd + static_cast<std::size_t>(r)] = cn[r];
  }
  st->first = z;
  st->second = tc;
  return x.tape->record(
      "lstm_cell", {2 * hd}, std::move(out), {x, h, c, Wx, Wh, b}, [=](Tape<T>& tp, std::size_t self) {
        auto g = tp.grad(self);
        V dh = Eigen::Map<const V>(g.data(), H);
        V dc_in = Eigen::Map<const V>(g.data() + hd, H);
        V c_prev = Eigen::Map<const V>(tp.value(c).data(), H);
        V dc_prev;
        V dz = detail::lstm_step_backward<T>(st->first, c_prev, st->second, dh, dc_in, dc_prev);
        if (tp.needs_grad(c)) Eigen::Map<V>(tp.grad(c).data(), H) += dc_prev;
        if (tp.needs_grad(h))
          Eigen::Map<V>(tp.grad(h).data(), H) += detail::cmat<T>(tp.value(Wh), 4 * hd, hd).transpose() * dz;
        if (tp.needs_grad(x))
          Eigen::Map<V>(tp.grad(x).data(), static_cast<Eigen::Index>(d)) +=
              detail::cmat<T>(tp.value(Wx), 4 * hd, d).transpose() * dz;
        if (tp.needs_grad(Wx))
          detail::mat<T>(tp.grad(Wx), 4 * hd, d).noalias() +=
              dz * Eigen::Map<const V>(tp.value(x).data(), static_cast<Eigen::Index>(d)).transpose();
        if (tp.needs_grad(Wh))
          detail::mat<T>(tp.grad(Wh), 4 * hd, hd).noalias() +=
              dz * Eigen::Map<const V>(tp.value(h).data(), H).transpose();
        if (tp.needs_grad(b)) Eigen::Map<V>(tp.grad(b).data(), 4 * H) += dz;
      });
}

// Unidirectional LSTM over x [D, T] from zero state; returns hidden states
// [H, T]. With reverse = true the sequence is consumed from t = T-1 down to
// 0 and output column t is still the state after reading x[:, t].
template <class T>
Var<T> lstm_sequence(Var<T> x, Var<T> Wx, Var<T> Wh, Var<T> b, bool reverse) {
  if (x.shape().size() != 2) detail::shape_fail("lstm_sequence", "input must be [D, T]");
  const std::size_t d = x.dim(0), steps = x.dim(1);
  detail::check_lstm_weights<T>("lstm_sequence", Wx.shape(), Wh.shape(), b.shape(), d);
  if (steps == 0) detail::shape_fail("lstm_sequence", "empty sequence");
  const std::size_t hd = Wh.dim(1);
  const auto H = static_cast<Eigen::Index>(hd);
  const auto TT = static_cast<Eigen::Index>(steps);
  using V = VecT<T>;

  struct State {
    MatC<T> gates;   // [4H, T] activated
    MatC<T> cells;   // [H, T]
    MatC<T> tanh_c;  // [H, T]
    MatC<T> hidden;  // [H, T]
  };
  auto st = std::make_shared<State>();
  MatC<T> Z = detail::cmat<T>(Wx.value(), 4 * hd, d) * detail::cmat<T>(x.value(), d, steps);
  Z.colwise() += Eigen::Map<const V>(b.value().data(), 4 * H);
  const auto Whm = detail::cmat<T>(Wh.value(), 4 * hd, hd);
  st->gates.resize(4 * H, TT);
  st->cells.resize(H, TT);
  st->tanh_c.resize(H, TT);
  st->hidden.resize(H, TT);
  V h = V::Zero(H), c = V::Zero(H);
  for (Eigen::Index s = 0; s < TT; ++s) {
    const Eigen::Index t = reverse ? TT - 1 - s : s;
    V z = Z.col(t);
    z.noalias() += Whm * h;
    detail::lstm_gates<T>(z, hd);
    c = (z.segment(H, H).array() * c.array() + z.segment(0, H).array() * z.segment(2 * H, H).array()).matrix();
    V tc = c.array().tanh().matrix();
    h = (z.segment(3 * H, H).array() * tc.array()).matrix();
    st->gates.col(t) = z;
    st->cells.col(t) = c;
    st->tanh_c.col(t) = tc;
    st->hidden.col(t) = h;
  }
  std::vector<T> out(hd * steps);
  detail::mat<T>(out, hd, steps) = st->hidden;

  return x.tape->record(
      "lstm_sequence", {hd, steps}, std::move(out), {x, Wx, Wh, b}, [=](Tape<T>& tp, std::size_t self) {
        auto dY = detail::cmat<T>(tp.grad(self), hd, steps);
        const auto Whm = detail::cmat<T>(tp.value(Wh), 4 * hd, hd);
        MatC<T> dZ(4 * H, TT);
        V dh_next = V::Zero(H), dc_next = V::Zero(H), dc_prev;
        const bool want_wh = tp.needs_grad(Wh);
        MatC<T> dWh;
        if (want_wh) dWh = MatC<T>::Zero(4 * H, H);
        for (Eigen::Index s = TT - 1; s >= 0; --s) {
          const Eigen::Index t = reverse ? TT - 1 - s : s;
          const Eigen::Index tp_prev = reverse ? t + 1 : t - 1;
          V c_prev = s > 0 ? V(st->cells.col(tp_prev)) : V(V::Zero(H));
          V dh = dY.col(t) + dh_next;
          V dz = detail::lstm_step_backward<T>(st->gates.col(t), c_prev, st->tanh_c.col(t), dh, dc_next, dc_prev);
          dc_next = dc_prev;
          dZ.col(t) = dz;
          if (s > 0) {
            if (want_wh) dWh.noalias() += dz * st->hidden.col(tp_prev).transpose();
            dh_next.noalias() = Whm.transpose() * dz;
          }
        }
        if (want_wh) detail::mat<T>(tp.grad(Wh), 4 * hd, hd) += dWh;
        if (tp.needs_grad(x))
          detail::mat<T>(tp.grad(x), d, steps).noalias() += detail::cmat<T>(tp.value(Wx), 4 * hd, d).transpose() * dZ;
        if (tp.needs_grad(Wx))
          detail::mat<T>(tp.grad(Wx), 4 * hd, d).noalias() += dZ * detail::cmat<T>(tp.value(x), d, steps).transpose();
        if (tp.needs_grad(b)) Eigen::Map<V>(tp.grad(b).data(), 4 * H) += dZ.rowwise().sum();
      });
}

}  // namespace pitchacc::nn
