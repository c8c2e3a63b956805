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

// Adam with L2 weight decay folded into the gradient, plus global-norm
// gradient clipping.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "pitchacc/nn/tensor.hpp"

namespace pitchacc::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

template <class T>
void zero_grad(std::span<Tensor<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

template <class T>
double global_grad_norm(std::span<Tensor<T>* const> params) {
  double sq = 0.0;
  for (const auto* p : params)
    for (T g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

// Rescales all gradients so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
template <class T>
double clip_grad_norm(std::span<Tensor<T>* const> params, double max_norm) {
  const double norm = global_grad_norm<T>(params);
  if (!std::isfinite(norm)) throw NumericError("clip_grad_norm: non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      for (T& g : p->grad) g *= scale;
  }
  return norm;
}

// g' = g + wd * p;  m = b1 m + (1-b1) g';  v = b2 v + (1-b2) g'^2
// p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <class T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& st) {
  if (st.m.empty()) {
    for (const auto* p : params) {
      st.m.emplace_back(p->numel(), T(0));
      st.v.emplace_back(p->numel(), T(0));
    }
  }
  if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed between steps");
  ++st.step;
  const AdamConfig& c = st.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    if (p.grad.size() != p.data.size()) throw std::invalid_argument("adam_step: gradient not populated");
    auto& m = st.m[k];
    auto& v = st.v[k];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]) + c.weight_decay * static_cast<double>(p.data[i]);
      m[i] = static_cast<T>(c.beta1 * m[i] + (1.0 - c.beta1) * g);
      v[i] = static_cast<T>(c.beta2 * v[i] + (1.0 - c.beta2) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.data[i] = static_cast<T>(p.data[i] - c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

}  // namespace pitchacc::nn
