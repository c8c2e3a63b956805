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

// Central finite-difference gradient checks. Independent of the analytic
// backward paths: only forward values are used to build the numeric
// gradient.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pitchacc/nn/tensor.hpp"
#include "pitchacc/rng.hpp"

namespace pitchacc::testing {

using nn::Tape;
using nn::Tensor;
using nn::Var;

// sum_i w_i * y_i with fixed weights; turns any output into a scalar loss.
inline Var<double> project(Var<double> y, const std::vector<double>& w) {
  auto yv = y.value();
  double s = 0.0;
  for (std::size_t i = 0; i < yv.size(); ++i) s += w[i] * yv[i];
  return y.tape->record("project", {1}, {s}, {y}, [y, w](Tape<double>& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    auto gy = tp.grad(y);
    for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += g * w[i];
  });
}

inline Tensor<double> random_tensor(nn::Shape shape, Rng& rng, double scale = 1.0, bool grad = true) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = scale * rng.uniform(-1.0, 1.0);
  t.requires_grad = grad;
  return t;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// `loss` builds a scalar on the given tape from the parameters.
inline GradCheckResult grad_check(const std::function<Var<double>(Tape<double>&)>& loss,
                                  const std::vector<Tensor<double>*>& params, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  auto eval = [&] {
    Tape<double> tape;
    return loss(tape).value()[0];
  };
  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& data = params[k]->data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = eval();
      data[i] = orig - h;
      const double down = eval();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-3});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / scale);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace pitchacc::testing
