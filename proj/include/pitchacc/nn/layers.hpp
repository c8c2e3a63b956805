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

// Named parameter storage and the stacked bidirectional LSTM.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pitchacc/nn/checkpoint.hpp"
#include "pitchacc/nn/ops.hpp"
#include "pitchacc/nn/tensor.hpp"
#include "pitchacc/rng.hpp"

namespace pitchacc::nn {

// Owns every trainable tensor of a model under a stable index and name.
// Layers refer to parameters by index, so copies of a ParameterSet are
// independent snapshots.
template <class T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Shape shape) {
    Tensor<T> t(std::move(shape));
    t.requires_grad = true;
    tensors_.push_back(std::move(t));
    names_.push_back(std::move(name));
    return tensors_.size() - 1;
  }

  Tensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const { return tensors_.size(); }

  std::vector<Tensor<T>*> pointers() {
    std::vector<Tensor<T>*> out;
    for (auto& t : tensors_) out.push_back(&t);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  std::vector<NamedTensor> export_tensors() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      NamedTensor nt{names_[i], tensors_[i].shape, {}};
      nt.data.reserve(tensors_[i].numel());
      for (T v : tensors_[i].data) nt.data.push_back(static_cast<float>(v));
      out.push_back(std::move(nt));
    }
    return out;
  }

  void import_tensors(const std::vector<NamedTensor>& in) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      const NamedTensor* found = nullptr;
      for (const auto& nt : in)
        if (nt.name == names_[i]) found = &nt;
      if (!found) throw CheckpointError("checkpoint is missing parameter '" + names_[i] + "'");
      if (found->shape != tensors_[i].shape)
        throw CheckpointError("parameter '" + names_[i] + "' has shape " + shape_str(found->shape) + ", expected " +
                              shape_str(tensors_[i].shape));
      for (std::size_t k = 0; k < found->data.size(); ++k) tensors_[i].data[k] = static_cast<T>(found->data[k]);
    }
  }

 private:
  std::vector<Tensor<T>> tensors_;
  std::vector<std::string> names_;
};

template <class T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

struct LstmWeights {
  std::size_t wx = 0, wh = 0, b = 0;
};

struct BiLstmLayer {
  LstmWeights fwd, bwd;
};

// Adds `layers` bidirectional layers. Weights ~ U(-1/sqrt(fan_in), +),
// biases 0 except the forget gate at 1.
template <class T>
std::vector<BiLstmLayer> add_bilstm(ParameterSet<T>& ps, const std::string& prefix, std::size_t input_dim,
                                    std::size_t hidden, std::size_t layers, Rng& rng) {
  std::vector<BiLstmLayer> out;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    BiLstmLayer layer;
    for (int dir = 0; dir < 2; ++dir) {
      const std::string p = prefix + ".l" + std::to_string(l) + (dir ? ".bwd" : ".fwd");
      LstmWeights w;
      w.wx = ps.add(p + ".wx", {4 * hidden, in});
      w.wh = ps.add(p + ".wh", {4 * hidden, hidden});
      w.b = ps.add(p + ".b", {4 * hidden});
      init_uniform(ps[w.wx], 1.0 / std::sqrt(static_cast<double>(in)), rng);
      init_uniform(ps[w.wh], 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
      for (std::size_t r = hidden; r < 2 * hidden; ++r) ps[w.b].data[r] = T(1);
      (dir ? layer.bwd : layer.fwd) = w;
    }
    out.push_back(layer);
    in = 2 * hidden;
  }
  return out;
}

// Stacked BiLSTM over x [D, T] -> [2H, T]. Column t of each layer's output
// is (forward state at t ; backward state at t). `leaf` turns a parameter
// index into a tape variable.
template <class T, class Leaf>
Var<T> bilstm(Var<T> x, std::span<const BiLstmLayer> layers, Leaf&& leaf) {
  for (const auto& layer : layers) {
    auto run = [&](const LstmWeights& w, bool reverse) {
      return lstm_sequence(x, leaf(w.wx), leaf(w.wh), leaf(w.b), reverse);
    };
    Var<T> f = run(layer.fwd, false);
    Var<T> b = run(layer.bwd, true);
    x = concat(f, b);
  }
  return x;
}

template <class T>
Var<T> bilstm(Var<T> x, ParameterSet<T>& ps, std::span<const BiLstmLayer> layers) {
  Tape<T>& tp = *x.tape;
  return bilstm<T>(x, layers, [&](std::size_t i) { return tp.param(ps[i]); });
}

}  // namespace pitchacc::nn
