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

// Tensors and the reverse-mode tape.
//
// A Tape records one forward pass. Every op appends a node holding its
// output value and a closure that, during backward(), reads the node's
// output gradient and accumulates (+=) into its inputs' gradients. Nodes are
// visited in exact reverse creation order, which is a valid reverse
// topological order because inputs always precede outputs.
//
// Parameters live outside the tape as Tensors with requires_grad set; the
// tape references them directly, so gradients from every use of a parameter
// accumulate in Tensor::grad until the optimizer consumes them.
#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pitchacc::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until a backward pass touches it

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(nn::numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != nn::numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { grad.assign(data.size(), T(0)); }
};

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const { return tape->shape(*this); }
  std::span<const T> value() const { return tape->value(*this); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const { return nn::numel(shape()); }
};

template <class T>
bool all_finite(std::span<const T> v) {
  for (T x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> t) {
    Node n;
    n.op = "constant";
    n.shape = std::move(t.shape);
    n.value = std::move(t.data);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }
  Var<T> constant(Shape s, std::vector<T> v) { return constant(Tensor<T>(std::move(s), std::move(v))); }

  // Leaf referencing a parameter; `p` must outlive the tape's backward pass.
  Var<T> param(Tensor<T>& p) {
    Node n;
    n.op = "param";
    n.shape = p.shape;
    n.param = &p;
    n.needs_grad = p.requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  // Read-only leaf for inference; never receives a gradient.
  Var<T> frozen(const Tensor<T>& p) {
    Node n;
    n.op = "param";
    n.shape = p.shape;
    n.param = const_cast<Tensor<T>*>(&p);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<T> record(const char* op, Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward) {
    if (value.size() != numel(shape)) throw ShapeError(std::string(op) + ": output size mismatch");
    if (!all_finite<T>(value)) throw NumericError(std::string(op) + " produced a non-finite value");
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.value = std::move(value);
    for (const auto& in : inputs) {
      if (in.tape != this) throw std::invalid_argument(std::string(op) + ": input from another tape");
      n.inputs.push_back(in.id);
      n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Shape& shape(Var<T> v) const { return nodes_[v.id].shape; }
  std::span<const T> value(Var<T> v) const {
    const Node& n = nodes_[v.id];
    return n.param ? std::span<const T>(n.param->data) : std::span<const T>(n.value);
  }
  bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer of a node; only valid inside backward().
  std::span<T> grad(Var<T> v) { return grad(v.id); }
  std::span<T> grad(std::size_t id) {
    Node& n = nodes_[id];
    return n.param ? std::span<T>(n.param->grad) : std::span<T>(n.grad);
  }

  void backward(Var<T> loss) {
    if (numel(shape(loss)) != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(shape(loss)));
    for (auto& n : nodes_) {
      if (!n.needs_grad) continue;
      if (n.param)
        n.param->ensure_grad();
      else
        n.grad.assign(numel(n.shape), T(0));
    }
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss)[0] += T(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.backward) continue;
      n.backward(*this, i);
      for (auto in : n.inputs) {
        if (nodes_[in].needs_grad && !all_finite<T>(grad(in)))
          throw NumericError(std::string("backward of ") + n.op + " produced a non-finite gradient");
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const char* op = "";
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    Tensor<T>* param = nullptr;
    bool needs_grad = false;
    std::vector<std::size_t> inputs;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

}  // namespace pitchacc::nn
