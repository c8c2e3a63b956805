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

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pitchacc/nn/checkpoint.hpp"
#include "pitchacc/nn/layers.hpp"
#include "pitchacc/nn/ops.hpp"
#include "pitchacc/nn/optim.hpp"
#include "support/gradcheck.hpp"

using namespace pitchacc;
using namespace pitchacc::nn;
using pitchacc::testing::grad_check;
using pitchacc::testing::project;
using pitchacc::testing::random_tensor;
using Catch::Approx;

namespace {
constexpr double kTol = 1e-4;
constexpr int kInstances = 5;

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}
}  // namespace

TEST_CASE("conv1d hand-computed cases", "[nn][conv1d]") {
  Tape<double> tp;
  auto x = tp.constant({1, 3}, {1, 1, 1});
  auto k = tp.constant({1, 1, 2}, {1, 1});
  auto y = conv1d(x, k, std::nullopt, 2, 0);
  REQUIRE(y.shape() == Shape{1, 1});
  CHECK(y.value()[0] == 2.0);

  auto x2 = tp.constant({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto ident = tp.constant({2, 2, 1}, {1, 0, 0, 1});
  auto y2 = conv1d(x2, ident, std::nullopt, 1, 0);
  REQUIRE(y2.shape() == Shape{2, 4});
  for (std::size_t i = 0; i < 8; ++i) CHECK(y2.value()[i] == x2.value()[i]);

  // Same padding with stride 2 halves the length, rounding up.
  auto x3 = tp.constant(Tensor<double>({1, 9}, 1.0));
  auto k3 = tp.constant(Tensor<double>({1, 1, 11}, 1.0));
  CHECK(conv1d(x3, k3, std::nullopt, 2, 5).shape() == Shape{1, 5});

  CHECK_THROWS_AS(conv1d(tp.constant({1, 2}, {1, 1}), tp.constant({1, 1, 3}, {1, 1, 1}), std::nullopt, 2, 0),
                  ShapeError);
  CHECK_THROWS_AS(conv1d(tp.constant({2, 2}, {1, 1, 1, 1}), k, std::nullopt, 2, 0), ShapeError);
}

TEST_CASE("conv1d gradients match finite differences", "[nn][conv1d][gradcheck]") {
  Rng rng(11);
  for (int inst = 0; inst < kInstances; ++inst) {
    auto x = random_tensor({2, 7}, rng);
    auto k = random_tensor({3, 2, 3}, rng);
    auto b = random_tensor({3}, rng);
    const std::size_t stride = inst % 2 ? 1 : 2;
    const std::size_t pad = inst % 3;
    const std::size_t lout = (7 + 2 * pad - 3) / stride + 1;
    auto w = random_weights(3 * lout, rng);
    auto res = grad_check(
        [&](Tape<double>& tp) {
          return project(conv1d(tp.param(x), tp.param(k), tp.param(b), stride, pad), w);
        },
        {&x, &k, &b});
    CHECK(res.max_rel_error < kTol);
  }
}

TEST_CASE("linear, relu and concat gradients", "[nn][gradcheck]") {
  Rng rng(12);
  for (int inst = 0; inst < kInstances; ++inst) {
    auto x = random_tensor({4, 3}, rng);
    auto W = random_tensor({5, 4}, rng);
    auto b = random_tensor({5}, rng);
    auto other = random_tensor({2, 3}, rng);
    auto w = random_weights(7 * 3, rng);
    auto res = grad_check(
        [&](Tape<double>& tp) {
          auto y = relu(linear(tp.param(x), tp.param(W), tp.param(b)));
          return project(concat(y, tp.param(other)), w);
        },
        {&x, &W, &b, &other});
    CHECK(res.max_rel_error < kTol);
  }
}

TEST_CASE("embedding gradients and range check", "[nn][embedding][gradcheck]") {
  Rng rng(13);
  for (int inst = 0; inst < kInstances; ++inst) {
    auto table = random_tensor({6, 4}, rng);
    const std::vector<int> ids = {2, 0, 2, 5};
    auto w = random_weights(16, rng);
    auto res = grad_check([&](Tape<double>& tp) { return project(embedding(tp.param(table), ids), w); }, {&table});
    CHECK(res.max_rel_error < kTol);
  }
  Tape<double> tp;
  Tensor<double> table({3, 2});
  CHECK_THROWS_AS(embedding(tp.param(table), {3}), std::out_of_range);
}

TEST_CASE("sum_over_span values, gradients and linearity", "[nn][pool]") {
  Tape<double> tp;
  auto f = tp.constant({2, 3}, {1, 3, 5, 2, 4, 6});
  auto s = sum_over_span(f, 0, 3);
  CHECK(s.value()[0] == 9.0);
  CHECK(s.value()[1] == 12.0);
  auto one = sum_over_span(f, 1, 2);
  CHECK(one.value()[0] == 3.0);
  CHECK(one.value()[1] == 4.0);
  CHECK_THROWS_AS(sum_over_span(f, 1, 1), ShapeError);
  CHECK_THROWS_AS(sum_over_span(f, 2, 4), ShapeError);

  // Every contributing frame receives the output gradient unchanged.
  Tensor<double> frames({2, 5}, 0.5);
  frames.requires_grad = true;
  frames.zero_grad();
  {
    Tape<double> t2;
    auto out = sum_over_span(t2.param(frames), 1, 4);
    t2.backward(project(out, {3.0, -2.0}));
  }
  for (std::size_t t = 0; t < 5; ++t) {
    const bool in = t >= 1 && t < 4;
    CHECK(frames.at(0, t) == 0.5);
    CHECK(frames.grad[t] == (in ? 3.0 : 0.0));
    CHECK(frames.grad[5 + t] == (in ? -2.0 : 0.0));
  }

  // Superposition: pool(a + b) = pool(a) + pool(b), and concat is linear.
  Rng rng(14);
  for (int inst = 0; inst < kInstances; ++inst) {
    auto a = random_tensor({3, 6}, rng, 1.0, false);
    auto b = random_tensor({3, 6}, rng, 1.0, false);
    Tensor<double> ab({3, 6});
    for (std::size_t i = 0; i < ab.numel(); ++i) ab[i] = a[i] + b[i];
    Tape<double> t3;
    auto pa = sum_over_span(t3.constant(a), 1, 5).value();
    auto pb = sum_over_span(t3.constant(b), 1, 5).value();
    auto pab = sum_over_span(t3.constant(ab), 1, 5).value();
    for (std::size_t r = 0; r < 3; ++r) CHECK(pab[r] == Approx(pa[r] + pb[r]).epsilon(1e-12));
    auto ca = concat(t3.constant(a), t3.constant(b)).value();
    auto cb = concat(t3.constant(b), t3.constant(a)).value();
    auto cab = concat(t3.constant(ab), t3.constant(ab)).value();
    for (std::size_t i = 0; i < cab.size(); ++i) CHECK(cab[i] == Approx(ca[i] + cb[i]).epsilon(1e-12));
  }
}

TEST_CASE("span pooling gradients", "[nn][pool][gradcheck]") {
  Rng rng(15);
  const std::vector<std::pair<std::size_t, std::size_t>> spans = {{0, 2}, {2, 3}, {3, 7}};
  for (auto kind : {Pooling::sum, Pooling::max}) {
    for (int inst = 0; inst < kInstances; ++inst) {
      auto x = random_tensor({3, 8}, rng);
      auto w = random_weights(9, rng);
      auto res = grad_check([&](Tape<double>& tp) { return project(span_pool(tp.param(x), spans, kind), w); },
                            {&x});
      CHECK(res.max_rel_error < kTol);
    }
    Rng r2(16);
    auto x = random_tensor({2, 4}, r2, 1.0, false);
    Tape<double> tp;
    auto single = span_pool(tp.constant(x), {{1, 3}}, Pooling::sum).value();
    auto direct = sum_over_span(tp.constant(x), 1, 3).value();
    CHECK(single[0] == direct[0]);
    CHECK(single[1] == direct[1]);
  }
}

TEST_CASE("concat shapes", "[nn][concat]") {
  Tape<float> tp;
  auto a = tp.constant(Tensor<float>({128}, 1.0f));
  auto b = tp.constant(Tensor<float>({300}, 2.0f));
  auto c = concat(a, b);
  CHECK(c.shape() == Shape{428});
  CHECK(c.value()[127] == 1.0f);
  CHECK(c.value()[128] == 2.0f);
  CHECK_THROWS_AS(concat(tp.constant(Tensor<float>({2, 3})), tp.constant(Tensor<float>({2, 4}))), ShapeError);
}

TEST_CASE("softmax cross-entropy", "[nn][loss]") {
  Tape<double> tp;
  CHECK(softmax_xent(tp.constant({2, 1}, {0, 0}), {0}).value()[0] == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(softmax_xent(tp.constant({2, 1}, {20, -20}), {0}).value()[0] == Approx(0.0).margin(1e-15));
  // Masked positions do not contribute.
  auto masked = softmax_xent(tp.constant({2, 2}, {0, 50, 0, -50}), {0, 0}, {1, 0});
  CHECK(masked.value()[0] == Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(17);
  for (int inst = 0; inst < kInstances; ++inst) {
    auto z = random_tensor({2, 5}, rng, 3.0);
    std::vector<int> labels(5);
    for (auto& l : labels) l = static_cast<int>(rng.below(2));
    const std::vector<char> mask = {1, 1, 0, 1, 1};
    auto res = grad_check([&](Tape<double>& t) { return softmax_xent(t.param(z), labels, mask); }, {&z});
    CHECK(res.max_rel_error < kTol);
  }
}

TEST_CASE("LSTM cell and sequence gradients", "[nn][lstm][gradcheck]") {
  Rng rng(18);
  for (int inst = 0; inst < kInstances; ++inst) {
    auto x = random_tensor({4}, rng);
    auto h = random_tensor({3}, rng);
    auto c = random_tensor({3}, rng);
    auto wx = random_tensor({12, 4}, rng);
    auto wh = random_tensor({12, 3}, rng);
    auto b = random_tensor({12}, rng);
    auto w = random_weights(6, rng);
    auto res = grad_check(
        [&](Tape<double>& tp) {
          return project(lstm_cell(tp.param(x), tp.param(h), tp.param(c), tp.param(wx), tp.param(wh), tp.param(b)),
                         w);
        },
        {&x, &h, &c, &wx, &wh, &b});
    CHECK(res.max_rel_error < kTol);
  }
  for (bool reverse : {false, true}) {
    for (int inst = 0; inst < kInstances; ++inst) {
      auto x = random_tensor({4, 3}, rng);
      auto wx = random_tensor({12, 4}, rng);
      auto wh = random_tensor({12, 3}, rng);
      auto b = random_tensor({12}, rng);
      auto w = random_weights(9, rng);
      auto res = grad_check(
          [&](Tape<double>& tp) {
            return project(lstm_sequence(tp.param(x), tp.param(wx), tp.param(wh), tp.param(b), reverse), w);
          },
          {&x, &wx, &wh, &b});
      CHECK(res.max_rel_error < kTol);
    }
  }
}

TEST_CASE("lstm_sequence agrees with unrolled lstm_cell", "[nn][lstm]") {
  Rng rng(19);
  auto x = random_tensor({4, 5}, rng, 1.0, false);
  auto wx = random_tensor({12, 4}, rng);
  auto wh = random_tensor({12, 3}, rng);
  auto b = random_tensor({12}, rng);
  for (bool reverse : {false, true}) {
    Tape<double> tp;
    auto seq = lstm_sequence(tp.constant(x), tp.param(wx), tp.param(wh), tp.param(b), reverse).value();
    std::vector<double> h(3, 0.0), c(3, 0.0);
    for (int s = 0; s < 5; ++s) {
      const std::size_t t = reverse ? 4 - s : s;
      std::vector<double> xt(4);
      for (std::size_t d = 0; d < 4; ++d) xt[d] = x.at(d, t);
      auto hc = lstm_cell(tp.constant({4}, xt), tp.constant({3}, h), tp.constant({3}, c), tp.param(wx),
                          tp.param(wh), tp.param(b))
                    .value();
      for (std::size_t k = 0; k < 3; ++k) {
        h[k] = hc[k];
        c[k] = hc[3 + k];
        CHECK(seq[k * 5 + t] == Approx(h[k]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("bilstm", "[nn][bilstm]") {
  SECTION("zero weights and biases give zero outputs") {
    ParameterSet<double> ps;
    Rng rng(20);
    auto layers = add_bilstm(ps, "lstm", 4, 3, 2, rng);
    for (std::size_t i = 0; i < ps.size(); ++i) std::fill(ps[i].data.begin(), ps[i].data.end(), 0.0);
    Tape<double> tp;
    auto y = bilstm(tp.constant(random_tensor({4, 6}, rng, 1.0, false)), ps, layers);
    REQUIRE(y.shape() == Shape{6, 6});
    for (double v : y.value()) CHECK(v == 0.0);
  }
  SECTION("single timestep is well defined") {
    ParameterSet<double> ps;
    Rng rng(21);
    auto layers = add_bilstm(ps, "lstm", 4, 3, 2, rng);
    Tape<double> tp;
    auto y = bilstm(tp.constant(random_tensor({4, 1}, rng, 1.0, false)), ps, layers);
    REQUIRE(y.shape() == Shape{6, 1});
    for (double v : y.value()) CHECK(std::isfinite(v));
  }
  SECTION("gradients on a 3-step, D=4, H=3 instance") {
    Rng rng(22);
    for (int inst = 0; inst < kInstances; ++inst) {
      ParameterSet<double> ps;
      auto layers = add_bilstm(ps, "lstm", 4, 3, 2, rng);
      auto x = random_tensor({4, 3}, rng);
      auto w = random_weights(18, rng);
      auto params = ps.pointers();
      params.push_back(&x);
      auto res = grad_check([&](Tape<double>& tp) { return project(bilstm(tp.param(x), ps, layers), w); }, params);
      CHECK(res.max_rel_error < kTol);
    }
  }
  SECTION("output at t concatenates both directions") {
    ParameterSet<double> ps;
    Rng rng(23);
    auto layers = add_bilstm(ps, "lstm", 2, 2, 1, rng);
    auto x = random_tensor({2, 4}, rng, 1.0, false);
    Tape<double> tp;
    auto y = bilstm(tp.constant(x), ps, layers).value();
    auto f = lstm_sequence(tp.constant(x), tp.param(ps[layers[0].fwd.wx]), tp.param(ps[layers[0].fwd.wh]),
                           tp.param(ps[layers[0].fwd.b]), false)
                 .value();
    auto b = lstm_sequence(tp.constant(x), tp.param(ps[layers[0].bwd.wx]), tp.param(ps[layers[0].bwd.wh]),
                           tp.param(ps[layers[0].bwd.b]), true)
                 .value();
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(y[i] == f[i]);
      CHECK(y[8 + i] == b[i]);
    }
  }
}

TEST_CASE("dropout", "[nn][dropout]") {
  Rng rng(24);
  Tape<double> tp;
  auto x = tp.constant(Tensor<double>({10000}, 2.0));
  auto same = dropout(x, 0.0, rng);
  CHECK(same.id == x.id);
  auto y = dropout(x, 0.5, rng).value();
  double mean = 0.0;
  std::size_t zeros = 0;
  for (double v : y) {
    mean += v;
    zeros += v == 0.0;
  }
  mean /= 10000.0;
  CHECK(std::abs(mean - 2.0) / 2.0 < 0.02);
  CHECK(zeros > 4500);
  CHECK(zeros < 5500);
  CHECK_THROWS(dropout(x, 1.0, rng));
}

TEST_CASE("parameter gradients accumulate across uses", "[nn][tape]") {
  Tensor<double> w({2}, 0.0);
  w.data = {1.5, -2.0};
  w.requires_grad = true;
  w.zero_grad();
  Tape<double> tp;
  auto a = tp.param(w);
  auto b = tp.param(w);
  auto loss = project(concat(a, b), {1.0, 2.0, 3.0, 4.0});
  tp.backward(loss);
  CHECK(w.grad[0] == 4.0);
  CHECK(w.grad[1] == 6.0);
}

TEST_CASE("non-finite values raise an error naming the op", "[nn][tape]") {
  Tape<double> tp;
  auto x = tp.constant({1, 1}, {1e308});
  auto W = tp.constant({1, 1}, {1e308});
  try {
    linear(x, W);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("linear") != std::string::npos);
  }
}

TEST_CASE("adam", "[nn][adam]") {
  SECTION("first step closed form") {
    Tensor<double> p({1}, 1.0);
    p.grad = {1.0};
    AdamState<double> st(AdamConfig{1e-3, 0.9, 0.999, 1e-8, 0.0});
    std::vector<Tensor<double>*> ps = {&p};
    adam_step<double>(ps, st);
    CHECK(p.data[0] == Approx(0.999).epsilon(1e-9));
  }
  SECTION("zero gradient and no decay leave parameters unchanged") {
    Tensor<double> p({3}, 0.7);
    p.grad = {0.0, 0.0, 0.0};
    AdamState<double> st(AdamConfig{1e-3, 0.9, 0.999, 1e-8, 0.0});
    std::vector<Tensor<double>*> ps = {&p};
    for (int i = 0; i < 5; ++i) adam_step<double>(ps, st);
    for (double v : p.data) CHECK(v == 0.7);
  }
  SECTION("descends f(x) = x^2") {
    Tensor<double> p({1}, 1.0);
    AdamState<double> st;
    std::vector<Tensor<double>*> ps = {&p};
    double prev = 1.0;
    for (int i = 0; i < 200; ++i) {
      p.grad = {2.0 * p.data[0]};
      adam_step<double>(ps, st);
      const double f = p.data[0] * p.data[0];
      CHECK(f < prev);
      prev = f;
    }
  }
  SECTION("missing gradient is rejected") {
    Tensor<double> p({1}, 1.0);
    AdamState<double> st;
    std::vector<Tensor<double>*> ps = {&p};
    CHECK_THROWS(adam_step<double>(ps, st));
  }
}

TEST_CASE("global-norm clipping", "[nn][clip]") {
  Tensor<float> a({2}), b({1});
  a.grad = {3.0f, 0.0f};
  b.grad = {4.0f};
  std::vector<Tensor<float>*> ps = {&a, &b};
  CHECK(clip_grad_norm<float>(ps, 1.0) == Approx(5.0));
  CHECK(global_grad_norm<float>(ps) == Approx(1.0).epsilon(1e-6));
  CHECK(a.grad[0] == Approx(0.6f));
}

TEST_CASE("checkpoint encoding round-trips", "[nn][checkpoint]") {
  Rng rng(25);
  for (int inst = 0; inst < 3; ++inst) {
    Checkpoint ck;
    ck.metadata = R"({"note":"x"})";
    for (int k = 0; k < 3; ++k) {
      NamedTensor t{"t" + std::to_string(k), {1 + rng.below(3), 1 + rng.below(4)}, {}};
      for (std::size_t i = 0; i < numel(t.shape); ++i) t.data.push_back(static_cast<float>(rng.normal()));
      ck.tensors.push_back(t);
    }
    const auto bytes = encode_checkpoint(ck);
    const auto back = decode_checkpoint(bytes);
    CHECK(back.metadata == ck.metadata);
    REQUIRE(back.tensors.size() == ck.tensors.size());
    for (std::size_t k = 0; k < ck.tensors.size(); ++k) {
      CHECK(back.tensors[k].name == ck.tensors[k].name);
      CHECK(back.tensors[k].shape == ck.tensors[k].shape);
      CHECK(back.tensors[k].data == ck.tensors[k].data);
    }
    CHECK(encode_checkpoint(back) == bytes);
  }
  CHECK_THROWS_AS(decode_checkpoint("PACK\x02"), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint("nope"), CheckpointError);
}
