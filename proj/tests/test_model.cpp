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

#include "pitchacc/model.hpp"
#include "pitchacc/synth.hpp"
#include "support/gradcheck.hpp"

using namespace pitchacc;
using Catch::Approx;

namespace {

ModelConfig small_config(InputMode mode = InputMode::speech_text, Context ctx = Context::full_utterance,
                         bool lstm = true) {
  ModelConfig c;
  c.cnn_channels = {4, 5, 5};
  c.cnn_kernel_width = 5;
  c.lstm_layers = 1;
  c.lstm_hidden = 3;
  c.text_embed_dim = 4;
  c.vocab_size = 50;
  c.input_mode = mode;
  c.context = ctx;
  c.use_lstm = lstm;
  c.dropout = 0.0;
  return c;
}

// Utterance with tokens of the given frame lengths separated by `gap`
// frames, after `lead` frames of lead-in.
Utterance frame_utt(const std::vector<int>& lengths, int gap = 2, int lead = 3) {
  Utterance u;
  u.id = "u";
  int f = lead;
  const char* words[] = {"the", "cat", "sat", "on", "a", "mat", "today", "again"};
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    u.tokens.push_back({words[i % 8], f * 0.010, (f + lengths[i]) * 0.010, static_cast<int>(i % 2)});
    f += lengths[i] + gap;
  }
  return u;
}

FeatureMatrix random_matrix(std::size_t n, Rng& rng) {
  FeatureMatrix fm;
  fm.rows.resize(n);
  for (auto& r : fm.rows)
    for (auto& v : r) v = rng.normal();
  return fm;
}

Vocabulary vocab_for(const Utterance& u) {
  Corpus c;
  c.utterances = {u};
  return build_vocab(c, 50);
}

// Output frame d covers original frame d * S; a token owns every output
// frame whose centre lies in its original-frame interval.
std::vector<FrameSpan> centre_oracle(const std::vector<FrameSpan>& orig, std::size_t n, std::size_t S) {
  const std::size_t K = (n + S - 1) / S;
  std::vector<FrameSpan> out;
  for (const auto& [b, e] : orig) {
    std::size_t lo = K, hi = K;
    for (std::size_t d = 0; d < K; ++d) {
      if (d * S >= b && d * S < e) {
        if (lo == K) lo = d;
        hi = d + 1;
      }
    }
    if (lo == K) {
      // empty: position where the centre would go
      std::size_t d = 0;
      while (d < K && d * S < b) ++d;
      lo = hi = d;
    }
    out.emplace_back(lo, hi);
  }
  return out;
}

void check_span_invariants(const TokenSpanMap& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m.spans[i].first < m.spans[i].second);
    CHECK(m.spans[i].second <= m.frames);
    if (i > 0) CHECK(m.spans[i - 1].second <= m.spans[i].first);
  }
}

}  // namespace

TEST_CASE("span mapping", "[model][spans]") {
  ModelConfig cfg;
  SECTION("worked example: [0, 0.2 s) with three stride-2 layers") {
    Utterance u;
    u.id = "x";
    u.tokens = {{"a", 0.0, 0.2, 1}};
    FeatureMatrix fm;
    fm.rows.resize(40);
    const auto orig = original_frame_spans(u, fm.n(), 0.010);
    CHECK(orig[0] == FrameSpan{0, 20});
    const auto m = downsample_spans({{0, 20}, {20, 40}}, 40, cfg);
    CHECK(m.spans[0] == FrameSpan{0, 3});
    CHECK(m.frames == 5);
    CHECK(centre_oracle({{0, 20}}, 40, 8)[0] == FrameSpan{0, 3});
  }
  SECTION("single token over the whole utterance covers every frame") {
    Utterance u;
    u.id = "x";
    u.tokens = {{"a", 0.0, 0.57, 0}};
    FeatureMatrix fm;
    fm.rows.resize(57);
    const auto m = map_spans(u, fm, cfg);
    CHECK(m.spans[0] == FrameSpan{0, m.frames});
    CHECK(m.frames == 8);
  }
  SECTION("adjacent tokens partition their union") {
    const auto m = downsample_spans({{5, 37}, {37, 70}}, 80, cfg);
    CHECK(m.spans[0].second == m.spans[1].first);
    CHECK(m.spans[0].first == 1);
    CHECK(m.spans[1].second == 9);
  }
  SECTION("matches the frame-centre oracle on random layouts") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      ModelConfig c = cfg;
      c.cnn_layers = 1 + static_cast<int>(rng.below(4));
      c.cnn_channels.assign(static_cast<std::size_t>(c.cnn_layers), 2);
      const std::size_t S = c.downsample_factor();
      std::vector<FrameSpan> orig;
      std::size_t f = rng.below(10);
      const std::size_t m = 1 + rng.below(8);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t len = S + rng.below(3 * S);
        orig.emplace_back(f, f + len);
        f += len + rng.below(4);
      }
      const std::size_t n = f + rng.below(10);
      const auto got = downsample_spans(orig, n, c);
      const auto want = centre_oracle(orig, n, S);
      check_span_invariants(got);
      if (got.repairs == 0) CHECK(got.spans == want);
    }
  }
}

TEST_CASE("span repair", "[model][spans]") {
  ModelConfig cfg;  // S = 8
  SECTION("steals from the larger neighbor") {
    const auto m = downsample_spans({{0, 20}, {20, 22}, {22, 40}}, 40, cfg);
    CHECK(m.repairs == 1);
    CHECK(m.spans == std::vector<FrameSpan>{{0, 2}, {2, 3}, {3, 5}});
  }
  SECTION("prefers an unowned adjacent frame") {
    const auto m = downsample_spans({{0, 8}, {30, 31}, {40, 64}}, 64, cfg);
    CHECK(m.repairs == 1);
    CHECK(m.spans == std::vector<FrameSpan>{{0, 1}, {3, 4}, {5, 8}});
  }
  SECTION("runs of short tokens still get one frame each") {
    std::vector<FrameSpan> orig;
    for (std::size_t i = 0; i < 6; ++i) orig.emplace_back(2 + 3 * i, 4 + 3 * i);
    const auto m = downsample_spans(orig, 48, cfg);
    CHECK(m.repairs > 0);
    REQUIRE(m.size() == 6);
    check_span_invariants(m);
  }
  SECTION("too few frames is an error") {
    CHECK_THROWS_AS(downsample_spans({{0, 4}, {4, 8}}, 8, cfg), ModelError);
  }
  SECTION("tokens past the audio are rejected") {
    Utterance u;
    u.id = "late";
    u.tokens = {{"a", 0.0, 2.0, 0}};
    CHECK_THROWS_AS(original_frame_spans(u, 50, 0.010), ModelError);
  }
}

TEST_CASE("model config", "[model][config]") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(model_config_from_json(to_json(c)) == c);
  c.context = Context::one_token;
  CHECK_THROWS_AS(c.validate(), ModelError);
  c.use_lstm = false;
  CHECK_NOTHROW(c.validate());
  c.cnn_channels = {1, 2};
  CHECK_THROWS_AS(c.validate(), ModelError);
  auto j = to_json(ModelConfig{});
  j["lstm_hiden"] = 3;
  CHECK_THROWS_AS(model_config_from_json(j), ModelError);
  CHECK_THROWS_AS(parse_mode("audio"), ModelError);
}

TEST_CASE("predictions are normalized for every mode and context", "[model]") {
  Rng rng(41);
  const Utterance u = frame_utt({12, 5, 20, 9, 14});
  const FeatureMatrix fm = random_matrix(90, rng);
  const Vocabulary v = vocab_for(u);
  const Example ex = make_example(u, &fm, &v);
  for (auto mode : {InputMode::speech, InputMode::text, InputMode::speech_text}) {
    for (auto ctx : {Context::full_utterance, Context::three_token, Context::one_token}) {
      for (bool lstm : {true, false}) {
        if (ctx == Context::one_token && lstm) continue;
        Model<double> model(small_config(mode, ctx, lstm), v, 5);
        const auto preds = model.predict(ex);
        REQUIRE(preds.size() == u.size());
        for (const auto& p : preds) {
          CHECK(p.prob >= 0.0);
          CHECK(p.prob <= 1.0);
          const double p0 = 1.0 / (1.0 + std::exp(p.logits[1] - p.logits[0]));
          CHECK(p0 + p.prob == Approx(1.0).margin(1e-6));
          CHECK(p.label == (p.logits[1] > p.logits[0] ? 1 : 0));
        }
      }
    }
  }
}

TEST_CASE("speech encoder properties", "[model][speech]") {
  Rng rng(42);
  // Tokens far from the edges relative to the receptive field.
  const Utterance u = frame_utt({16, 16, 24, 16}, 8, 40);
  const std::size_t n = 200;
  SECTION("all-ones input: equal spans give equal token outputs") {
    FeatureMatrix ones;
    ones.rows.assign(n, FeatureRow{1, 1, 1, 1, 1, 1});
    ModelConfig cfg = small_config(InputMode::speech, Context::full_utterance, false);
    cfg.cnn_channels = {8, 8, 8};
    Model<double> model(cfg, Vocabulary{}, 3);
    const auto preds = model.predict(make_example(u, &ones, nullptr));
    CHECK(preds[0].logits == preds[1].logits);
    CHECK(preds[0].logits != preds[2].logits);
  }
  SECTION("zero input with zero biases gives the output bias") {
    FeatureMatrix zeros;
    zeros.rows.assign(n, FeatureRow{});
    Model<double> model(small_config(InputMode::speech, Context::full_utterance, false), Vocabulary{}, 3);
    auto& ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (ps.name(i).ends_with(".b") && ps.name(i) != "out.b") std::fill(ps[i].data.begin(), ps[i].data.end(), 0.0);
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (ps.name(i) == "out.b") ps[i].data = {0.25, -0.5};
    for (const auto& p : model.predict(make_example(u, &zeros, nullptr))) {
      CHECK(p.logits[0] == 0.25);
      CHECK(p.logits[1] == -0.5);
    }
  }
  SECTION("features are not interchangeable") {
    FeatureMatrix fm = random_matrix(n, rng);
    Model<double> model(small_config(InputMode::speech, Context::full_utterance, false), Vocabulary{}, 3);
    const auto base = model.predict(make_example(u, &fm, nullptr));
    FeatureMatrix perm = fm;
    auto& row = perm.rows[u.tokens[1].start_s / 0.010 + 4];
    std::swap(row[kF0Smooth], row[kHnrDb]);
    const auto moved = model.predict(make_example(u, &perm, nullptr));
    CHECK(moved[1].logits != base[1].logits);
  }
}

TEST_CASE("context and locality", "[model][context]") {
  Rng rng(43);
  const Utterance u = frame_utt({16, 16, 16, 16, 16, 16}, 4, 4);
  const std::size_t n = 130;
  const FeatureMatrix fm = random_matrix(n, rng);
  const Vocabulary v = vocab_for(u);
  auto perturb_token = [&](std::size_t k) {
    FeatureMatrix out = fm;
    const auto b = static_cast<std::size_t>(std::lround(u.tokens[k].start_s / 0.010));
    const auto e = static_cast<std::size_t>(std::lround(u.tokens[k].end_s / 0.010));
    for (std::size_t f = b; f < e; ++f)
      for (auto& x : out.rows[f]) x += 3.0;
    return out;
  };
  auto logits_of = [&](const Model<double>& m, const FeatureMatrix& f) {
    std::vector<std::array<double, 2>> out;
    for (const auto& p : m.predict(make_example(u, &f, &v))) out.push_back(p.logits);
    return out;
  };

  SECTION("bidirectional LSTM carries the last token back to the first") {
    Model<double> m(small_config(InputMode::speech, Context::full_utterance, true), v, 7);
    CHECK(logits_of(m, perturb_token(5))[0] != logits_of(m, fm)[0]);
  }
  SECTION("CNN-only logits depend only on the receptive field") {
    Model<double> m(small_config(InputMode::speech, Context::full_utterance, false), v, 7);
    const auto base = logits_of(m, fm);
    const auto far = logits_of(m, perturb_token(5));
    // Receptive field of 3 layers, width 5, stride 2: 1 + 2 * (1 + 2 + 4) * 2 = 29 frames.
    CHECK(far[0] == base[0]);
    CHECK(far[1] == base[1]);
    CHECK(far[5] != base[5]);
  }
  SECTION("three-token windows ignore tokens beyond their neighbors") {
    Model<double> m(small_config(InputMode::speech_text, Context::three_token, true), v, 7);
    const auto base = logits_of(m, fm);
    const auto moved = logits_of(m, perturb_token(4));
    for (std::size_t k : {0u, 1u, 2u}) CHECK(moved[k] == base[k]);
    CHECK(moved[3] != base[3]);
    CHECK(moved[5] != base[5]);
  }
  SECTION("one-token windows see only their own token") {
    Model<double> m(small_config(InputMode::speech, Context::one_token, false), v, 7);
    const auto base = logits_of(m, fm);
    const auto moved = logits_of(m, perturb_token(2));
    for (std::size_t k = 0; k < 6; ++k) {
      if (k == 2)
        CHECK(moved[k] != base[k]);
      else
        CHECK(moved[k] == base[k]);
    }
  }
  SECTION("a one-token utterance under a three-token window") {
    const Utterance one = frame_utt({20});
    const FeatureMatrix f1 = random_matrix(30, rng);
    Model<double> m(small_config(InputMode::speech_text, Context::three_token, true), vocab_for(one), 7);
    const auto ex = make_example(one, &f1, &m.vocab());
    const auto p = m.predict(ex);
    REQUIRE(p.size() == 1);
    CHECK(p[0].logits == m.predict_range(ex, 0, 0)[0].logits);
  }
}

TEST_CASE("duration-only inputs depend only on spans", "[model][duration]") {
  SynthSpec a;
  a.n_utterances = 2;
  SynthSpec b = a;
  b.speaker_f0_min_hz = 150;
  b.speaker_f0_max_hz = 300;
  b.accent_energy_db = 6.0;
  const auto ra = synth_corpus(a, 9), rb = synth_corpus(b, 9);
  REQUIRE(ra.audio[0].samples != rb.audio[0].samples);
  REQUIRE(ra.audio[0].samples.size() == rb.audio[0].samples.size());
  const auto fa = ablate(extract_features(ra.audio[0]), Ablation::duration());
  const auto fb = ablate(extract_features(rb.audio[0]), Ablation::duration());
  Model<float> m(small_config(InputMode::speech), Vocabulary{}, 2);
  const auto pa = m.predict(make_example(ra.corpus.utterances[0], &fa, nullptr));
  const auto pb = m.predict(make_example(rb.corpus.utterances[0], &fb, nullptr));
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].logits == pb[i].logits);
}

TEST_CASE("whole-model gradients", "[model][gradcheck]") {
  Rng rng(44);
  const Utterance u = frame_utt({10, 6, 12});
  const FeatureMatrix fm = random_matrix(50, rng);
  const Vocabulary v = vocab_for(u);
  const Example ex = make_example(u, &fm, &v);
  for (auto ctx : {Context::full_utterance, Context::three_token}) {
    ModelConfig cfg = small_config(InputMode::speech_text, ctx, true);
    cfg.pooling = nn::Pooling::sum;
    Model<double> m(cfg, v, 11);
    auto res = testing::grad_check(
        [&](nn::Tape<double>& tp) {
          auto z = m.logits(tp, ex, 0, 2, nullptr);
          return nn::softmax_xent(z, ex.labels);
        },
        m.params().pointers());
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("parameter counts", "[model][params]") {
  ModelConfig c = small_config(InputMode::speech_text);
  Vocabulary v(std::vector<std::string>{"a", "b", "c"});
  Model<float> m(c, v, 1);
  // conv: 4*6*5+4, 5*4*5+5, 5*5*5+5; embed 4*4; lstm in 9, H 3: 2*(12*9+12*3+12);
  // out 2*6+2
  const std::size_t want = (120 + 4) + (100 + 5) + (125 + 5) + 16 + 2 * (108 + 36 + 12) + 14;
  CHECK(m.parameter_count() == want);

  // Default (full-size) settings land within an order of magnitude of 12M.
  ModelConfig full;
  std::vector<std::string> types;
  for (int i = 0; i < 3000; ++i) types.push_back("w" + std::to_string(i));
  Model<float> big(full, Vocabulary(types), 1);
  const double ratio = static_cast<double>(big.parameter_count()) / 12e6;
  INFO("full-size parameters: " << big.parameter_count());
  CHECK(std::abs(std::log10(ratio)) < 1.0);
}

TEST_CASE("checkpoint round-trip preserves predictions", "[model][checkpoint]") {
  Rng rng(45);
  const Utterance u = frame_utt({10, 6, 12, 9});
  const FeatureMatrix fm = random_matrix(60, rng);
  const Vocabulary v = vocab_for(u);
  Model<float> m(small_config(), v, 12);
  NormStats st;
  st.mean = {1, 2, 3, 4, 5, 6};
  st.frames = 17;
  const auto ck = to_checkpoint(m, {{"norm", to_json(st)}});
  nlohmann::json meta;
  const auto back = from_checkpoint<float>(nn::decode_checkpoint(nn::encode_checkpoint(ck)), &meta);
  CHECK(back.config() == m.config());
  CHECK(back.vocab().types() == v.types());
  CHECK(norm_stats_from_json(meta.at("norm")).mean == st.mean);
  const auto ex = make_example(u, &fm, &v);
  const auto a = m.predict(ex), b = back.predict(ex);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].logits == b[i].logits);
}

TEST_CASE("external embeddings", "[model][embeddings]") {
  const Utterance u = frame_utt({10, 6});
  const Vocabulary v = vocab_for(u);
  Model<double> m(small_config(InputMode::text), v, 1);
  const auto path = std::filesystem::temp_directory_path() / "pitchacc_test_emb.txt";
  {
    std::ofstream out(path);
    out << "the 1 2 3 4\nzebra 1 1 1 1\n";
  }
  CHECK(m.load_embeddings(path) == 1);
  {
    std::ofstream out(path);
    out << "the 1 2 3\n";
  }
  CHECK_THROWS_AS(m.load_embeddings(path), ModelError);
}
