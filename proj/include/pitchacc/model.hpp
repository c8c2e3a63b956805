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

// Speech-only, text-only and combined pitch-accent labelers.
//
// Speech path: conv1d (stride 2, same padding) -> ReLU -> dropout per layer,
// then frames are pooled into one vector per token using the word
// timestamps. Text path: trainable embedding lookup. The token sequence
// (speech, text, or both concatenated) goes through a BiLSTM, dropout and a
// linear layer giving two logits per token. Without the LSTM the pooled
// vectors feed the linear layer directly.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitchacc/corpus.hpp"
#include "pitchacc/featurizer.hpp"
#include "pitchacc/nn/checkpoint.hpp"
#include "pitchacc/nn/layers.hpp"
#include "pitchacc/nn/ops.hpp"
#include "pitchacc/nn/tensor.hpp"
#include "pitchacc/rng.hpp"

namespace pitchacc {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Too few downsampled frames to give every token its own span.
class SpanError : public ModelError {
 public:
  using ModelError::ModelError;
};

enum class InputMode { speech, text, speech_text };
enum class Context { full_utterance, three_token, one_token };

inline const char* mode_name(InputMode m) {
  switch (m) {
    case InputMode::speech: return "speech";
    case InputMode::text: return "text";
    case InputMode::speech_text: return "speech_text";
  }
  return "?";
}

inline InputMode parse_mode(const std::string& s) {
  if (s == "speech") return InputMode::speech;
  if (s == "text") return InputMode::text;
  if (s == "speech_text") return InputMode::speech_text;
  throw ModelError("unknown input_mode '" + s + "' (speech, text, speech_text)");
}

inline const char* context_name(Context c) {
  switch (c) {
    case Context::full_utterance: return "full_utterance";
    case Context::three_token: return "three_token";
    case Context::one_token: return "one_token";
  }
  return "?";
}

inline Context parse_context(const std::string& s) {
  if (s == "full_utterance") return Context::full_utterance;
  if (s == "three_token") return Context::three_token;
  if (s == "one_token") return Context::one_token;
  throw ModelError("unknown context '" + s + "' (full_utterance, three_token, one_token)");
}

inline const char* pooling_name(nn::Pooling p) { return p == nn::Pooling::sum ? "sum" : "max"; }

inline nn::Pooling parse_pooling(const std::string& s) {
  if (s == "sum") return nn::Pooling::sum;
  if (s == "max") return nn::Pooling::max;
  throw ModelError("unknown pooling '" + s + "' (sum, max)");
}

struct ModelConfig {
  int cnn_layers = 3;
  int cnn_kernel_width = 11;
  std::vector<int> cnn_channels = {128, 256, 256};
  int cnn_stride = 2;
  int lstm_layers = 2;
  int lstm_hidden = 128;
  // Applied after every CNN layer and after the final LSTM output.
  double dropout = 0.5;
  double weight_decay = 1e-5;
  nn::Pooling pooling = nn::Pooling::sum;
  int text_embed_dim = 300;
  int vocab_size = 3000;
  InputMode input_mode = InputMode::speech_text;
  Context context = Context::full_utterance;
  bool use_lstm = true;

  // Training.
  double learning_rate = 1e-3;
  int epochs = 25;
  int batch_size = 64;
  double clip_norm = 5.0;
  // Optional "word v1 ... vD" text file used to initialize embeddings.
  std::string embeddings_path;

  bool uses_speech() const { return input_mode != InputMode::text; }
  bool uses_text() const { return input_mode != InputMode::speech; }
  // Neighbors on each side seen by a windowed model.
  std::size_t window_radius() const { return context == Context::three_token ? 1 : 0; }
  std::size_t downsample_factor() const {
    std::size_t f = 1;
    for (int i = 0; i < cnn_layers; ++i) f *= static_cast<std::size_t>(cnn_stride);
    return f;
  }

  void validate() const {
    auto check = [](bool ok, const std::string& what) {
      if (!ok) throw ModelError("invalid model config: " + what);
    };
    check(cnn_layers >= 1, "cnn_layers must be >= 1");
    check(static_cast<int>(cnn_channels.size()) == cnn_layers, "cnn_channels needs one entry per CNN layer");
    for (int c : cnn_channels) check(c >= 1, "cnn_channels entries must be positive");
    check(cnn_kernel_width >= 1 && cnn_kernel_width % 2 == 1, "cnn_kernel_width must be odd and positive");
    check(cnn_stride >= 1, "cnn_stride must be positive");
    check(lstm_layers >= 1 && lstm_hidden >= 1, "LSTM sizes must be positive");
    check(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    check(weight_decay >= 0.0, "weight_decay must be non-negative");
    check(text_embed_dim >= 1 && vocab_size >= 1, "text sizes must be positive");
    check(!(context == Context::one_token && use_lstm), "one_token context is CNN-only (set use_lstm = false)");
    check(learning_rate > 0.0 && epochs >= 1 && batch_size >= 1 && clip_norm >= 0.0, "training settings");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"cnn_layers", c.cnn_layers},
          {"cnn_kernel_width", c.cnn_kernel_width},
          {"cnn_channels", c.cnn_channels},
          {"cnn_stride", c.cnn_stride},
          {"lstm_layers", c.lstm_layers},
          {"lstm_hidden", c.lstm_hidden},
          {"dropout", c.dropout},
          {"weight_decay", c.weight_decay},
          {"pooling", pooling_name(c.pooling)},
          {"text_embed_dim", c.text_embed_dim},
          {"vocab_size", c.vocab_size},
          {"input_mode", mode_name(c.input_mode)},
          {"context", context_name(c.context)},
          {"use_lstm", c.use_lstm},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"clip_norm", c.clip_norm},
          {"embeddings_path", c.embeddings_path}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  const auto known = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ModelError("unknown model config key '" + it.key() + "'");
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) j.at(k).get_to(dst);
  };
  get("cnn_layers", c.cnn_layers);
  get("cnn_kernel_width", c.cnn_kernel_width);
  get("cnn_channels", c.cnn_channels);
  get("cnn_stride", c.cnn_stride);
  get("lstm_layers", c.lstm_layers);
  get("lstm_hidden", c.lstm_hidden);
  get("dropout", c.dropout);
  get("weight_decay", c.weight_decay);
  if (j.contains("pooling")) c.pooling = parse_pooling(j.at("pooling").get<std::string>());
  get("text_embed_dim", c.text_embed_dim);
  get("vocab_size", c.vocab_size);
  if (j.contains("input_mode")) c.input_mode = parse_mode(j.at("input_mode").get<std::string>());
  if (j.contains("context")) c.context = parse_context(j.at("context").get<std::string>());
  get("use_lstm", c.use_lstm);
  get("learning_rate", c.learning_rate);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("clip_norm", c.clip_norm);
  get("embeddings_path", c.embeddings_path);
  return c;
}

// ---------------------------------------------------------------------------
// Token spans

using FrameSpan = std::pair<std::size_t, std::size_t>;

// Per-token [begin, end) intervals in CNN-output frames.
struct TokenSpanMap {
  std::vector<FrameSpan> spans;
  std::size_t frames = 0;   // downsampled length
  std::size_t repairs = 0;  // tokens whose interval had to be repaired

  std::size_t size() const { return spans.size(); }
};

// Token boundaries on the original frame grid: round(time / hop), clamped to
// the matrix. Tokens may be empty here; downsample_spans repairs them.
inline std::vector<FrameSpan> original_frame_spans(const Utterance& u, std::size_t n_frames, double hop_s) {
  std::vector<FrameSpan> out;
  out.reserve(u.tokens.size());
  // Tolerate timestamps up to one analysis window past the last frame.
  const double limit_s = (static_cast<double>(n_frames) + 4.0) * hop_s;
  for (const auto& t : u.tokens) {
    if (t.end_s > limit_s + 1e-9)
      throw ModelError("utterance '" + u.id + "': token '" + t.text + "' ends after the audio");
    auto idx = [&](double s) { return std::min<std::size_t>(static_cast<std::size_t>(std::lround(s / hop_s)), n_frames); };
    out.emplace_back(idx(t.start_s), idx(t.end_s));
  }
  return out;
}

// Output length of the CNN stack (same padding, odd width): ceil(n / stride)
// per layer.
inline std::size_t downsampled_length(std::size_t n, const ModelConfig& cfg) {
  for (int l = 0; l < cfg.cnn_layers; ++l) n = (n + static_cast<std::size_t>(cfg.cnn_stride) - 1) / cfg.cnn_stride;
  return n;
}

// Maps original-frame token spans to the CNN output grid. Output frame d is
// centred on original frame d * S (S = stride^layers), so a boundary at
// original frame b maps to ceil(b / S).
//
// Empty intervals are repaired left to right: take an adjacent frame no
// token owns, otherwise steal the touching frame of the larger neighbor
// (which must keep at least one). Runs of empty tokens that this cannot
// resolve are packed by a shift that keeps order and non-overlap.
inline TokenSpanMap downsample_spans(const std::vector<FrameSpan>& orig, std::size_t n_frames, const ModelConfig& cfg,
                                     const std::string& utterance_id = "") {
  const std::size_t S = cfg.downsample_factor();
  TokenSpanMap out;
  out.frames = downsampled_length(n_frames, cfg);
  const std::size_t K = out.frames, m = orig.size();
  if (K < m)
    throw SpanError("utterance '" + utterance_id + "': " + std::to_string(K) + " downsampled frames for " +
                     std::to_string(m) + " tokens");
  auto& sp = out.spans;
  for (const auto& [b, e] : orig) sp.emplace_back(std::min((b + S - 1) / S, K), std::min((e + S - 1) / S, K));

  auto len = [&](std::size_t i) { return sp[i].second - sp[i].first; };
  bool unresolved = false;
  for (std::size_t i = 0; i < m; ++i) {
    if (len(i) > 0) continue;
    ++out.repairs;
    const std::size_t p = sp[i].first;
    const bool left_free = p > 0 && (i == 0 || sp[i - 1].second < p);
    const bool right_free = p < K && (i + 1 == m || sp[i + 1].first > p);
    if (left_free) {
      sp[i] = {p - 1, p};
      continue;
    }
    if (right_free) {
      sp[i] = {p, p + 1};
      continue;
    }
    const bool can_left = i > 0 && sp[i - 1].second == p && len(i - 1) >= 2;
    const bool can_right = i + 1 < m && sp[i + 1].first == p && len(i + 1) >= 2;
    if (can_left && (!can_right || len(i - 1) >= len(i + 1))) {
      --sp[i - 1].second;
      sp[i] = {p - 1, p};
    } else if (can_right) {
      ++sp[i + 1].first;
      sp[i] = {p, p + 1};
    } else {
      unresolved = true;
    }
  }
  if (unresolved) {
    for (std::size_t i = 0; i < m; ++i) {
      if (i > 0) sp[i].first = std::max(sp[i].first, sp[i - 1].second);
      sp[i].second = std::max(sp[i].second, sp[i].first + 1);
    }
    for (std::size_t i = m; i-- > 0;) {
      sp[i].second = std::min(sp[i].second, i + 1 < m ? sp[i + 1].first : K);
      sp[i].first = std::min(sp[i].first, sp[i].second - 1);
    }
  }
  return out;
}

inline TokenSpanMap map_spans(const Utterance& u, const FeatureMatrix& fm, const ModelConfig& cfg) {
  return downsample_spans(original_frame_spans(u, fm.n(), fm.hop_s), fm.n(), cfg, u.id);
}

// ---------------------------------------------------------------------------
// Prepared model inputs

// One utterance ready for the network: features (already normalized and
// ablated) in [feature, frame] layout, token spans on the original frame
// grid, vocabulary ids and gold labels.
struct Example {
  std::string id;
  std::size_t n_frames = 0;
  std::vector<double> frames;
  std::vector<FrameSpan> frame_spans;
  std::vector<int> token_ids;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

inline Example make_example(const Utterance& u, const FeatureMatrix* fm, const Vocabulary* vocab) {
  Example ex;
  ex.id = u.id;
  ex.labels = u.labels();
  if (fm) {
    ex.n_frames = fm->n();
    ex.frames.resize(kNumFeatures * ex.n_frames);
    for (std::size_t k = 0; k < ex.n_frames; ++k)
      for (int f = 0; f < kNumFeatures; ++f) ex.frames[f * ex.n_frames + k] = fm->rows[k][f];
    ex.frame_spans = original_frame_spans(u, fm->n(), fm->hop_s);
  }
  if (vocab)
    for (const auto& t : u.tokens) ex.token_ids.push_back(vocab->id(t.text));
  return ex;
}

struct Prediction {
  std::array<double, 2> logits{};
  int label = 0;
  double prob = 0.0;  // P(accented)
};

inline Prediction make_prediction(double z0, double z1) {
  Prediction p;
  p.logits = {z0, z1};
  const double mx = std::max(z0, z1);
  const double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
  p.prob = e1 / (e0 + e1);
  p.label = z1 > z0 ? 1 : 0;
  return p;
}

// ---------------------------------------------------------------------------
// Model

template <class T>
class Model {
 public:
  Model(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed) : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    cfg_.validate();
    Rng rng = Rng(seed).split("init");
    std::size_t token_dim = 0;
    if (cfg_.uses_speech()) {
      std::size_t in = kNumFeatures;
      const auto w = static_cast<std::size_t>(cfg_.cnn_kernel_width);
      for (int l = 0; l < cfg_.cnn_layers; ++l) {
        const auto out = static_cast<std::size_t>(cfg_.cnn_channels[static_cast<std::size_t>(l)]);
        ConvLayer cl;
        cl.w = ps_.add("cnn.l" + std::to_string(l) + ".w", {out, in, w});
        cl.b = ps_.add("cnn.l" + std::to_string(l) + ".b", {out});
        nn::init_uniform(ps_[cl.w], 1.0 / std::sqrt(static_cast<double>(in * w)), rng);
        conv_.push_back(cl);
        in = out;
      }
      token_dim += in;
    }
    if (cfg_.uses_text()) {
      if (vocab_.size() < 2) throw ModelError("text model needs a vocabulary");
      embed_ = ps_.add("embed", {vocab_.size(), static_cast<std::size_t>(cfg_.text_embed_dim)});
      for (auto& v : ps_[embed_].data) v = static_cast<T>(rng.normal());
      token_dim += static_cast<std::size_t>(cfg_.text_embed_dim);
    }
    std::size_t head_in = token_dim;
    if (cfg_.use_lstm) {
      lstm_ = nn::add_bilstm(ps_, "lstm", token_dim, static_cast<std::size_t>(cfg_.lstm_hidden),
                             static_cast<std::size_t>(cfg_.lstm_layers), rng);
      head_in = 2 * static_cast<std::size_t>(cfg_.lstm_hidden);
    }
    out_w_ = ps_.add("out.w", {2, head_in});
    out_b_ = ps_.add("out.b", {2});
    nn::init_uniform(ps_[out_w_], 1.0 / std::sqrt(static_cast<double>(head_in)), rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::ParameterSet<T>& params() { return ps_; }
  const nn::ParameterSet<T>& params() const { return ps_; }
  std::size_t parameter_count() const { return ps_.scalar_count(); }

  // Logits [2, last - first + 1] for tokens first..last of `ex`, computed
  // from those tokens' frames and ids only. Training mode when `dropout_rng`
  // is given; repaired-span count is added to *repairs.
  nn::Var<T> logits(nn::Tape<T>& tp, const Example& ex, std::size_t first, std::size_t last, Rng* dropout_rng,
                    std::size_t* repairs = nullptr) {
    return run(tp, ex, first, last, dropout_rng, repairs, [&](std::size_t i) { return tp.param(ps_[i]); });
  }

  // Inference on tokens first..last; touches no model state.
  std::vector<Prediction> predict_range(const Example& ex, std::size_t first, std::size_t last,
                                        std::size_t* repairs = nullptr) const {
    nn::Tape<T> tp;
    auto z = run(tp, ex, first, last, nullptr, repairs, [&](std::size_t i) { return tp.frozen(ps_[i]); });
    const auto v = z.value();
    const std::size_t m = last - first + 1;
    std::vector<Prediction> out;
    for (std::size_t j = 0; j < m; ++j)
      out.push_back(make_prediction(static_cast<double>(v[j]), static_cast<double>(v[m + j])));
    return out;
  }

  // Full-utterance models label the sequence at once; windowed models run
  // once per token on it and its existing neighbors and keep the centre.
  std::vector<Prediction> predict(const Example& ex, std::size_t* repairs = nullptr) const {
    const std::size_t m = ex.size();
    if (cfg_.context == Context::full_utterance) return predict_range(ex, 0, m - 1, repairs);
    std::vector<Prediction> out;
    for (std::size_t k = 0; k < m; ++k) {
      const auto [first, last] = window(k, m);
      out.push_back(predict_range(ex, first, last, repairs)[k - first]);
    }
    return out;
  }

  // Tokens [first, last] of the window centred on token k.
  std::pair<std::size_t, std::size_t> window(std::size_t k, std::size_t m) const {
    const std::size_t r = cfg_.window_radius();
    return {k >= r ? k - r : 0, std::min(m - 1, k + r)};
  }

  // Overwrites embedding rows of known words from a "word v1 ... vD" file.
  // Returns the number of rows set.
  std::size_t load_embeddings(const std::filesystem::path& path) {
    if (!cfg_.uses_text()) throw ModelError("load_embeddings: model has no text input");
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open embedding file " + path.string());
    const auto d = static_cast<std::size_t>(cfg_.text_embed_dim);
    auto& table = ps_[embed_];
    std::size_t set = 0, lineno = 0;
    std::string line, word;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line);
      if (!(ss >> word)) continue;
      std::vector<double> vals;
      for (double v; ss >> v;) vals.push_back(v);
      if (vals.size() != d)
        throw ModelError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(d) +
                         " values");
      if (!vocab_.contains(word)) continue;
      const auto id = static_cast<std::size_t>(vocab_.id(word));
      for (std::size_t c = 0; c < d; ++c) table.data[id * d + c] = static_cast<T>(vals[c]);
      ++set;
    }
    return set;
  }

 private:
  struct ConvLayer {
    std::size_t w = 0, b = 0;
  };

  template <class Leaf>
  nn::Var<T> run(nn::Tape<T>& tp, const Example& ex, std::size_t first, std::size_t last, Rng* drop,
                 std::size_t* repairs, Leaf&& leaf) const {
    const std::size_t m = ex.size();
    if (m == 0 || first > last || last >= m) throw ModelError("utterance '" + ex.id + "': bad token range");
    const std::size_t count = last - first + 1;
    const double p = drop ? cfg_.dropout : 0.0;
    std::optional<nn::Var<T>> tokens;

    if (cfg_.uses_speech()) {
      if (ex.frame_spans.size() != m) throw ModelError("utterance '" + ex.id + "': no acoustic features");
      // A full-utterance model sees every frame; a window sees only the
      // frames of its own tokens.
      const bool whole = cfg_.context == Context::full_utterance;
      const std::size_t f0 = whole ? 0 : ex.frame_spans[first].first;
      const std::size_t f1 = whole ? ex.n_frames : std::max(ex.frame_spans[last].second, f0 + 1);
      if (f1 > ex.n_frames) throw ModelError("utterance '" + ex.id + "': token spans exceed the feature matrix");
      const std::size_t n = f1 - f0;
      std::vector<T> x(kNumFeatures * n);
      for (int f = 0; f < kNumFeatures; ++f)
        for (std::size_t k = 0; k < n; ++k) x[f * n + k] = static_cast<T>(ex.frames[f * ex.n_frames + f0 + k]);
      std::vector<FrameSpan> local;
      for (std::size_t j = first; j <= last; ++j)
        local.emplace_back(ex.frame_spans[j].first - std::min(ex.frame_spans[j].first, f0),
                           ex.frame_spans[j].second - std::min(ex.frame_spans[j].second, f0));
      const TokenSpanMap map = downsample_spans(local, n, cfg_, ex.id);
      if (repairs) *repairs += map.repairs;

      nn::Var<T> h = tp.constant({static_cast<std::size_t>(kNumFeatures), n}, std::move(x));
      const auto width = static_cast<std::size_t>(cfg_.cnn_kernel_width);
      for (const auto& cl : conv_) {
        h = nn::conv1d(h, leaf(cl.w), leaf(cl.b), static_cast<std::size_t>(cfg_.cnn_stride), (width - 1) / 2);
        h = nn::relu(h);
        if (p > 0.0) h = nn::dropout(h, p, *drop);
      }
      tokens = nn::span_pool(h, map.spans, cfg_.pooling);
    }
    if (cfg_.uses_text()) {
      if (ex.token_ids.size() != m) throw ModelError("utterance '" + ex.id + "': no token ids");
      std::vector<int> ids(ex.token_ids.begin() + static_cast<std::ptrdiff_t>(first),
                           ex.token_ids.begin() + static_cast<std::ptrdiff_t>(last + 1));
      auto e = nn::embedding(leaf(embed_), ids);
      tokens = tokens ? nn::concat(*tokens, e) : e;
    }
    nn::Var<T> h = *tokens;
    if (cfg_.use_lstm) {
      h = nn::bilstm<T>(h, std::span<const nn::BiLstmLayer>(lstm_), leaf);
      if (p > 0.0) h = nn::dropout(h, p, *drop);
    }
    auto z = nn::linear(h, leaf(out_w_), leaf(out_b_));
    if (z.shape() != nn::Shape{2, count}) throw ModelError("internal: unexpected logits shape");
    return z;
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  nn::ParameterSet<T> ps_;
  std::vector<ConvLayer> conv_;
  std::size_t embed_ = 0;
  std::vector<nn::BiLstmLayer> lstm_;
  std::size_t out_w_ = 0, out_b_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints: parameters plus a JSON block with the config, vocabulary and
// anything the caller adds (normalization statistics, ablation, ...).

template <class T>
nn::Checkpoint to_checkpoint(const Model<T>& model, nlohmann::json extra = nlohmann::json::object()) {
  extra["model"] = to_json(model.config());
  extra["vocab"] = model.vocab().types();
  nn::Checkpoint ck;
  ck.metadata = extra.dump();
  ck.tensors = model.params().export_tensors();
  return ck;
}

template <class T>
Model<T> from_checkpoint(const nn::Checkpoint& ck, nlohmann::json* metadata = nullptr) {
  const auto meta = nlohmann::json::parse(ck.metadata);
  Model<T> model(model_config_from_json(meta.at("model")), Vocabulary(meta.at("vocab").get<std::vector<std::string>>()),
                 0);
  model.params().import_tensors(ck.tensors);
  if (metadata) *metadata = meta;
  return model;
}

inline nlohmann::json to_json(const NormStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"frames", s.frames}};
}

inline NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s;
  j.at("mean").get_to(s.mean);
  j.at("std").get_to(s.std);
  j.at("frames").get_to(s.frames);
  return s;
}

}  // namespace pitchacc
