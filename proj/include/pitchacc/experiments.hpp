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

// Training runs, cross-validation and the experiment suites built on them.
//
// Every number reported here is a function of the corpus, the config, the
// fold seed and the model seed. Runs are independent jobs; results are
// stored by job index, so the thread count never changes an output.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitchacc/baselines.hpp"
#include "pitchacc/corpus.hpp"
#include "pitchacc/featurizer.hpp"
#include "pitchacc/model.hpp"
#include "pitchacc/nn/optim.hpp"
#include "pitchacc/rng.hpp"
#include "pitchacc/synth.hpp"
#include "pitchacc/wav.hpp"

namespace pitchacc {

class LeakageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using LogFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Job pool

// Runs f(0..n-1) on up to `threads` workers that pull the next index from a
// shared counter. The first exception (by index) is rethrown after all jobs
// finish.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto nt = static_cast<std::size_t>(std::max(1, threads));
  if (nt == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(nt, n); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Dataset: a corpus plus raw (unnormalized) features for each utterance

struct Dataset {
  Corpus corpus;
  std::vector<FeatureMatrix> features;  // parallel to corpus; empty for text-only work
  StopwordList stopwords = StopwordList::english();

  bool has_features() const { return !features.empty(); }
};

inline std::vector<FeatureMatrix> featurize_audio(const std::vector<Waveform>& audio, const FeaturizerParams& p,
                                                  int threads = 1) {
  std::vector<FeatureMatrix> out(audio.size());
  parallel_for(audio.size(), threads, [&](std::size_t i) { out[i] = extract_features(audio[i], p); });
  return out;
}

// Reads each utterance's WAV (or its cached features) and extracts features.
inline std::vector<FeatureMatrix> featurize_corpus(const Corpus& c, const FeaturizerParams& p,
                                                   const std::optional<std::filesystem::path>& cache_dir = {},
                                                   int threads = 1) {
  std::vector<FeatureMatrix> out(c.size());
  parallel_for(c.size(), threads, [&](std::size_t i) {
    const Utterance& u = c.utterances[i];
    std::filesystem::path cached;
    if (cache_dir) {
      cached = feature_cache_path(*cache_dir, u.id, p);
      if (std::filesystem::exists(cached)) {
        out[i] = read_feature_file(cached);
        out[i].hop_s = p.hop_s;
        return;
      }
    }
    const auto path = c.audio_path(u);
    if (!std::filesystem::exists(path))
      throw CorpusError("utterance '" + u.id + "': missing audio file " + path.string());
    const Waveform w = read_wav(path);
    if (w.sample_rate_hz != c.sample_rate_hz)
      throw AudioError("utterance '" + u.id + "': sample rate " + std::to_string(w.sample_rate_hz) +
                       " differs from the corpus rate " + std::to_string(c.sample_rate_hz));
    out[i] = extract_features(w, p);
    if (cache_dir) write_feature_file(cached, out[i]);
  });
  return out;
}

inline Dataset make_synthetic_dataset(const SynthSpec& spec, std::uint64_t seed, const FeaturizerParams& p = {},
                                      int threads = 1) {
  auto r = synth_corpus(spec, seed);
  Dataset d;
  d.features = featurize_audio(r.audio, p, threads);
  d.corpus = std::move(r.corpus);
  return d;
}

// ---------------------------------------------------------------------------
// Fold plans

struct Split {
  std::vector<std::size_t> train, dev, test;  // corpus indices
};

struct FoldPlan {
  std::uint64_t seed = 0;
  std::vector<Split> splits;
};

// Shuffle once; split i tests on shuffled positions [i*k, (i+1)*k) with
// k = floor(N / folds), draws k dev utterances from the other N - k, and
// trains on the rest. The N mod folds utterances past the last test block
// are never tested; they land in train (or dev) of every split.
inline FoldPlan make_folds(std::size_t n, std::uint64_t seed, std::size_t folds = 10) {
  if (folds < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
  if (n < 2 * folds)
    throw std::invalid_argument("make_folds: corpus of " + std::to_string(n) + " utterances is too small for " +
                                std::to_string(folds) + " folds");
  const Rng root(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng shuf = root.split("shuffle");
  shuf.shuffle(order);
  const std::size_t k = n / folds;
  FoldPlan plan;
  plan.seed = seed;
  for (std::size_t f = 0; f < folds; ++f) {
    Split s;
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(f * k),
                  order.begin() + static_cast<std::ptrdiff_t>((f + 1) * k));
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i)
      if (i < f * k || i >= (f + 1) * k) rest.push_back(order[i]);
    Rng dev_rng = root.split("dev").split(f);
    dev_rng.shuffle(rest);
    s.dev.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(k));
    s.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(k), rest.end());
    std::sort(s.dev.begin(), s.dev.end());
    std::sort(s.train.begin(), s.train.end());
    plan.splits.push_back(std::move(s));
  }
  return plan;
}

inline FoldPlan make_folds(const Corpus& c, std::uint64_t seed, std::size_t folds = 10) {
  return make_folds(c.size(), seed, folds);
}

// Counts every leakage check performed, so a harness can show the checks ran.
inline std::atomic<std::uint64_t>& leakage_checks() {
  static std::atomic<std::uint64_t> n{0};
  return n;
}

inline void check_split(const Corpus& c, const Split& s) {
  ++leakage_checks();
  std::unordered_set<std::string> seen;
  for (auto i : s.train) seen.insert(c.utterances.at(i).id);
  for (auto i : s.dev)
    if (!seen.insert(c.utterances.at(i).id).second)
      throw LeakageError("utterance '" + c.utterances[i].id + "' is in both train and dev");
  for (auto i : s.test)
    if (seen.count(c.utterances.at(i).id))
      throw LeakageError("test utterance '" + c.utterances[i].id + "' also appears in train or dev");
  if (s.train.empty() || s.dev.empty() || s.test.empty()) throw LeakageError("split has an empty partition");
}

// ---------------------------------------------------------------------------
// Prepared split: normalized, ablated examples with a train-only vocabulary

struct PreparedSplit {
  std::vector<Example> train, dev, test;
  std::vector<std::vector<char>> test_deviation;  // gold != content-word mask
  std::vector<std::vector<int>> test_content;     // content-word predictions
  int majority = 1;                               // majority training label
  NormStats norm;
  Vocabulary vocab;
};

inline PreparedSplit prepare_split(const Dataset& d, const Split& s, const ModelConfig& cfg,
                                   const Ablation& ablation = {}) {
  check_split(d.corpus, s);
  PreparedSplit p;
  const Corpus train = d.corpus.subset(s.train);
  p.majority = majority_predict(train);
  if (cfg.uses_text()) p.vocab = build_vocab(train, static_cast<std::size_t>(cfg.vocab_size));
  if (cfg.uses_speech()) {
    if (!d.has_features()) throw ModelError("speech model requested but the dataset has no acoustic features");
    std::vector<const FeatureMatrix*> train_feats;
    std::size_t train_frames = 0;
    for (auto i : s.train) {
      train_feats.push_back(&d.features.at(i));
      train_frames += d.features[i].n();
    }
    p.norm = fit_norm_ptrs(train_feats);
    ++leakage_checks();
    if (p.norm.frames != train_frames) throw LeakageError("normalization statistics were not fitted on train only");
  }
  auto build = [&](const std::vector<std::size_t>& idx) {
    std::vector<Example> out;
    for (auto i : idx) {
      const Utterance& u = d.corpus.utterances[i];
      std::optional<FeatureMatrix> fm;
      if (cfg.uses_speech()) fm = ablate(apply_norm(d.features[i], p.norm), ablation);
      out.push_back(make_example(u, fm ? &*fm : nullptr, cfg.uses_text() ? &p.vocab : nullptr));
    }
    return out;
  };
  p.train = build(s.train);
  p.dev = build(s.dev);
  p.test = build(s.test);
  for (auto i : s.test) {
    p.test_deviation.push_back(deviation_mask(d.corpus.utterances[i], d.stopwords));
    p.test_content.push_back(content_word_predict(d.corpus.utterances[i], d.stopwords));
  }
  return p;
}

// ---------------------------------------------------------------------------
// One training run

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = -1.0;  // -1 when not evaluated
  Confusion dev, test, test_deviation;
};

struct RunResult {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int selected_epoch = 0;  // argmax dev accuracy, earliest on ties
  bool failed = false;
  std::string error;
  std::size_t parameters = 0;
  std::size_t span_repairs = 0;  // over the train/dev/test spans of this split
  double content_word_test_acc = 0.0;
  double majority_test_acc = 0.0;

  const EpochRecord& selected() const { return epochs.at(static_cast<std::size_t>(selected_epoch - 1)); }
  double dev_acc() const { return selected().dev.accuracy(); }
  double test_acc() const { return selected().test.accuracy(); }
};

// Earliest epoch with the most correct dev tokens.
inline int select_epoch(const std::vector<EpochRecord>& epochs) {
  if (epochs.empty()) throw std::invalid_argument("select_epoch: no epochs");
  std::size_t best = 0;
  for (std::size_t e = 1; e < epochs.size(); ++e)
    if (epochs[e].dev.correct() > epochs[best].dev.correct()) best = e;
  return static_cast<int>(best) + 1;
}

template <class T>
Confusion evaluate(const Model<T>& model, const std::vector<Example>& examples,
                   const std::vector<std::vector<char>>* masks = nullptr) {
  Confusion c;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::vector<int> pred;
    for (const auto& p : model.predict(examples[i])) pred.push_back(p.label);
    c.add(pred, examples[i].labels, masks ? (*masks)[i] : std::vector<char>{});
  }
  return c;
}

struct TrainOptions {
  bool eval_train = false;
  // Stop after this many epochs even if the config asks for more (0 = no cap).
  int max_epochs = 0;
  LogFn log;
};

// Trains a fresh model on p.train, evaluating dev and test after every
// epoch. When best_params is given it receives the parameters of the
// selected epoch. Non-finite values mark the run failed instead of throwing.
template <class T = float>
RunResult train_run(const PreparedSplit& p, const ModelConfig& cfg, std::uint64_t seed, const TrainOptions& opt = {},
                    std::size_t fold = 0, Model<T>* best_model = nullptr) {
  RunResult r;
  r.fold = fold;
  r.seed = seed;
  Model<T> model(cfg, p.vocab, seed);
  r.parameters = model.parameter_count();
  if (!cfg.embeddings_path.empty()) model.load_embeddings(cfg.embeddings_path);
  {
    Confusion cw, maj;
    for (std::size_t i = 0; i < p.test.size(); ++i) {
      cw.add(p.test_content[i], p.test[i].labels);
      maj.add(std::vector<int>(p.test[i].size(), p.majority), p.test[i].labels);
    }
    r.content_word_test_acc = cw.accuracy();
    r.majority_test_acc = maj.accuracy();
  }
  // A network that downsamples past the token count cannot be trained on this split.
  try {
    if (cfg.uses_speech())
      for (const auto* set : {&p.train, &p.dev, &p.test})
        for (const auto& ex : *set) r.span_repairs += downsample_spans(ex.frame_spans, ex.n_frames, cfg, ex.id).repairs;
  } catch (const SpanError& e) {
    r.failed = true;
    r.error = "fold " + std::to_string(fold) + " seed " + std::to_string(seed) + ": " + e.what();
    if (opt.log) opt.log("run failed: " + r.error);
    return r;
  }

  auto params = model.params().pointers();
  nn::AdamState<T> adam(nn::AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const Rng root = Rng(seed).split("train");
  std::vector<std::size_t> order(p.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const int epochs = opt.max_epochs > 0 ? std::min(opt.max_epochs, cfg.epochs) : cfg.epochs;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::optional<nn::ParameterSet<T>> best;

  try {
    for (int epoch = 1; epoch <= epochs; ++epoch) {
      Rng order_rng = root.split("order").split(static_cast<std::uint64_t>(epoch));
      order_rng.shuffle(order);
      const Rng drop_root = root.split("dropout").split(static_cast<std::uint64_t>(epoch));
      double loss_sum = 0.0;
      std::size_t loss_tokens = 0;
      for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
        const std::size_t b1 = std::min(order.size(), b0 + batch);
        // Padding-free batching: per-utterance gradients accumulate and the
        // loss is averaged over the real tokens of the whole batch.
        double denom = 0.0;
        for (std::size_t j = b0; j < b1; ++j) denom += static_cast<double>(p.train[order[j]].size());
        nn::zero_grad<T>(params);
        for (std::size_t j = b0; j < b1; ++j) {
          const Example& ex = p.train[order[j]];
          Rng drop = drop_root.split(static_cast<std::uint64_t>(order[j]));
          const std::size_t m = ex.size();
          if (cfg.context == Context::full_utterance) {
            nn::Tape<T> tp;
            auto z = model.logits(tp, ex, 0, m - 1, &drop);
            auto loss = nn::softmax_xent(z, ex.labels, {}, denom);
            loss_sum += static_cast<double>(loss.value()[0]) * denom;
            tp.backward(loss);
          } else {
            for (std::size_t k = 0; k < m; ++k) {
              const auto [first, last] = model.window(k, m);
              nn::Tape<T> tp;
              auto z = model.logits(tp, ex, first, last, &drop);
              std::vector<int> labels(ex.labels.begin() + static_cast<std::ptrdiff_t>(first),
                                      ex.labels.begin() + static_cast<std::ptrdiff_t>(last + 1));
              std::vector<char> centre(last - first + 1, 0);
              centre[k - first] = 1;
              auto loss = nn::softmax_xent(z, labels, centre, denom);
              loss_sum += static_cast<double>(loss.value()[0]) * denom;
              tp.backward(loss);
            }
          }
          loss_tokens += m;
        }
        if (cfg.clip_norm > 0.0) nn::clip_grad_norm<T>(params, cfg.clip_norm);
        nn::adam_step<T>(params, adam);
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(loss_tokens, 1));
      if (!std::isfinite(rec.train_loss)) throw nn::NumericError("training loss is not finite");
      if (opt.eval_train) rec.train_acc = evaluate(model, p.train).accuracy();
      rec.dev = evaluate(model, p.dev);
      rec.test = evaluate(model, p.test);
      rec.test_deviation = evaluate(model, p.test, &p.test_deviation);
      r.epochs.push_back(rec);
      const int sel = select_epoch(r.epochs);
      if (best_model && sel == epoch) best = model.params();
      if (opt.log) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "fold %zu seed %llu epoch %d loss %.4f dev %.4f test %.4f", fold,
                      static_cast<unsigned long long>(seed), epoch, rec.train_loss, rec.dev.accuracy(),
                      rec.test.accuracy());
        opt.log(buf);
      }
    }
  } catch (const nn::NumericError& e) {
    r.failed = true;
    r.error = "fold " + std::to_string(fold) + " seed " + std::to_string(seed) + " epoch " +
              std::to_string(r.epochs.size() + 1) + ": " + e.what();
    if (opt.log) opt.log("run failed: " + r.error);
  }
  if (!r.epochs.empty()) r.selected_epoch = select_epoch(r.epochs);
  if (r.epochs.empty()) r.failed = true;
  if (best_model && best) {
    *best_model = model;
    best_model->params() = *best;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Aggregate {
  std::size_t runs = 0, failed = 0;
  double dev_mean = 0.0, dev_std = 0.0;
  double test_mean = 0.0, test_std = 0.0;
  double content_word_mean = 0.0, majority_mean = 0.0;
  Confusion test_pooled, deviation_pooled;
  std::size_t span_repairs = 0;
};

// Sample mean and standard deviation (n - 1); std is 0 for fewer than 2.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline Aggregate aggregate(const std::vector<RunResult>& runs) {
  Aggregate a;
  std::vector<double> dev, test, cw, maj;
  for (const auto& r : runs) {
    if (r.failed) {
      ++a.failed;
      continue;
    }
    ++a.runs;
    dev.push_back(r.dev_acc());
    test.push_back(r.test_acc());
    cw.push_back(r.content_word_test_acc);
    maj.push_back(r.majority_test_acc);
    a.test_pooled.add(r.selected().test);
    a.deviation_pooled.add(r.selected().test_deviation);
    a.span_repairs += r.span_repairs;
  }
  std::tie(a.dev_mean, a.dev_std) = mean_std(dev);
  std::tie(a.test_mean, a.test_std) = mean_std(test);
  a.content_word_mean = mean_std(cw).first;
  a.majority_mean = mean_std(maj).first;
  return a;
}

inline nlohmann::json to_json(const Aggregate& a) {
  return {{"runs", a.runs},
          {"failed_runs", a.failed},
          {"dev_acc_mean", a.dev_mean},
          {"dev_acc_std", a.dev_std},
          {"test_acc_mean", a.test_mean},
          {"test_acc_std", a.test_std},
          {"test_f1_accented", a.test_pooled.f1(1)},
          {"test_f1_unaccented", a.test_pooled.f1(0)},
          {"deviation_subset_acc", a.deviation_pooled.accuracy()},
          {"deviation_subset_tokens", a.deviation_pooled.total()},
          {"content_word_test_acc", a.content_word_mean},
          {"majority_test_acc", a.majority_mean},
          {"span_repairs", a.span_repairs}};
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CrossvalOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t max_folds = 0;  // 0 = every split in the plan
  int threads = 1;
  Ablation ablation;
  TrainOptions train;
};

struct CrossvalReport {
  ModelConfig config;
  std::string ablation = "all";
  std::vector<RunResult> runs;  // fold-major, then seed
  Aggregate summary;
};

inline CrossvalReport run_crossval(const Dataset& d, const ModelConfig& cfg, const FoldPlan& plan,
                                   const CrossvalOptions& opt = {}) {
  cfg.validate();
  if (opt.seeds.empty()) throw std::invalid_argument("run_crossval: no seeds");
  const std::size_t folds = opt.max_folds ? std::min(opt.max_folds, plan.splits.size()) : plan.splits.size();
  const std::size_t ns = opt.seeds.size();
  CrossvalReport rep;
  rep.config = cfg;
  rep.ablation = opt.ablation.name();
  rep.runs.resize(folds * ns);
  parallel_for(folds * ns, opt.threads, [&](std::size_t job) {
    const std::size_t f = job / ns;
    const PreparedSplit p = prepare_split(d, plan.splits[f], cfg, opt.ablation);
    rep.runs[job] = train_run<float>(p, cfg, opt.seeds[job % ns], opt.train, f);
  });
  rep.summary = aggregate(rep.runs);
  return rep;
}

// ---------------------------------------------------------------------------
// Speaker-independent evaluation

struct SpeakerRow {
  std::string speaker;
  std::size_t test_utterances = 0;
  Aggregate result;
};

// Leave-one-speaker-out: test on one speaker, dev = 10% of the others
// (at least one utterance), train on the rest.
inline std::vector<Split> speaker_splits(const Corpus& c, std::uint64_t seed, std::vector<std::string>* names) {
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < c.size(); ++i) by_speaker[c.utterances[i].speaker].push_back(i);
  if (by_speaker.size() < 2) throw std::invalid_argument("speaker-independent evaluation needs at least 2 speakers");
  std::vector<Split> out;
  for (const auto& [spk, idx] : by_speaker) {
    Split s;
    s.test = idx;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.utterances[i].speaker != spk) rest.push_back(i);
    Rng rng = Rng(seed).split("speaker-dev").split(spk);
    rng.shuffle(rest);
    const std::size_t ndev = std::max<std::size_t>(1, rest.size() / 10);
    s.dev.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(ndev));
    s.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(ndev), rest.end());
    std::sort(s.dev.begin(), s.dev.end());
    std::sort(s.train.begin(), s.train.end());
    for (auto i : s.test)
      if (std::binary_search(s.train.begin(), s.train.end(), i) || std::binary_search(s.dev.begin(), s.dev.end(), i))
        throw LeakageError("held-out speaker '" + spk + "' leaked into train/dev");
    if (names) names->push_back(spk);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<SpeakerRow> speaker_independent(const Dataset& d, const ModelConfig& cfg, std::uint64_t split_seed,
                                                   const CrossvalOptions& opt = {}) {
  std::vector<std::string> names;
  FoldPlan plan;
  plan.seed = split_seed;
  plan.splits = speaker_splits(d.corpus, split_seed, &names);
  CrossvalOptions o = opt;
  o.max_folds = 0;
  const auto rep = run_crossval(d, cfg, plan, o);
  std::vector<SpeakerRow> rows;
  const std::size_t ns = o.seeds.size();
  for (std::size_t s = 0; s < names.size(); ++s) {
    SpeakerRow row;
    row.speaker = names[s];
    row.test_utterances = plan.splits[s].test.size();
    row.result = aggregate({rep.runs.begin() + static_cast<std::ptrdiff_t>(s * ns),
                            rep.runs.begin() + static_cast<std::ptrdiff_t>((s + 1) * ns)});
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Feature-group ablation grid

inline std::vector<Ablation> standard_ablations() {
  using G = FeatureGroup;
  return {Ablation::none(),
          Ablation::drop({G::pitch}),
          Ablation::drop({G::intensity}),
          Ablation::drop({G::voicing}),
          Ablation::drop({G::pitch, G::intensity}),
          Ablation::drop({G::pitch, G::voicing}),
          Ablation::drop({G::intensity, G::voicing})};
}

struct AblationRow {
  Ablation ablation;
  Context context = Context::full_utterance;
  bool use_lstm = true;
  Aggregate result;
};

struct AblationOptions {
  std::vector<Ablation> ablations = standard_ablations();
  std::vector<Context> contexts = {Context::full_utterance, Context::three_token};
  std::vector<bool> lstm = {true, false};
};

inline std::vector<AblationRow> ablation_suite(const Dataset& d, const ModelConfig& base, const FoldPlan& plan,
                                               const CrossvalOptions& opt = {}, const AblationOptions& grid = {}) {
  if (!base.uses_speech()) throw ModelError("ablation suite needs a speech or speech_text model");
  std::vector<AblationRow> rows;
  for (bool lstm : grid.lstm) {
    for (Context ctx : grid.contexts) {
      for (const auto& a : grid.ablations) {
        ModelConfig cfg = base;
        cfg.context = ctx;
        cfg.use_lstm = lstm;
        CrossvalOptions o = opt;
        o.ablation = a;
        AblationRow row{a, ctx, lstm, run_crossval(d, cfg, plan, o).summary};
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Vocabulary-size ablation for the text-only model

inline const std::vector<std::size_t>& default_vocab_sizes() {
  static const std::vector<std::size_t> s = {3000, 1000, 500, 100, 50, 10, 5};
  return s;
}

struct VocabRow {
  std::size_t size = 0;
  Aggregate result;
};

inline std::vector<VocabRow> vocab_shrink_suite(const Dataset& d, const ModelConfig& base, const FoldPlan& plan,
                                                const CrossvalOptions& opt = {},
                                                const std::vector<std::size_t>& sizes = default_vocab_sizes()) {
  if (!base.uses_text()) throw ModelError("vocabulary ablation needs a text or speech_text model");
  std::vector<VocabRow> rows;
  for (auto size : sizes) {
    if (size < 1) throw std::invalid_argument("vocabulary size must be at least 1");
    ModelConfig cfg = base;
    cfg.input_mode = InputMode::text;
    cfg.vocab_size = static_cast<int>(size);
    rows.push_back({size, run_crossval(d, cfg, plan, opt).summary});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct HparamSpace {
  std::vector<int> cnn_layers = {2, 3, 4};
  std::vector<int> lstm_layers = {2, 3};
  std::vector<double> dropout = {0.0, 0.2, 0.5, 0.7};
  std::vector<double> weight_decay = {0.0, 1e-5, 1e-4};
  std::vector<int> filter_width = {9, 11, 13, 15, 17, 19, 21, 23};
  std::vector<nn::Pooling> pooling = {nn::Pooling::sum, nn::Pooling::max};

  std::size_t size() const {
    return cnn_layers.size() * lstm_layers.size() * dropout.size() * weight_decay.size() * filter_width.size() *
           pooling.size();
  }

  // Mixed-radix decoding of a point index. Channel widths follow the base
  // pattern: first layer from base.cnn_channels.front(), the rest from back().
  ModelConfig at(std::size_t index, const ModelConfig& base) const {
    if (index >= size()) throw std::out_of_range("hyperparameter index out of range");
    ModelConfig c = base;
    auto take = [&](const auto& values) {
      const auto& v = values[index % values.size()];
      index /= values.size();
      return v;
    };
    c.pooling = take(pooling);
    c.cnn_kernel_width = take(filter_width);
    c.weight_decay = take(weight_decay);
    c.dropout = take(dropout);
    c.lstm_layers = take(lstm_layers);
    c.cnn_layers = take(cnn_layers);
    const int first = base.cnn_channels.front(), rest = base.cnn_channels.back();
    c.cnn_channels.assign(static_cast<std::size_t>(c.cnn_layers), rest);
    c.cnn_channels[0] = first;
    return c;
  }
};

struct HparamRow {
  std::size_t index = 0;
  ModelConfig config;
  Aggregate result;
};

struct HparamReport {
  std::vector<HparamRow> rows;
  std::size_t best = 0;  // position in rows
  // Over the per-configuration mean dev accuracies.
  double mean = 0.0, variance = 0.0, stderr_ = 0.0;
};

// `budget` distinct points drawn uniformly without replacement.
inline std::vector<std::size_t> sample_hparams(const HparamSpace& space, std::size_t budget, std::uint64_t seed) {
  if (budget < 1 || budget > space.size())
    throw std::invalid_argument("hyperparameter budget must lie in [1, " + std::to_string(space.size()) + "]");
  std::vector<std::size_t> idx(space.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng(seed).split("hparam");
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(budget);
  return idx;
}

// Sample variance (n - 1) and standard error sqrt(var / n) of x.
inline std::pair<double, double> variance_stderr(const std::vector<double>& x) {
  const auto [m, sd] = mean_std(x);
  const double var = sd * sd;
  return {var, x.empty() ? 0.0 : std::sqrt(var / static_cast<double>(x.size()))};
}

inline HparamReport hparam_search(const Dataset& d, const ModelConfig& base, const HparamSpace& space,
                                  std::size_t budget, const FoldPlan& plan, std::uint64_t sample_seed,
                                  const CrossvalOptions& opt = {}) {
  HparamReport rep;
  std::vector<double> devs;
  for (auto index : sample_hparams(space, budget, sample_seed)) {
    ModelConfig cfg = space.at(index, base);
    HparamRow row{index, cfg, run_crossval(d, cfg, plan, opt).summary};
    devs.push_back(row.result.dev_mean);
    rep.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].result.dev_mean > rep.rows[rep.best].result.dev_mean) rep.best = i;
  rep.mean = mean_std(devs).first;
  std::tie(rep.variance, rep.stderr_) = variance_stderr(devs);
  return rep;
}

// ---------------------------------------------------------------------------
// CNN width / depth sweep

struct SweepRow {
  std::string sweep;  // "width" or "depth"
  int value = 0;
  Aggregate result;
};

inline std::vector<SweepRow> cnn_sweep(const Dataset& d, const ModelConfig& base, const FoldPlan& plan,
                                       const CrossvalOptions& opt = {},
                                       const std::vector<int>& widths = {9, 11, 13, 15, 17, 19, 21, 23},
                                       const std::vector<int>& depths = {1, 2, 3, 4, 5, 6}) {
  if (!base.uses_speech()) throw ModelError("CNN sweep needs a speech model");
  auto with_depth = [&](int depth) {
    ModelConfig c = base;
    c.cnn_layers = depth;
    c.cnn_channels.assign(static_cast<std::size_t>(depth), base.cnn_channels.back());
    c.cnn_channels[0] = base.cnn_channels.front();
    return c;
  };
  std::vector<SweepRow> rows;
  for (int w : widths) {
    ModelConfig c = with_depth(3);
    c.cnn_kernel_width = w;
    rows.push_back({"width", w, run_crossval(d, c, plan, opt).summary});
  }
  for (int depth : depths) {
    ModelConfig c = with_depth(depth);
    c.cnn_kernel_width = 11;
    rows.push_back({"depth", depth, run_crossval(d, c, plan, opt).summary});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports. Numbers are printed with fixed precision so reruns compare
// byte-for-byte.

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline const char* kCrossvalHeader = "fold,seed,epoch,dev_acc,test_acc\n";

inline std::string crossval_csv(const std::vector<RunResult>& runs) {
  std::string s = kCrossvalHeader;
  for (const auto& r : runs)
    for (const auto& e : r.epochs)
      s += std::to_string(r.fold) + "," + std::to_string(r.seed) + "," + std::to_string(e.epoch) + "," +
           fmt(e.dev.accuracy()) + "," + fmt(e.test.accuracy()) + "\n";
  return s;
}

inline nlohmann::json runs_json(const std::vector<RunResult>& runs) {
  auto arr = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json j = {{"fold", r.fold}, {"seed", r.seed}, {"failed", r.failed}, {"parameters", r.parameters}};
    if (r.failed) j["error"] = r.error;
    if (!r.epochs.empty()) {
      j["selected_epoch"] = r.selected_epoch;
      j["dev_acc"] = r.dev_acc();
      j["test_acc"] = r.test_acc();
      j["test_f1_accented"] = r.selected().test.f1(1);
      j["test_f1_unaccented"] = r.selected().test.f1(0);
    }
    j["content_word_test_acc"] = r.content_word_test_acc;
    j["majority_test_acc"] = r.majority_test_acc;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = "condition,kept,context,arch,dev_acc,test_acc,test_std,runs,failed\n";
  for (const auto& r : rows)
    s += r.ablation.name() + "," + r.ablation.kept() + "," + context_name(r.context) + "," +
         (r.use_lstm ? "cnn_lstm" : "cnn") + "," + fmt(r.result.dev_mean) + "," + fmt(r.result.test_mean) + "," +
         fmt(r.result.test_std) + "," + std::to_string(r.result.runs) + "," + std::to_string(r.result.failed) + "\n";
  return s;
}

inline std::string vocab_csv(const std::vector<VocabRow>& rows) {
  std::string s = "size,dev_acc,test_acc,test_std,runs\n";
  for (const auto& r : rows)
    s += std::to_string(r.size) + "," + fmt(r.result.dev_mean) + "," + fmt(r.result.test_mean) + "," +
         fmt(r.result.test_std) + "," + std::to_string(r.result.runs) + "\n";
  return s;
}

inline std::string hparam_csv(const HparamReport& rep) {
  std::string s = "index,cnn_layers,lstm_layers,dropout,weight_decay,filter_width,pooling,dev_acc,dev_std,test_acc\n";
  for (const auto& r : rep.rows) {
    const auto& c = r.config;
    s += std::to_string(r.index) + "," + std::to_string(c.cnn_layers) + "," + std::to_string(c.lstm_layers) + "," +
         fmt(c.dropout) + "," + fmt(c.weight_decay) + "," + std::to_string(c.cnn_kernel_width) + "," +
         pooling_name(c.pooling) + "," + fmt(r.result.dev_mean) + "," + fmt(r.result.dev_std) + "," +
         fmt(r.result.test_mean) + "\n";
  }
  return s;
}

inline std::string speaker_csv(const std::vector<SpeakerRow>& rows) {
  std::string s = "speaker,test_utterances,dev_acc,test_acc,f1_accented,f1_unaccented\n";
  for (const auto& r : rows)
    s += r.speaker + "," + std::to_string(r.test_utterances) + "," + fmt(r.result.dev_mean) + "," +
         fmt(r.result.test_mean) + "," + fmt(r.result.test_pooled.f1(1)) + "," + fmt(r.result.test_pooled.f1(0)) +
         "\n";
  return s;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "sweep,value,dev_acc,test_acc,test_std,span_repairs\n";
  for (const auto& r : rows)
    s += r.sweep + "," + std::to_string(r.value) + "," + fmt(r.result.dev_mean) + "," + fmt(r.result.test_mean) +
         "," + fmt(r.result.test_std) + "," + std::to_string(r.result.span_repairs) + "\n";
  return s;
}

// Parsed crossval.csv row, for recomputing selections from the log.
struct EpochLogRow {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  int epoch = 0;
  double dev_acc = 0.0, test_acc = 0.0;
};

inline std::vector<EpochLogRow> parse_crossval_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line + "\n" != kCrossvalHeader) throw std::runtime_error("crossval.csv: unexpected header '" + line + "'");
  std::vector<EpochLogRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochLogRow r;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "%zu,%llu,%d,%lf,%lf", &r.fold, &seed, &r.epoch, &r.dev_acc, &r.test_acc) != 5)
      throw std::runtime_error("crossval.csv: bad row '" + line + "'");
    r.seed = seed;
    out.push_back(r);
  }
  return out;
}

}  // namespace pitchacc
