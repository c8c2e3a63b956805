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

// pitchacc: command-line entry point for every pipeline stage.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pitchacc/config.hpp"

namespace fs = std::filesystem;
using namespace pitchacc;

namespace {

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what) {}
};

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::vector<std::string> sets;
  bool quiet = false;
};

ExperimentConfig resolve_config(const Globals& g) {
  return stage("config", [&] {
    ExperimentConfig c = g.config.empty() ? parse_config("", g.sets) : load_config(g.config, g.sets);
    if (g.seed) c.seed = *g.seed;
    if (g.threads) c.threads = *g.threads;
    if (!g.out.empty()) c.out_dir = g.out;
    c.validate();
    return c;
  });
}

fs::path prepare_out(const ExperimentConfig& c) {
  return stage("output", [&] {
    const fs::path dir(c.out_dir);
    fs::create_directories(dir);
    write_text(dir / "config.toml", to_toml(c, false));
    return dir;
  });
}

LogFn logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
}

Dataset load_dataset(const ExperimentConfig& c, bool need_audio) {
  Dataset d;
  if (!c.stopwords_path.empty())
    d.stopwords = stage("stopwords", [&] { return StopwordList::load(c.stopwords_path); });
  if (c.corpus_path.empty()) {
    auto r = stage("synth", [&] { return synth_corpus(c.synth, c.seed); });
    if (need_audio) d.features = stage("featurize", [&] { return featurize_audio(r.audio, c.featurizer, c.threads); });
    d.corpus = preprocess_text(std::move(r.corpus));
    return d;
  }
  d.corpus = stage("load corpus", [&] {
    Corpus corpus = preprocess_text(load_corpus(c.corpus_path));
    // The corpus rate is whatever the audio says; every file must agree.
    if (need_audio && !corpus.utterances.empty())
      corpus.sample_rate_hz = read_wav(corpus.audio_path(corpus.utterances.front())).sample_rate_hz;
    return corpus;
  });
  if (need_audio) {
    std::optional<fs::path> cache;
    if (!c.feature_cache.empty()) cache = fs::path(c.feature_cache);
    d.features = stage("featurize", [&] { return featurize_corpus(d.corpus, c.featurizer, cache, c.threads); });
  }
  return d;
}

FoldPlan fold_plan(const ExperimentConfig& c, const Dataset& d) {
  return stage("folds", [&] { return make_folds(d.corpus, c.seed, static_cast<std::size_t>(c.folds)); });
}

nlohmann::json summary_header(const ExperimentConfig& c, const std::string& command) {
  return {{"command", command}, {"data_seed", c.seed}, {"model", to_json(c.model)}};
}

void write_summary(const fs::path& dir, const nlohmann::json& j) { write_text(dir / "summary.json", j.dump(2) + "\n"); }

void print_aggregate(const std::string& label, const Aggregate& a) {
  std::printf("%s: dev %.4f +- %.4f  test %.4f +- %.4f  (%zu runs, %zu failed)\n", label.c_str(), a.dev_mean, a.dev_std,
              a.test_mean, a.test_std, a.runs, a.failed);
}

// ---------------------------------------------------------------------------

int cmd_synth(const Globals& g) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto r = stage("synth", [&] { return synth_corpus(c.synth, c.seed); });
  const auto path = stage("write corpus", [&] { return write_synth(r, dir); });
  std::size_t pos = 0;
  for (const auto& u : r.corpus.utterances)
    for (int l : u.labels()) pos += static_cast<std::size_t>(l);
  std::printf("wrote %zu utterances, %zu tokens (%.1f%% accented) to %s\n", r.corpus.size(), r.corpus.token_count(),
              100.0 * static_cast<double>(pos) / static_cast<double>(r.corpus.token_count()), path.string().c_str());
  return 0;
}

int cmd_featurize(const Globals& g) {
  auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  if (c.feature_cache.empty()) c.feature_cache = (dir / "features").string();
  const auto d = load_dataset(c, true);
  std::size_t frames = 0, voiced = 0;
  for (const auto& fm : d.features) {
    frames += fm.n();
    for (std::size_t t = 0; t < fm.n(); ++t) voiced += fm.at(t, 0) > 0.0;
  }
  nlohmann::json j = summary_header(c, "featurize");
  j.erase("model");
  j["featurizer_key"] = c.featurizer.cache_key();
  j["utterances"] = d.corpus.size();
  j["frames"] = frames;
  j["voiced_fraction"] = frames ? static_cast<double>(voiced) / static_cast<double>(frames) : 0.0;
  j["cache_dir"] = c.feature_cache;
  write_summary(dir, j);
  std::printf("featurized %zu utterances, %zu frames into %s\n", d.corpus.size(), frames, c.feature_cache.c_str());
  return 0;
}

int cmd_train(const Globals& g, std::size_t fold) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, c.model.uses_speech());
  const auto plan = fold_plan(c, d);
  if (fold >= plan.splits.size()) throw StageError("folds", "fold " + std::to_string(fold) + " out of range");
  const auto opts = c.crossval_options();
  const auto p = stage("prepare split", [&] { return prepare_split(d, plan.splits[fold], c.model, opts.ablation); });
  Model<float> best(c.model, p.vocab, opts.seeds.front());
  TrainOptions to = opts.train;
  to.log = logger(g);
  const auto r = stage("train", [&] { return train_run<float>(p, c.model, opts.seeds.front(), to, fold, &best); });
  if (r.failed) throw StageError("train", r.error);
  stage("write checkpoint", [&] {
    nlohmann::json extra = {{"norm", to_json(p.norm)},
                            {"ablation", c.ablation},
                            {"data_seed", c.seed},
                            {"folds", c.folds},
                            {"fold", fold},
                            {"selected_epoch", r.selected_epoch}};
    write_text(dir / "model.ckpt", nn::encode_checkpoint(to_checkpoint(best, extra)));
    write_text(dir / "crossval.csv", crossval_csv({r}));
    auto j = summary_header(c, "train");
    j["runs"] = runs_json({r});
    j["summary"] = to_json(aggregate({r}));
    write_summary(dir, j);
  });
  std::printf("fold %zu seed %llu: selected epoch %d, dev %.4f, test %.4f, %zu parameters\n", fold,
              static_cast<unsigned long long>(r.seed), r.selected_epoch, r.dev_acc(), r.test_acc(), r.parameters);
  return 0;
}

int cmd_crossval(const Globals& g) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, c.model.uses_speech());
  const auto plan = fold_plan(c, d);
  auto opts = c.crossval_options();
  opts.train.log = logger(g);
  const auto before = leakage_checks().load();
  const auto rep = stage("crossval", [&] { return run_crossval(d, c.model, plan, opts); });
  stage("write reports", [&] {
    write_text(dir / "crossval.csv", crossval_csv(rep.runs));
    auto j = summary_header(c, "crossval");
    j["ablation"] = rep.ablation;
    j["summary"] = to_json(rep.summary);
    j["runs"] = runs_json(rep.runs);
    j["leakage_checks"] = leakage_checks().load() - before;
    write_summary(dir, j);
  });
  print_aggregate("crossval", rep.summary);
  return 0;
}

int cmd_speaker(const Globals& g) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, c.model.uses_speech());
  auto opts = c.crossval_options();
  opts.train.log = logger(g);
  const auto rows = stage("speaker-indep", [&] { return speaker_independent(d, c.model, c.seed, opts); });
  stage("write reports", [&] {
    write_text(dir / "speaker.csv", speaker_csv(rows));
    auto j = summary_header(c, "speaker-indep");
    for (const auto& r : rows) j["speakers"][r.speaker] = to_json(r.result);
    write_summary(dir, j);
  });
  for (const auto& r : rows) print_aggregate(r.speaker, r.result);
  return 0;
}

int cmd_ablate(const Globals& g) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, true);
  const auto plan = fold_plan(c, d);
  auto opts = c.crossval_options();
  opts.train.log = logger(g);
  AblationOptions grid;
  grid.contexts.clear();
  for (const auto& ctx : c.ablation_contexts) grid.contexts.push_back(parse_context(ctx));
  grid.lstm.clear();
  for (const auto& a : c.ablation_archs) grid.lstm.push_back(a == "cnn_lstm");
  const auto rows = stage("ablate", [&] { return ablation_suite(d, c.model, plan, opts, grid); });
  stage("write reports", [&] {
    write_text(dir / "ablation.csv", ablation_csv(rows));
    auto j = summary_header(c, "ablate");
    for (const auto& r : rows)
      j["rows"].push_back({{"condition", r.ablation.name()},
                           {"context", context_name(r.context)},
                           {"arch", r.use_lstm ? "cnn_lstm" : "cnn"},
                           {"summary", to_json(r.result)}});
    write_summary(dir, j);
  });
  for (const auto& r : rows)
    print_aggregate(r.ablation.name() + " " + context_name(r.context) + (r.use_lstm ? " cnn_lstm" : " cnn"), r.result);
  return 0;
}

int cmd_vocab(const Globals& g) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, false);
  const auto plan = fold_plan(c, d);
  auto opts = c.crossval_options();
  opts.train.log = logger(g);
  std::vector<std::size_t> sizes(c.vocab_sizes.begin(), c.vocab_sizes.end());
  ModelConfig base = c.model;
  base.input_mode = InputMode::text;
  const auto rows = stage("vocab-shrink", [&] { return vocab_shrink_suite(d, base, plan, opts, sizes); });
  stage("write reports", [&] {
    write_text(dir / "vocab.csv", vocab_csv(rows));
    auto j = summary_header(c, "vocab-shrink");
    for (const auto& r : rows) j["rows"].push_back({{"size", r.size}, {"summary", to_json(r.result)}});
    write_summary(dir, j);
  });
  for (const auto& r : rows) print_aggregate("vocab " + std::to_string(r.size), r.result);
  return 0;
}

int cmd_hparam(const Globals& g) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, c.model.uses_speech());
  const auto plan = fold_plan(c, d);
  auto opts = c.crossval_options();
  opts.seeds = c.hparam_seeds;
  opts.max_folds = static_cast<std::size_t>(c.hparam_folds);
  opts.train.log = logger(g);
  const HparamSpace space;
  const auto rep = stage("hparam", [&] {
    return hparam_search(d, c.model, space, static_cast<std::size_t>(c.hparam_budget), plan, c.seed, opts);
  });
  stage("write reports", [&] {
    write_text(dir / "hparam.csv", hparam_csv(rep));
    auto j = summary_header(c, "hparam");
    j["best"] = to_json(rep.rows[rep.best].config);
    j["best_index"] = rep.rows[rep.best].index;
    j["best_dev_acc"] = rep.rows[rep.best].result.dev_mean;
    j["mean_dev_acc"] = rep.mean;
    j["variance"] = rep.variance;
    j["stderr"] = rep.stderr_;
    j["space_size"] = space.size();
    write_summary(dir, j);
  });
  std::printf("best of %zu: index %zu dev %.4f; mean %.4f variance %.6f stderr %.6f\n", rep.rows.size(),
              rep.rows[rep.best].index, rep.rows[rep.best].result.dev_mean, rep.mean, rep.variance, rep.stderr_);
  return 0;
}

int cmd_sweep(const Globals& g) {
  const auto c = resolve_config(g);
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, true);
  const auto plan = fold_plan(c, d);
  auto opts = c.crossval_options();
  opts.train.log = logger(g);
  const auto rows =
      stage("cnn-sweep", [&] { return cnn_sweep(d, c.model, plan, opts, c.sweep_widths, c.sweep_depths); });
  stage("write reports", [&] {
    write_text(dir / "sweep.csv", sweep_csv(rows));
    auto j = summary_header(c, "cnn-sweep");
    for (const auto& r : rows)
      j["rows"].push_back({{"sweep", r.sweep}, {"value", r.value}, {"summary", to_json(r.result)}});
    write_summary(dir, j);
  });
  for (const auto& r : rows) print_aggregate(r.sweep + " " + std::to_string(r.value), r.result);
  return 0;
}

int cmd_baseline(const Globals& g, const std::string& kind_name) {
  const auto c = resolve_config(g);
  const auto kind = stage("config", [&] { return parse_baseline(kind_name); });
  const auto dir = prepare_out(c);
  const auto d = load_dataset(c, kind == BaselineKind::duration_only);
  auto j = summary_header(c, "baseline");
  j["kind"] = kind_name;
  if (kind == BaselineKind::duration_only) {
    ModelConfig m = c.model;
    m.input_mode = InputMode::speech;
    const auto plan = fold_plan(c, d);
    auto opts = c.crossval_options();
    opts.ablation = Ablation::duration();
    opts.train.log = logger(g);
    const auto rep = stage("crossval", [&] { return run_crossval(d, m, plan, opts); });
    stage("write reports", [&] {
      write_text(dir / "crossval.csv", crossval_csv(rep.runs));
      j["model"] = to_json(m);
      j["summary"] = to_json(rep.summary);
      j["runs"] = runs_json(rep.runs);
      write_summary(dir, j);
    });
    print_aggregate("duration-only", rep.summary);
    return 0;
  }
  j.erase("model");
  Confusion corpus_level;
  if (kind == BaselineKind::content_word) {
    for (const auto& u : d.corpus.utterances) {
      const auto pred = content_word_predict(u, d.stopwords);
      corpus_level.add(pred, u.labels());
      std::string line = u.id + ":";
      for (int p : pred) line += " " + std::to_string(p);
      std::printf("%s\n", line.c_str());
    }
  } else {
    const int label = stage("baseline", [&] { return majority_predict(d.corpus); });
    for (const auto& u : d.corpus.utterances) corpus_level.add(std::vector<int>(u.size(), label), u.labels());
    j["majority_label"] = label;
    // Fold-level: majority of each training split, scored on its test split.
    if (d.corpus.size() >= 2 * static_cast<std::size_t>(c.folds)) {
      const auto plan = fold_plan(c, d);
      std::vector<double> accs;
      for (const auto& s : plan.splits) {
        const int l = majority_predict(d.corpus.subset(s.train));
        Confusion f;
        for (auto i : s.test) f.add(std::vector<int>(d.corpus.utterances[i].size(), l), d.corpus.utterances[i].labels());
        accs.push_back(f.accuracy());
      }
      j["fold_accuracy_mean"] = mean_std(accs).first;
      std::printf("fold-level accuracy %.6f\n", mean_std(accs).first);
    }
  }
  j["accuracy"] = corpus_level.accuracy();
  j["f1_accented"] = corpus_level.f1(1);
  j["f1_unaccented"] = corpus_level.f1(0);
  j["tokens"] = corpus_level.total();
  stage("write reports", [&] { write_summary(dir, j); });
  std::printf("accuracy %.6f (%zu/%zu)  f1 accented %.4f unaccented %.4f\n", corpus_level.accuracy(),
              corpus_level.correct(), corpus_level.total(), corpus_level.f1(1), corpus_level.f1(0));
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& split) {
  const auto c = resolve_config(g);
  nlohmann::json meta;
  const auto model = stage("load checkpoint", [&] {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + checkpoint);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_checkpoint<float>(nn::decode_checkpoint(ss.str()), &meta);
  });
  const ModelConfig& m = model.config();
  const auto d = load_dataset(c, m.uses_speech());
  std::vector<std::size_t> idx;
  stage("select split", [&] {
    if (split == "all") {
      for (std::size_t i = 0; i < d.corpus.size(); ++i) idx.push_back(i);
      return;
    }
    const auto plan = make_folds(d.corpus, meta.at("data_seed").get<std::uint64_t>(), meta.at("folds").get<std::size_t>());
    const auto& s = plan.splits.at(meta.at("fold").get<std::size_t>());
    if (split == "train") idx = s.train;
    else if (split == "dev") idx = s.dev;
    else if (split == "test") idx = s.test;
    else throw std::invalid_argument("unknown split '" + split + "' (all, train, dev, test)");
  });
  Confusion conf, dev_subset;
  stage("evaluate", [&] {
    const NormStats norm = m.uses_speech() ? norm_stats_from_json(meta.at("norm")) : NormStats{};
    const Ablation ab = ExperimentConfig::parse_ablation(meta.value("ablation", std::string("all")));
    for (auto i : idx) {
      const Utterance& u = d.corpus.utterances[i];
      std::optional<FeatureMatrix> fm;
      if (m.uses_speech()) fm = ablate(apply_norm(d.features[i], norm), ab);
      const auto ex = make_example(u, fm ? &*fm : nullptr, m.uses_text() ? &model.vocab() : nullptr);
      std::vector<int> pred;
      for (const auto& p : model.predict(ex)) pred.push_back(p.label);
      conf.add(pred, ex.labels);
      dev_subset.add(pred, ex.labels, deviation_mask(u, d.stopwords));
    }
  });
  std::printf("%zu utterances, %zu tokens\naccuracy %.6f\nf1 accented %.6f\nf1 unaccented %.6f\n"
              "deviation subset accuracy %.6f (%zu tokens)\n",
              idx.size(), conf.total(), conf.accuracy(), conf.f1(1), conf.f1(0), dev_subset.accuracy(),
              dev_subset.total());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pitchacc: pitch accent detection from speech and text"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config (TOML subset)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Data seed: synthetic corpus and fold plan (overrides experiment.seed)");
  app.add_option("--out", g.out, "Output directory (overrides output.dir)");
  app.add_option("--threads", g.threads, "Parallel runs (overrides experiment.threads)")->check(CLI::PositiveNumber);
  app.add_option("--set", g.sets, "Override one config key: section.key=value (repeatable)");
  app.add_flag("--quiet", g.quiet, "Suppress per-epoch progress on stderr");

  std::function<int()> action;
  app.add_subcommand("synth", "Generate a synthetic corpus (WAV + JSONL)")->callback([&] {
    action = [&] { return cmd_synth(g); };
  });
  app.add_subcommand("featurize", "Extract acoustic features into a cache")->callback([&] {
    action = [&] { return cmd_featurize(g); };
  });
  std::size_t fold = 0;
  auto* train = app.add_subcommand("train", "Train one model on one fold and save a checkpoint");
  train->add_option("--fold", fold, "Split index in the fold plan");
  train->callback([&] { action = [&] { return cmd_train(g, fold); }; });
  app.add_subcommand("crossval", "Cross-validated training over folds and seeds")->callback([&] {
    action = [&] { return cmd_crossval(g); };
  });
  app.add_subcommand("speaker-indep", "Leave-one-speaker-out evaluation")->callback([&] {
    action = [&] { return cmd_speaker(g); };
  });
  app.add_subcommand("ablate", "Feature-group ablation grid")->callback([&] {
    action = [&] { return cmd_ablate(g); };
  });
  app.add_subcommand("vocab-shrink", "Text-only model over shrinking vocabularies")->callback([&] {
    action = [&] { return cmd_vocab(g); };
  });
  app.add_subcommand("hparam", "Random hyperparameter search")->callback([&] {
    action = [&] { return cmd_hparam(g); };
  });
  app.add_subcommand("cnn-sweep", "CNN filter width and depth sweep")->callback([&] {
    action = [&] { return cmd_sweep(g); };
  });
  std::string kind;
  auto* base = app.add_subcommand("baseline", "Majority, content-word or duration-only baseline");
  base->add_option("--kind", kind, "majority | content-word | duration-only")->required();
  base->callback([&] { action = [&] { return cmd_baseline(g, kind); }; });
  std::string checkpoint, split = "all";
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a corpus split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "all | train | dev | test (the checkpoint's fold)");
  ev->callback([&] { action = [&] { return cmd_eval(g, checkpoint, split); }; });

  CLI11_PARSE(app, argc, argv);
  try {
    return action();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pitchacc %s: %s\n", app.get_subcommands().front()->get_name().c_str(), e.what());
    return 1;
  }
}
