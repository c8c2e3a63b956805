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

#include "pitchacc/baselines.hpp"
#include "pitchacc/rng.hpp"
#include "pitchacc/synth.hpp"

using namespace pitchacc;
using Catch::Approx;

namespace {

Utterance words_utt(const std::vector<std::string>& words, const std::vector<int>& labels) {
  Utterance u;
  u.id = "u";
  for (std::size_t i = 0; i < words.size(); ++i) u.tokens.push_back({words[i], 0.3 * i, 0.3 * i + 0.2, labels[i]});
  return u;
}

Corpus label_corpus(std::size_t positives, std::size_t total, std::size_t per_utt = 100) {
  Corpus c;
  std::size_t made = 0, pos = 0;
  for (int k = 0; made < total; ++k) {
    Utterance u;
    u.id = "u" + std::to_string(k);
    for (std::size_t j = 0; j < per_utt && made < total; ++j, ++made) {
      const int l = pos < positives ? 1 : 0;
      pos += static_cast<std::size_t>(l);
      u.tokens.push_back({"w", 0.3 * j, 0.3 * j + 0.2, l});
    }
    c.utterances.push_back(std::move(u));
  }
  return c;
}

double corpus_accuracy_constant(const Corpus& c, int label) {
  Confusion conf;
  for (const auto& u : c.utterances) conf.add(std::vector<int>(u.size(), label), u.labels());
  return conf.accuracy();
}

}  // namespace

TEST_CASE("majority baseline", "[baselines]") {
  const Corpus burnc_like = label_corpus(15544, 28489);
  const int label = majority_predict(burnc_like);
  CHECK(label == 1);
  CHECK(corpus_accuracy_constant(burnc_like, label) == Approx(0.5456).margin(1e-4));
  CHECK(majority_predict(label_corpus(5, 10)) == 1);
  const Corpus zeros = label_corpus(0, 40);
  CHECK(majority_predict(zeros) == 0);
  CHECK(corpus_accuracy_constant(zeros, 0) == 1.0);
  CHECK_THROWS(majority_predict(Corpus{}));
}

TEST_CASE("content-word baseline", "[baselines]") {
  const auto sw = StopwordList::english();
  const auto a = words_utt({"but", "that", "would", "require", "the", "union"}, {0, 1, 0, 1, 0, 1});
  const auto b = words_utt({"she", "agrees", "with", "Mary", "Conroy"}, {0, 1, 0, 0, 1});
  CHECK(content_word_predict(a, sw) == std::vector<int>{0, 0, 0, 1, 0, 1});
  CHECK(content_word_predict(b, sw) == std::vector<int>{0, 1, 0, 1, 1});
  CHECK(accuracy(content_word_predict(b, sw), b.labels()) == Approx(0.8));
  CHECK(content_word_predict(b, StopwordList{}) == std::vector<int>(5, 1));
  CHECK(content_word_predict(b, sw) == content_word_mask(b, sw));

  SynthSpec spec;
  spec.n_utterances = 30;
  spec.p_content_accented = 1.0;
  spec.p_function_accented = 0.0;
  Confusion c;
  for (const auto& u : synth_corpus(spec, 4).corpus.utterances) c.add(content_word_predict(u, sw), u.labels());
  CHECK(c.accuracy() == 1.0);
}

TEST_CASE("accuracy and F1", "[baselines][metrics]") {
  CHECK(accuracy({0, 1, 0, 1}, {0, 1, 1, 1}) == 0.75);
  CHECK(accuracy({1, 0, 1}, {1, 0, 1}) == 1.0);
  CHECK_THROWS_AS(accuracy({1, 0}, {1}), std::invalid_argument);

  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<int> p(n), g(n);
    std::vector<char> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(2));
      g[i] = static_cast<int>(rng.below(2));
      mask[i] = static_cast<char>(rng.below(2));
    }
    std::size_t ham = 0;
    for (std::size_t i = 0; i < n; ++i) ham += p[i] != g[i];
    CHECK(accuracy(p, g) == Approx(1.0 - static_cast<double>(ham) / n));
    CHECK(accuracy(p, g) == accuracy(g, p));

    // Masked accuracy equals accuracy over the filtered index set.
    std::vector<int> fp, fg;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) {
        fp.push_back(p[i]);
        fg.push_back(g[i]);
      }
    if (!fp.empty()) CHECK(accuracy(p, g, mask) == accuracy(fp, fg));

    // F1 from its definition.
    Confusion c;
    c.add(p, g);
    for (int cls : {0, 1}) {
      double tp = 0, fpos = 0, fneg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += p[i] == cls && g[i] == cls;
        fpos += p[i] == cls && g[i] != cls;
        fneg += p[i] != cls && g[i] == cls;
      }
      const double prec = tp + fpos > 0 ? tp / (tp + fpos) : 0.0;
      const double rec = tp + fneg > 0 ? tp / (tp + fneg) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      CHECK(c.f1(cls) == Approx(f1).margin(1e-12));
    }
  }
}

TEST_CASE("deviation subset", "[baselines][metrics]") {
  const auto sw = StopwordList::english();
  // Accented function word "with", unaccented content word "Mary".
  const auto u = words_utt({"she", "agrees", "with", "Mary", "Conroy"}, {0, 1, 1, 0, 1});
  const auto dev = deviation_mask(u, sw);
  CHECK(dev == std::vector<char>{0, 0, 1, 1, 0});
  // The content-word baseline is wrong on every deviation token by construction.
  CHECK(accuracy(content_word_predict(u, sw), u.labels(), dev) == 0.0);
  CHECK(accuracy(u.labels(), u.labels(), dev) == 1.0);
}

TEST_CASE("baseline names", "[baselines]") {
  CHECK(parse_baseline("content-word") == BaselineKind::content_word);
  CHECK(parse_baseline("duration_only") == BaselineKind::duration_only);
  CHECK_THROWS(parse_baseline("oracle"));
}
