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

// Reference predictors and the metrics shared by every experiment.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pitchacc/corpus.hpp"

namespace pitchacc {

enum class BaselineKind { majority, content_word, duration_only };

inline BaselineKind parse_baseline(const std::string& s) {
  if (s == "majority") return BaselineKind::majority;
  if (s == "content-word" || s == "content_word") return BaselineKind::content_word;
  if (s == "duration-only" || s == "duration_only") return BaselineKind::duration_only;
  throw std::invalid_argument("unknown baseline '" + s + "' (majority, content-word, duration-only)");
}

// More frequent training label; a tie predicts accented.
inline int majority_label(std::size_t positives, std::size_t total) {
  if (total == 0) throw std::invalid_argument("majority baseline needs a nonempty training set");
  return 2 * positives >= total ? 1 : 0;
}

inline int majority_predict(const Corpus& train) {
  std::size_t pos = 0, total = 0;
  for (const auto& u : train.utterances) {
    for (int l : u.labels()) pos += static_cast<std::size_t>(l);
    total += u.size();
  }
  return majority_label(pos, total);
}

inline std::vector<int> content_word_predict(const Utterance& u, const StopwordList& sw) {
  return content_word_mask(u, sw);
}

// Confusion counts for the binary task, accumulated over any token subset.
struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  // Adds positions where mask (if given) is nonzero.
  void add(const std::vector<int>& pred, const std::vector<int>& gold, const std::vector<char>& mask = {}) {
    if (pred.size() != gold.size())
      throw std::invalid_argument("prediction length " + std::to_string(pred.size()) + " != gold length " +
                                  std::to_string(gold.size()));
    if (!mask.empty() && mask.size() != gold.size()) throw std::invalid_argument("mask length mismatch");
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (!mask.empty() && !mask[i]) continue;
      if (pred[i] && gold[i]) ++tp;
      else if (pred[i]) ++fp;
      else if (gold[i]) ++fn;
      else ++tn;
    }
  }
  void add(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
  }

  std::size_t total() const { return tp + fp + fn + tn; }
  std::size_t correct() const { return tp + tn; }
  // 0 for an empty subset.
  double accuracy() const { return total() ? static_cast<double>(correct()) / static_cast<double>(total()) : 0.0; }

  // F1 of class 1 (accented) or class 0.
  double f1(int cls) const {
    const double t = static_cast<double>(cls ? tp : tn);
    const double f_pos = static_cast<double>(cls ? fp : fn);
    const double f_neg = static_cast<double>(cls ? fn : fp);
    return t > 0 ? 2.0 * t / (2.0 * t + f_pos + f_neg) : 0.0;
  }
  bool operator==(const Confusion&) const = default;
};

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& gold,
                       const std::vector<char>& mask = {}) {
  Confusion c;
  c.add(pred, gold, mask);
  return c.accuracy();
}

// Tokens whose gold label differs from the content-word prediction:
// accented function words and unaccented content words.
inline std::vector<char> deviation_mask(const Utterance& u, const StopwordList& sw) {
  const auto cw = content_word_mask(u, sw);
  std::vector<char> m(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) m[i] = cw[i] != u.tokens[i].label;
  return m;
}

}  // namespace pitchacc
