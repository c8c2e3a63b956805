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

// Labeled prosodic corpora: tokens with word-boundary timestamps and binary
// pitch-accent labels, grouped into utterances.
//
// On disk a corpus is JSONL, one utterance per line:
//
//   {"audio":"audio/u0.wav","id":"u0","speaker":"spk0",
//    "tokens":[{"end_s":0.31,"label":1,"start_s":0.05,"text":"union"}]}
//
// "audio" is optional and resolved relative to the corpus file's directory.
// save_corpus() writes the canonical form (sorted keys, shortest round-trip
// numbers), so loading and saving a canonical file reproduces it byte for
// byte.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pitchacc/stopwords.hpp"

namespace pitchacc {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Token {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  int label = 0;  // 1 = pitch-accented

  bool operator==(const Token&) const = default;
};

struct Utterance {
  std::string id;
  std::string speaker;
  std::vector<Token> tokens;
  std::optional<std::string> audio_ref;

  std::size_t size() const { return tokens.size(); }
  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.label);
    return out;
  }
  bool operator==(const Utterance&) const = default;
};

struct Corpus {
  std::vector<Utterance> utterances;
  int sample_rate_hz = 16000;
  // Directory that relative audio references are resolved against.
  std::filesystem::path base_dir;

  std::size_t size() const { return utterances.size(); }
  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& u : utterances) n += u.tokens.size();
    return n;
  }
  std::filesystem::path audio_path(const Utterance& u) const {
    if (!u.audio_ref) throw CorpusError("utterance '" + u.id + "' has no audio reference");
    std::filesystem::path p(*u.audio_ref);
    return p.is_absolute() ? p : base_dir / p;
  }
  // Subset in the given order; keeps sample rate and base directory.
  Corpus subset(const std::vector<std::size_t>& indices) const {
    Corpus out;
    out.sample_rate_hz = sample_rate_hz;
    out.base_dir = base_dir;
    out.utterances.reserve(indices.size());
    for (auto i : indices) out.utterances.push_back(utterances.at(i));
    return out;
  }
};

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline void validate(const Utterance& u) {
  auto fail = [&](const std::string& why) {
    throw CorpusError("utterance '" + u.id + "': " + why);
  };
  if (u.id.empty()) throw CorpusError("utterance with empty id");
  if (u.tokens.empty()) fail("no tokens");
  double prev_end = 0.0;
  for (std::size_t i = 0; i < u.tokens.size(); ++i) {
    const Token& t = u.tokens[i];
    const std::string where = "token " + std::to_string(i);
    if (t.text.empty()) fail(where + " has empty text");
    if (!(t.start_s >= 0.0)) fail(where + " starts before 0");
    if (!(t.end_s > t.start_s)) fail(where + " has end_s <= start_s");
    if (t.label != 0 && t.label != 1) fail(where + " label is not 0/1");
    if (i > 0 && t.start_s < prev_end) fail(where + " overlaps the previous token");
    prev_end = t.end_s;
  }
}

inline void validate(const Corpus& c) {
  if (c.sample_rate_hz <= 0) throw CorpusError("sample rate must be positive");
  std::unordered_set<std::string> seen;
  for (const auto& u : c.utterances) {
    validate(u);
    if (!seen.insert(u.id).second) throw CorpusError("duplicate utterance id '" + u.id + "'");
  }
}

// ---------------------------------------------------------------------------
// JSONL I/O

inline nlohmann::json to_json(const Utterance& u) {
  nlohmann::json j;
  j["id"] = u.id;
  j["speaker"] = u.speaker;
  if (u.audio_ref) j["audio"] = *u.audio_ref;
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (const auto& t : u.tokens) {
    toks.push_back({{"text", t.text}, {"start_s", t.start_s}, {"end_s", t.end_s}, {"label", t.label}});
  }
  return j;
}

inline Utterance utterance_from_json(const nlohmann::json& j) {
  Utterance u;
  static const std::set<std::string> kKeys = {"id", "speaker", "tokens", "audio"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKeys.count(it.key())) throw CorpusError("unknown key '" + it.key() + "'");
  }
  u.id = j.at("id").get<std::string>();
  u.speaker = j.value("speaker", std::string{});
  if (j.contains("audio") && !j["audio"].is_null()) u.audio_ref = j["audio"].get<std::string>();
  for (const auto& tj : j.at("tokens")) {
    Token t;
    t.text = tj.at("text").get<std::string>();
    t.start_s = tj.at("start_s").get<double>();
    t.end_s = tj.at("end_s").get<double>();
    t.label = tj.at("label").get<int>();
    u.tokens.push_back(std::move(t));
  }
  return u;
}

inline Corpus parse_corpus(std::istream& in, const std::string& source = "<stream>") {
  Corpus c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      c.utterances.push_back(utterance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(source + ":" + std::to_string(lineno) + ": parse error: " + e.what());
    } catch (const CorpusError& e) {
      throw CorpusError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(c);
  return c;
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  Corpus c = parse_corpus(in, path.string());
  c.base_dir = path.parent_path();
  return c;
}

inline std::string to_jsonl(const Corpus& c) {
  std::string out;
  for (const auto& u : c.utterances) {
    out += to_json(u).dump();
    out += '\n';
  }
  return out;
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& path) {
  validate(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  out << to_jsonl(c);
}

// ---------------------------------------------------------------------------
// Text preprocessing

// Removes a clitic suffix ('ll 's 're 've 'd 'm n't) and the apostrophe.
// Anything else, hyphenated compounds included, is returned unchanged.
inline std::string strip_contraction(std::string_view text) {
  std::string s(text);
  // Treat the typographic apostrophe like the ASCII one.
  for (std::size_t pos; (pos = s.find("\xE2\x80\x99")) != std::string::npos;) s.replace(pos, 3, "'");
  const std::string lower = to_lower(s);
  if (lower.size() > 3 && lower.ends_with("n't")) return s.substr(0, s.size() - 3);
  const auto apos = s.rfind('\'');
  if (apos == std::string::npos || apos == 0) return std::string(text);
  static const std::set<std::string> kSuffixes = {"'ll", "'s", "'re", "'ve", "'d", "'m"};
  if (kSuffixes.count(lower.substr(apos))) return s.substr(0, apos);
  return std::string(text);
}

inline Utterance preprocess_text(Utterance u) {
  for (auto& t : u.tokens) t.text = strip_contraction(t.text);
  return u;
}

inline Corpus preprocess_text(Corpus c) {
  for (auto& u : c.utterances) u = preprocess_text(std::move(u));
  return c;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "<unk>";

  Vocabulary() = default;
  // Types in rank order; ids follow that order and UNK comes last.
  explicit Vocabulary(std::vector<std::string> types) : types_(std::move(types)) {
    for (std::size_t i = 0; i < types_.size(); ++i) id_of_.emplace(types_[i], static_cast<int>(i));
  }

  int id(std::string_view text) const {
    auto it = id_of_.find(to_lower(text));
    return it == id_of_.end() ? unk_id() : it->second;
  }
  bool contains(std::string_view text) const { return id_of_.count(to_lower(text)) > 0; }
  int unk_id() const { return static_cast<int>(types_.size()); }
  std::size_t size() const { return types_.size() + 1; }
  const std::vector<std::string>& types() const { return types_; }

 private:
  std::vector<std::string> types_;
  std::unordered_map<std::string, int> id_of_;
};

// Keeps the max_size most frequent lowercased types (ties broken
// lexicographically) plus UNK.
inline Vocabulary build_vocab(const Corpus& c, std::size_t max_size) {
  if (max_size < 1) throw CorpusError("vocabulary size must be at least 1");
  if (c.token_count() == 0) throw CorpusError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& u : c.utterances)
    for (const auto& t : u.tokens) ++counts[to_lower(t.text)];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> types;
  for (std::size_t i = 0; i < ranked.size() && i < max_size; ++i) types.push_back(ranked[i].first);
  return Vocabulary(std::move(types));
}

// ---------------------------------------------------------------------------
// Stopwords and content words

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::set<std::string> words) : words_(std::move(words)) {}

  static StopwordList english() {
    std::set<std::string> w;
    for (std::string_view s : kEnglishStopwords) w.emplace(s);
    return StopwordList(std::move(w));
  }

  // One lowercase word per line; blank lines and '#' comments are skipped.
  static StopwordList load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open stopword file " + path.string());
    std::set<std::string> w;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      w.insert(to_lower(line));
    }
    if (w.empty()) throw CorpusError("stopword file " + path.string() + " is empty");
    return StopwordList(std::move(w));
  }

  bool contains(std::string_view word) const { return words_.count(to_lower(word)) > 0; }
  const std::set<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }

 private:
  std::set<std::string> words_;
};

inline std::vector<int> content_word_mask(const Utterance& u, const StopwordList& sw) {
  std::vector<int> mask;
  mask.reserve(u.tokens.size());
  for (const auto& t : u.tokens) mask.push_back(sw.contains(t.text) ? 0 : 1);
  return mask;
}

}  // namespace pitchacc
