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

// Experiment configuration: a TOML subset with [sections], key = value,
// '#' comments, strings, integers, floats, booleans and flat arrays.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitchacc/experiments.hpp"

namespace pitchacc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// TOML subset

namespace toml_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

struct Cursor {
  std::string_view s;
  std::size_t i = 0;
  int line = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line) + ": " + what);
  }
  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool done() {
    skip_ws();
    return i >= s.size() || s[i] == '#';
  }
};

inline nlohmann::json parse_value(Cursor& c) {
  c.skip_ws();
  if (c.i >= c.s.size()) c.fail("missing value");
  const char ch = c.s[c.i];
  if (ch == '"') {
    std::string out;
    for (++c.i; c.i < c.s.size() && c.s[c.i] != '"'; ++c.i) {
      if (c.s[c.i] != '\\') {
        out += c.s[c.i];
        continue;
      }
      if (++c.i >= c.s.size()) break;
      switch (c.s[c.i]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: c.fail(std::string("unsupported escape \\") + c.s[c.i]);
      }
    }
    if (c.i >= c.s.size()) c.fail("unterminated string");
    ++c.i;
    return out;
  }
  if (ch == '[') {
    auto arr = nlohmann::json::array();
    ++c.i;
    c.skip_ws();
    if (c.i < c.s.size() && c.s[c.i] == ']') {
      ++c.i;
      return arr;
    }
    for (;;) {
      auto v = parse_value(c);
      if (v.is_array()) c.fail("nested arrays are not supported");
      arr.push_back(std::move(v));
      c.skip_ws();
      if (c.i < c.s.size() && c.s[c.i] == ',') {
        ++c.i;
        c.skip_ws();
        if (c.i < c.s.size() && c.s[c.i] == ']') {
          ++c.i;
          return arr;
        }
        continue;
      }
      if (c.i < c.s.size() && c.s[c.i] == ']') {
        ++c.i;
        return arr;
      }
      c.fail("expected ',' or ']' in array");
    }
  }
  std::size_t e = c.i;
  while (e < c.s.size() && c.s[e] != ',' && c.s[e] != ']' && c.s[e] != '#' && c.s[e] != ' ' && c.s[e] != '\t') ++e;
  const std::string tok(c.s.substr(c.i, e - c.i));
  c.i = e;
  if (tok == "true") return true;
  if (tok == "false") return false;
  std::string digits;
  for (char d : tok)
    if (d != '_') digits += d;
  const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
  const char* b = digits.data();
  const char* end = b + digits.size();
  if (!digits.empty() && digits[0] == '+') ++b;
  if (!is_float) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec == std::errc() && p == end) return v;
    std::uint64_t u = 0;  // seeds may use the full 64 bits
    auto [pu, ecu] = std::from_chars(b, end, u);
    if (ecu == std::errc() && pu == end) return u;
  } else {
    double v = 0;
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec == std::errc() && p == end) return v;
  }
  c.fail("cannot parse value '" + tok + "'");
}

inline std::string format_scalar(const nlohmann::json& v) {
  if (v.is_string()) {
    std::string out = "\"";
    for (char ch : v.get<std::string>()) {
      if (ch == '"' || ch == '\\') out += '\\';
      if (ch == '\n') {
        out += "\\n";
        continue;
      }
      if (ch == '\t') {
        out += "\\t";
        continue;
      }
      out += ch;
    }
    return out + "\"";
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) {
    // Shortest representation that reads back to the same double.
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v.get<double>());
    std::string s(buf, p);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  throw ConfigError("cannot serialize value " + v.dump());
}

}  // namespace toml_detail

// Parses into {section: {key: value}}. Keys before the first header land in "".
inline nlohmann::json parse_toml(std::string_view text) {
  using namespace toml_detail;
  auto doc = nlohmann::json::object();
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    Cursor c{line, 0, lineno};
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) c.fail("unterminated section header");
      section = trim(std::string_view(line).substr(1, close - 1));
      if (!bare_key(section)) c.fail("bad section name '" + section + "'");
      c.i = close + 1;
      if (!c.done()) c.fail("trailing characters after section header");
      if (doc.contains(section)) c.fail("duplicate section [" + section + "]");
      doc[section] = nlohmann::json::object();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) c.fail("expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!bare_key(key)) c.fail("bad key '" + key + "'");
    c.i = eq + 1;
    auto value = parse_value(c);
    if (!c.done()) c.fail("trailing characters after value");
    auto& sec = doc[section];
    if (sec.is_null()) sec = nlohmann::json::object();
    if (sec.contains(key)) c.fail("duplicate key '" + key + "'");
    sec[key] = std::move(value);
  }
  return doc;
}

inline std::string dump_toml(const nlohmann::json& doc) {
  std::string out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_object()) throw ConfigError("top-level TOML entries must be sections");
    if (!out.empty()) out += "\n";
    if (!it.key().empty()) out += "[" + it.key() + "]\n";
    for (auto kv = it.value().begin(); kv != it.value().end(); ++kv) {
      out += kv.key() + " = ";
      if (kv.value().is_array()) {
        out += "[";
        for (std::size_t i = 0; i < kv.value().size(); ++i)
          out += (i ? ", " : "") + toml_detail::format_scalar(kv.value()[i]);
        out += "]";
      } else {
        out += toml_detail::format_scalar(kv.value());
      }
      out += "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Field tables

template <class F>
void synth_fields(SynthSpec& s, F&& f) {
  f("n_utterances", s.n_utterances);
  f("min_tokens", s.min_tokens);
  f("max_tokens", s.max_tokens);
  f("sample_rate_hz", s.sample_rate_hz);
  f("n_speakers", s.n_speakers);
  f("content_fraction", s.content_fraction);
  f("p_content_accented", s.p_content_accented);
  f("p_function_accented", s.p_function_accented);
  f("n_content_words", s.n_content_words);
  f("n_function_words", s.n_function_words);
  f("accent_f0_semitones", s.accent_f0_semitones);
  f("accent_energy_db", s.accent_energy_db);
  f("accent_lengthening", s.accent_lengthening);
  f("speaker_f0_min_hz", s.speaker_f0_min_hz);
  f("speaker_f0_max_hz", s.speaker_f0_max_hz);
  f("utterance_f0_jitter_st", s.utterance_f0_jitter_st);
  f("token_f0_jitter_st", s.token_f0_jitter_st);
  f("declination_st", s.declination_st);
  f("gain_jitter_db", s.gain_jitter_db);
  f("noise_db", s.noise_db);
  f("base_amplitude", s.base_amplitude);
  f("function_min_s", s.function_min_s);
  f("function_max_s", s.function_max_s);
  f("content_min_s", s.content_min_s);
  f("content_max_s", s.content_max_s);
  f("gap_s", s.gap_s);
  f("edge_silence_s", s.edge_silence_s);
}

template <class F>
void featurizer_fields(FeaturizerParams& p, F&& f) {
  f("hop_s", p.hop_s);
  f("pitch_window_s", p.pitch_window_s);
  f("energy_window_s", p.energy_window_s);
  f("f0_min_hz", p.f0_min_hz);
  f("f0_max_hz", p.f0_max_hz);
  f("voicing_threshold", p.voicing_threshold);
  f("octave_cost", p.octave_cost);
  f("median_width", p.median_width);
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  // [corpus]. An empty path means "generate from [synth] with experiment.seed".
  std::string corpus_path;
  std::string stopwords_path;  // empty = built-in list
  std::string feature_cache;   // empty = no cache

  SynthSpec synth;
  FeaturizerParams featurizer;
  ModelConfig model;

  // [experiment]
  std::uint64_t seed = 1;  // data seed: synthetic corpus and fold plan
  std::vector<std::uint64_t> model_seeds = {1, 2, 3, 4, 5};
  int folds = 10;
  int max_folds = 0;  // 0 = all
  int threads = 1;
  std::string ablation = "all";
  bool eval_train = false;

  // [suite]
  std::vector<int> vocab_sizes = {3000, 1000, 500, 100, 50, 10, 5};
  int hparam_budget = 96;
  int hparam_folds = 3;
  std::vector<std::uint64_t> hparam_seeds = {1};
  std::vector<std::string> ablation_contexts = {"full_utterance", "three_token"};
  std::vector<std::string> ablation_archs = {"cnn_lstm", "cnn"};
  std::vector<int> sweep_widths = {9, 11, 13, 15, 17, 19, 21, 23};
  std::vector<int> sweep_depths = {1, 2, 3, 4, 5, 6};

  // [output]
  std::string out_dir = "out";

  void validate() const {
    model.validate();
    pitchacc::validate(synth);
    auto check = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("invalid config: " + what);
    };
    check(folds >= 2, "experiment.folds must be >= 2");
    check(max_folds >= 0, "experiment.max_folds must be >= 0");
    check(threads >= 1, "experiment.threads must be >= 1");
    check(!model_seeds.empty(), "experiment.model_seeds is empty");
    check(hparam_budget >= 1, "suite.hparam_budget must be >= 1");
    check(hparam_folds >= 1, "suite.hparam_folds must be >= 1");
    check(!hparam_seeds.empty(), "suite.hparam_seeds is empty");
    for (int v : vocab_sizes) check(v >= 1, "suite.vocab_sizes entries must be >= 1");
    for (const auto& c : ablation_contexts) parse_context(c);
    for (const auto& a : ablation_archs) check(a == "cnn_lstm" || a == "cnn", "unknown architecture '" + a + "'");
    parse_ablation(ablation);
  }

  // "all", "duration_only", or "-pitch", "-pitch-voicing", ...
  static Ablation parse_ablation(const std::string& name) {
    if (name == "all") return Ablation::none();
    if (name == "duration_only") return Ablation::duration();
    for (const auto& a : standard_ablations())
      if (a.name() == name) return a;
    throw ConfigError("unknown ablation '" + name + "'");
  }

  CrossvalOptions crossval_options() const {
    CrossvalOptions o;
    o.seeds = model_seeds;
    o.max_folds = static_cast<std::size_t>(max_folds);
    o.threads = threads;
    o.ablation = parse_ablation(ablation);
    o.train.eval_train = eval_train;
    return o;
  }
};

// The archived copy next to a report leaves out [output]: where a report
// lands does not change its contents.
inline nlohmann::json to_document(const ExperimentConfig& c, bool with_output = true) {
  nlohmann::json doc = nlohmann::json::object();
  doc["corpus"] = {{"path", c.corpus_path}, {"stopwords", c.stopwords_path}, {"feature_cache", c.feature_cache}};
  auto synth = nlohmann::json::object();
  SynthSpec s = c.synth;
  synth_fields(s, [&](const char* k, const auto& v) { synth[k] = v; });
  doc["synth"] = synth;
  auto feat = nlohmann::json::object();
  FeaturizerParams p = c.featurizer;
  featurizer_fields(p, [&](const char* k, const auto& v) { feat[k] = v; });
  doc["featurizer"] = feat;
  doc["model"] = to_json(c.model);
  doc["experiment"] = {{"seed", c.seed},           {"model_seeds", c.model_seeds}, {"folds", c.folds},
                       {"max_folds", c.max_folds}, {"threads", c.threads},         {"ablation", c.ablation},
                       {"eval_train", c.eval_train}};
  doc["suite"] = {{"vocab_sizes", c.vocab_sizes},   {"hparam_budget", c.hparam_budget},
                  {"hparam_folds", c.hparam_folds}, {"hparam_seeds", c.hparam_seeds},
                  {"ablation_contexts", c.ablation_contexts}, {"ablation_archs", c.ablation_archs},
                  {"sweep_widths", c.sweep_widths}, {"sweep_depths", c.sweep_depths}};
  if (with_output) doc["output"] = {{"dir", c.out_dir}};
  return doc;
}

namespace config_detail {

template <class T>
void read(const nlohmann::json& v, const std::string& where, T& dst) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!v.is_number()) throw ConfigError("");
      if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>)
          if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    v.get_to(dst);
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + where + ": " + v.dump());
  }
}

}  // namespace config_detail

// Every section and key must be known; missing keys keep their defaults.
inline ExperimentConfig config_from_document(const nlohmann::json& doc) {
  ExperimentConfig c;
  const nlohmann::json known = to_document(c);
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key().empty()) {
      if (!it.value().empty())
        throw ConfigError("key '" + it.value().begin().key() + "' appears before any [section]");
      continue;
    }
    if (!known.contains(it.key())) throw ConfigError("unknown config section [" + it.key() + "]");
    for (auto kv = it.value().begin(); kv != it.value().end(); ++kv)
      if (!known[it.key()].contains(kv.key()))
        throw ConfigError("unknown config key '" + it.key() + "." + kv.key() + "'");
  }
  auto section = [&](const char* name) -> nlohmann::json {
    return doc.contains(name) ? doc.at(name) : nlohmann::json::object();
  };
  auto reader = [](const nlohmann::json& sec, const std::string& name) {
    return [&sec, name](const char* k, auto& dst) {
      if (sec.contains(k)) config_detail::read(sec.at(k), name + "." + k, dst);
    };
  };
  const auto corpus = section("corpus");
  auto rc = reader(corpus, "corpus");
  rc("path", c.corpus_path);
  rc("stopwords", c.stopwords_path);
  rc("feature_cache", c.feature_cache);
  const auto synth = section("synth");
  synth_fields(c.synth, reader(synth, "synth"));
  const auto feat = section("featurizer");
  featurizer_fields(c.featurizer, reader(feat, "featurizer"));
  try {
    c.model = model_config_from_json(section("model"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[model]: ") + e.what());
  }
  const auto exp = section("experiment");
  auto re = reader(exp, "experiment");
  re("seed", c.seed);
  re("model_seeds", c.model_seeds);
  re("folds", c.folds);
  re("max_folds", c.max_folds);
  re("threads", c.threads);
  re("ablation", c.ablation);
  re("eval_train", c.eval_train);
  const auto suite = section("suite");
  auto rs = reader(suite, "suite");
  rs("vocab_sizes", c.vocab_sizes);
  rs("hparam_budget", c.hparam_budget);
  rs("hparam_folds", c.hparam_folds);
  rs("hparam_seeds", c.hparam_seeds);
  rs("ablation_contexts", c.ablation_contexts);
  rs("ablation_archs", c.ablation_archs);
  rs("sweep_widths", c.sweep_widths);
  rs("sweep_depths", c.sweep_depths);
  const auto out = section("output");
  reader(out, "output")("dir", c.out_dir);
  return c;
}

// "section.key=value" with a TOML value; a bare word is taken as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override '" + assignment + "' is not section.key=value");
  const std::string section = toml_detail::trim(assignment.substr(0, dot));
  const std::string key = toml_detail::trim(assignment.substr(dot + 1, eq - dot - 1));
  const std::string text = toml_detail::trim(assignment.substr(eq + 1));
  nlohmann::json value;
  try {
    value = parse_toml("[x]\nv = " + text)["x"]["v"];
  } catch (const ConfigError&) {
    value = text;
  }
  doc[section][key] = value;
}

inline ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {}) {
  auto doc = parse_toml(text);
  for (const auto& o : overrides) apply_override(doc, o);
  auto c = config_from_document(doc);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline std::string to_toml(const ExperimentConfig& c, bool with_output = true) {
  return dump_toml(to_document(c, with_output));
}

}  // namespace pitchacc
