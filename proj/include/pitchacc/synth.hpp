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

// Synthetic prosodic corpora.
//
// Stands in for a licensed annotated corpus. Each token is rendered as a
// five-harmonic tone whose F0, level and duration carry its accent label:
//
//   f0   = speaker_f0 * 2^((utt_offset + declination + jitter + accent*excursion) / 12)
//   gain = base * 10^((utt_gain + accent*boost_db) / 20)
//   dur  = U(class duration range) * (accent ? lengthening : 1)
//
// with 30 ms of noise-only silence between tokens. Speaker and utterance
// offsets make an accent visible mainly relative to its neighbors, which is
// what gives wider context its advantage. Content/function status and labels
// are allocated by stratified shuffling, so realized class balance matches
// the requested rates up to rounding.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pitchacc/corpus.hpp"
#include "pitchacc/rng.hpp"
#include "pitchacc/wav.hpp"

namespace pitchacc {

// Frequent English function words, all members of the shipped stopword list.
inline const std::vector<std::string>& synth_function_words() {
  static const std::vector<std::string> words = {
      "the",   "of",    "and",     "a",      "to",      "in",     "is",    "that",   "for",   "it",
      "as",    "was",   "with",    "be",     "by",      "on",     "not",   "he",     "this",  "are",
      "or",    "his",   "from",    "at",     "which",   "but",    "have",  "an",     "had",   "they",
      "you",   "were",  "their",   "she",    "we",      "her",    "been",  "has",    "would", "there",
      "all",   "so",    "if",      "can",    "will",    "what",   "when",  "who",    "more",  "no",
      "out",   "up",    "into",    "about",  "than",    "them",   "could", "some",   "its",   "these",
      "then",  "do",    "our",     "over",   "other",   "only",   "those", "after",  "should", "most",
      "between", "through", "before", "such", "because", "under", "again", "while",  "during", "each"};
  return words;
}

// Pronounceable CVCV pseudo-words that are not stopwords.
inline std::vector<std::string> synth_content_words(std::size_t count) {
  static constexpr const char* kCons = "bdfgklmnprstvz";
  static constexpr const char* kVow = "aeiou";
  const auto sw = StopwordList::english();
  std::vector<std::string> syl;
  for (int c = 0; kCons[c]; ++c)
    for (int v = 0; kVow[v]; ++v) syl.push_back(std::string{kCons[c], kVow[v]});
  std::vector<std::string> out;
  for (std::size_t i = 0; out.size() < count; ++i) {
    const std::size_t s = syl.size();
    if (i >= s * s * s) throw std::invalid_argument("too many synthetic content words requested");
    std::string w = syl[i % s] + syl[(i / s) % s];
    if (i >= s * s) w += syl[i / (s * s) % s];
    if (!sw.contains(w)) out.push_back(std::move(w));
  }
  return out;
}

struct SynthSpec {
  int n_utterances = 60;
  int min_tokens = 5;
  int max_tokens = 10;
  int sample_rate_hz = 16000;
  int n_speakers = 5;

  // Token classes and labels.
  double content_fraction = 0.55;
  double p_content_accented = 0.8;
  double p_function_accented = 0.1;
  int n_content_words = 300;
  int n_function_words = 0;  // 0 = the whole built-in function-word list

  // Acoustic encoding of an accent.
  double accent_f0_semitones = 4.0;
  double accent_energy_db = 2.0;
  double accent_lengthening = 1.15;

  // Nuisance variation.
  double speaker_f0_min_hz = 90.0;
  double speaker_f0_max_hz = 220.0;
  double utterance_f0_jitter_st = 1.5;
  double token_f0_jitter_st = 0.5;
  double declination_st = 2.0;
  double gain_jitter_db = 3.0;
  double noise_db = -30.0;  // relative to the base amplitude
  double base_amplitude = 0.25;

  double function_min_s = 0.10, function_max_s = 0.18;
  double content_min_s = 0.18, content_max_s = 0.32;
  double gap_s = 0.03;
  double edge_silence_s = 0.05;

  double target_accent_rate() const {
    return content_fraction * p_content_accented + (1.0 - content_fraction) * p_function_accented;
  }
};

inline void validate(const SynthSpec& s) {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid synth spec: ") + what);
  };
  check(s.n_utterances >= 1, "n_utterances must be >= 1");
  check(s.min_tokens >= 1 && s.max_tokens >= s.min_tokens, "token range");
  check(s.sample_rate_hz >= 8000, "sample rate must be >= 8000");
  check(s.n_speakers >= 1, "n_speakers must be >= 1");
  for (double p : {s.content_fraction, s.p_content_accented, s.p_function_accented})
    check(p >= 0.0 && p <= 1.0, "probabilities must lie in [0, 1]");
  check(s.n_content_words >= 1, "n_content_words must be >= 1");
  check(s.n_function_words >= 0 && s.n_function_words <= static_cast<int>(synth_function_words().size()),
        "n_function_words out of range");
  check(s.accent_lengthening > 0.0, "accent_lengthening must be positive");
  check(s.speaker_f0_min_hz > 0.0 && s.speaker_f0_max_hz >= s.speaker_f0_min_hz, "speaker F0 range");
  check(s.function_min_s > 0.0 && s.function_max_s >= s.function_min_s, "function duration range");
  check(s.content_min_s > 0.0 && s.content_max_s >= s.content_min_s, "content duration range");
  check(s.gap_s >= 0.0 && s.edge_silence_s >= 0.0, "silences must be non-negative");
  check(s.base_amplitude > 0.0 && s.base_amplitude < 1.0, "base amplitude");
  const double worst_st = std::max(0.0, s.accent_f0_semitones) + std::abs(s.utterance_f0_jitter_st) * 3 +
                          std::abs(s.token_f0_jitter_st) * 3 + std::abs(s.declination_st);
  check(5.0 * s.speaker_f0_max_hz * std::pow(2.0, worst_st / 12.0) < s.sample_rate_hz / 2.0,
        "top harmonic would exceed Nyquist");
}

struct SynthResult {
  Corpus corpus;
  std::vector<Waveform> audio;  // parallel to corpus.utterances
};

inline SynthResult synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  validate(spec);
  const Rng root(seed);
  Rng layout_rng = root.split("layout");
  Rng label_rng = root.split("labels");

  const auto content_words = synth_content_words(static_cast<std::size_t>(spec.n_content_words));
  auto function_words = synth_function_words();
  if (spec.n_function_words > 0) function_words.resize(static_cast<std::size_t>(spec.n_function_words));

  // Token counts, then a stratified content/function allocation.
  std::vector<int> lengths(static_cast<std::size_t>(spec.n_utterances));
  std::size_t total = 0;
  for (auto& len : lengths) {
    len = spec.min_tokens + static_cast<int>(layout_rng.below(static_cast<std::uint64_t>(spec.max_tokens - spec.min_tokens + 1)));
    total += static_cast<std::size_t>(len);
  }
  std::vector<char> is_content(total, 0);
  const auto n_content = static_cast<std::size_t>(std::llround(spec.content_fraction * static_cast<double>(total)));
  std::fill(is_content.begin(), is_content.begin() + static_cast<std::ptrdiff_t>(n_content), 1);
  layout_rng.shuffle(is_content);

  std::vector<std::size_t> content_pos, function_pos;
  for (std::size_t i = 0; i < total; ++i) (is_content[i] ? content_pos : function_pos).push_back(i);
  std::vector<char> accented(total, 0);
  auto allocate = [&](std::vector<std::size_t>& pos, double p) {
    label_rng.shuffle(pos);
    const auto k = static_cast<std::size_t>(std::llround(p * static_cast<double>(pos.size())));
    for (std::size_t i = 0; i < k; ++i) accented[pos[i]] = 1;
  };
  allocate(content_pos, spec.p_content_accented);
  allocate(function_pos, spec.p_function_accented);

  // Speakers: log-spaced base F0 in a shuffled order.
  std::vector<double> speaker_f0(static_cast<std::size_t>(spec.n_speakers));
  for (int k = 0; k < spec.n_speakers; ++k) {
    const double frac = spec.n_speakers > 1 ? static_cast<double>(k) / (spec.n_speakers - 1) : 0.5;
    speaker_f0[static_cast<std::size_t>(k)] =
        spec.speaker_f0_min_hz * std::pow(spec.speaker_f0_max_hz / spec.speaker_f0_min_hz, frac);
  }
  Rng speaker_rng = root.split("speakers");
  speaker_rng.shuffle(speaker_f0);

  SynthResult out;
  out.corpus.sample_rate_hz = spec.sample_rate_hz;
  const double sr = spec.sample_rate_hz;
  const double noise_sigma = spec.base_amplitude * std::pow(10.0, spec.noise_db / 20.0);
  const auto ramp = static_cast<std::size_t>(std::lround(0.010 * sr));
  double harmonic_norm = 0.0;
  for (int h = 1; h <= 5; ++h) harmonic_norm += 1.0 / h;

  std::size_t flat = 0;
  for (int u = 0; u < spec.n_utterances; ++u) {
    Rng rng = root.split(static_cast<std::uint64_t>(u) + 1000);
    char id[32];
    std::snprintf(id, sizeof id, "utt%04d", u);
    Utterance utt;
    utt.id = id;
    const int spk = u % spec.n_speakers;
    utt.speaker = "spk" + std::to_string(spk);
    utt.audio_ref = "audio/" + utt.id + ".wav";

    const int m = lengths[static_cast<std::size_t>(u)];
    const double utt_offset_st = spec.utterance_f0_jitter_st * rng.normal();
    const double utt_gain_db = spec.gain_jitter_db * rng.normal();

    Waveform w;
    w.sample_rate_hz = spec.sample_rate_hz;
    auto append_silence = [&](double seconds) {
      w.samples.resize(w.samples.size() + static_cast<std::size_t>(std::lround(seconds * sr)), 0.0);
    };
    append_silence(spec.edge_silence_s);
    for (int t = 0; t < m; ++t, ++flat) {
      const bool content = is_content[flat];
      const bool acc = accented[flat];
      Token tok;
      tok.label = acc ? 1 : 0;
      tok.text = content ? content_words[rng.below(content_words.size())]
                         : function_words[rng.below(function_words.size())];
      double dur = content ? rng.uniform(spec.content_min_s, spec.content_max_s)
                           : rng.uniform(spec.function_min_s, spec.function_max_s);
      if (acc) dur *= spec.accent_lengthening;
      const double pos = m > 1 ? static_cast<double>(t) / (m - 1) : 0.0;
      const double st = utt_offset_st - spec.declination_st * pos + spec.token_f0_jitter_st * rng.normal() +
                        (acc ? spec.accent_f0_semitones : 0.0);
      const double f0 = speaker_f0[static_cast<std::size_t>(spk)] * std::pow(2.0, st / 12.0);
      const double amp =
          spec.base_amplitude * std::pow(10.0, (utt_gain_db + (acc ? spec.accent_energy_db : 0.0)) / 20.0);

      const std::size_t start = w.samples.size();
      const auto len = static_cast<std::size_t>(std::lround(dur * sr));
      w.samples.resize(start + len);
      for (std::size_t i = 0; i < len; ++i) {
        const double time = static_cast<double>(i) / sr;
        double s = 0.0;
        for (int h = 1; h <= 5; ++h) s += std::sin(2.0 * std::numbers::pi * h * f0 * time) / h;
        double env = 1.0;
        if (i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
        if (len - 1 - i < ramp)
          env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - 1 - i) / ramp));
        w.samples[start + i] = amp * env * s / harmonic_norm;
      }
      tok.start_s = static_cast<double>(start) / sr;
      tok.end_s = static_cast<double>(start + len) / sr;
      utt.tokens.push_back(std::move(tok));
      append_silence(t + 1 < m ? spec.gap_s : spec.edge_silence_s);
    }
    Rng noise = rng.split("noise");
    for (auto& s : w.samples) s += noise_sigma * noise.normal();
    quantize_pcm16(w);

    out.corpus.utterances.push_back(std::move(utt));
    out.audio.push_back(std::move(w));
  }
  validate(out.corpus);
  return out;
}

// Writes <dir>/corpus.jsonl and <dir>/audio/<id>.wav.
inline std::filesystem::path write_synth(const SynthResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "audio");
  for (std::size_t i = 0; i < r.corpus.utterances.size(); ++i)
    write_wav(dir / *r.corpus.utterances[i].audio_ref, r.audio[i]);
  const auto path = dir / "corpus.jsonl";
  save_corpus(r.corpus, path);
  return path;
}

}  // namespace pitchacc
