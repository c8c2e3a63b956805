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

// Frame-level acoustic-prosodic features.
//
// Six descriptors are computed on a shared 10 ms grid:
//
//   0 f0_smooth     autocorrelation F0 (Hz, 0 = unvoiced), 5-point median
//   1 rms_energy    Hann-weighted RMS amplitude
//   2 loudness      rms^0.3 (Stevens power law, full scale = 1)
//   3 zcr           sign changes / (window length - 1)
//   4 voicing_prob  normalized autocorrelation peak, clamped to [0, 1]
//   5 hnr_db        10 log10(r / (1 - r)), clamped to [-60, 60]
//
// Pitch-related descriptors use a 40 ms window and the others 25 ms; every
// window is centered inside the longest one so all columns align frame for
// frame. Frame count is floor((N - longest_window) / hop) + 1.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pitchacc/rng.hpp"
#include "pitchacc/wav.hpp"

namespace pitchacc {

inline constexpr int kNumFeatures = 6;
inline constexpr std::string_view kFeaturizerVersion = "pitchacc-feat-1";

enum Feature : int {
  kF0Smooth = 0,
  kRmsEnergy = 1,
  kLoudness = 2,
  kZcr = 3,
  kVoicingProb = 4,
  kHnrDb = 5,
};

inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "f0_smooth", "rms_energy", "loudness", "zcr", "voicing_prob", "hnr_db"};

enum class FeatureGroup { pitch, intensity, voicing };

inline std::vector<int> group_columns(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::pitch: return {kF0Smooth};
    case FeatureGroup::intensity: return {kRmsEnergy, kLoudness};
    case FeatureGroup::voicing: return {kZcr, kVoicingProb, kHnrDb};
  }
  return {};
}

inline const char* group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::pitch: return "pitch";
    case FeatureGroup::intensity: return "intensity";
    case FeatureGroup::voicing: return "voicing";
  }
  return "?";
}

inline FeatureGroup parse_group(const std::string& s) {
  if (s == "pitch") return FeatureGroup::pitch;
  if (s == "intensity") return FeatureGroup::intensity;
  if (s == "voicing") return FeatureGroup::voicing;
  throw std::invalid_argument("unknown feature group '" + s + "'");
}

using FeatureRow = std::array<double, kNumFeatures>;

struct FrameFeatures {
  double f0_smooth = 0.0;
  double rms_energy = 0.0;
  double loudness = 0.0;
  double zcr = 0.0;
  double voicing_prob = 0.0;
  double hnr_db = 0.0;

  FeatureRow to_row() const { return {f0_smooth, rms_energy, loudness, zcr, voicing_prob, hnr_db}; }
  static FrameFeatures from_row(const FeatureRow& r) { return {r[0], r[1], r[2], r[3], r[4], r[5]}; }

  bool valid() const {
    for (double v : to_row())
      if (!std::isfinite(v)) return false;
    return f0_smooth >= 0 && rms_energy >= 0 && loudness >= 0 && zcr >= 0 && zcr <= 1 &&
           voicing_prob >= 0 && voicing_prob <= 1 && hnr_db >= -60 && hnr_db <= 60;
  }
};

// n x 6 matrix of frames on the 10 ms grid. Extraction yields raw
// FrameFeatures rows; normalization and ablation reuse the same container.
struct FeatureMatrix {
  std::vector<FeatureRow> rows;
  double hop_s = 0.010;

  std::size_t n() const { return rows.size(); }
  double& at(std::size_t frame, int feature) { return rows[frame][feature]; }
  double at(std::size_t frame, int feature) const { return rows[frame][feature]; }
  std::vector<double> column(int feature) const {
    std::vector<double> c;
    c.reserve(rows.size());
    for (const auto& r : rows) c.push_back(r[feature]);
    return c;
  }
  // Frames [begin, end), clamped to the matrix.
  FeatureMatrix slice(std::size_t begin, std::size_t end) const {
    FeatureMatrix out;
    out.hop_s = hop_s;
    end = std::min(end, rows.size());
    if (begin < end) out.rows.assign(rows.begin() + begin, rows.begin() + end);
    return out;
  }
  bool operator==(const FeatureMatrix&) const = default;
};

struct FeaturizerParams {
  double hop_s = 0.010;
  double pitch_window_s = 0.040;
  double energy_window_s = 0.025;
  double f0_min_hz = 50.0;
  double f0_max_hz = 500.0;
  double voicing_threshold = 0.45;
  // Score penalty per octave of lag; keeps r(T) ~ r(2T) ties from halving F0.
  double octave_cost = 0.02;
  int median_width = 5;

  double longest_window_s() const { return std::max(pitch_window_s, energy_window_s); }

  std::string cache_key() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s;hop=%.6g;pw=%.6g;ew=%.6g;fmin=%.6g;fmax=%.6g;vt=%.6g;oc=%.6g;mw=%d",
                  std::string(kFeaturizerVersion).c_str(), hop_s, pitch_window_s, energy_window_s, f0_min_hz,
                  f0_max_hz, voicing_threshold, octave_cost, median_width);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash_string(buf)));
    return hex;
  }
};

// ---------------------------------------------------------------------------
// Framing

inline std::size_t frame_count(std::size_t n_samples, std::size_t grid_samples, std::size_t hop_samples) {
  if (n_samples < grid_samples || grid_samples == 0) return 0;
  return (n_samples - grid_samples) / hop_samples + 1;
}

// Views of `w` for a window of window_s seconds every hop_s seconds. Frame
// count and centering follow grid_window_s (defaults to window_s), so
// descriptors with different window lengths land on the same grid.
inline std::vector<std::span<const double>> frame_signal(const Waveform& w, double window_s, double hop_s,
                                                         double grid_window_s = 0.0) {
  if (grid_window_s <= 0.0) grid_window_s = window_s;
  if (window_s < hop_s) throw std::invalid_argument("frame_signal: window shorter than hop");
  if (window_s > grid_window_s) throw std::invalid_argument("frame_signal: window longer than grid window");
  const auto sr = static_cast<double>(w.sample_rate_hz);
  const auto win = static_cast<std::size_t>(std::lround(window_s * sr));
  const auto hop = static_cast<std::size_t>(std::lround(hop_s * sr));
  const auto grid = static_cast<std::size_t>(std::lround(grid_window_s * sr));
  if (win == 0 || hop == 0) throw std::invalid_argument("frame_signal: window or hop rounds to zero samples");
  const std::size_t n = frame_count(w.samples.size(), grid, hop);
  if (n == 0) throw AudioError("waveform shorter than one analysis window");
  const std::size_t offset = (grid - win) / 2;
  std::vector<std::span<const double>> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.emplace_back(w.samples.data() + k * hop + offset, win);
  return out;
}

// ---------------------------------------------------------------------------
// Per-window descriptors

inline double rms_energy(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// Weighted RMS: sqrt(sum w x^2 / sum w).
inline double rms_energy(std::span<const double> x, std::span<const double> weights) {
  double acc = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += weights[i] * x[i] * x[i];
    wsum += weights[i];
  }
  return wsum > 0.0 ? std::sqrt(acc / wsum) : 0.0;
}

inline double loudness_from_rms(double rms) { return rms > 0.0 ? std::pow(rms, 0.3) : 0.0; }
inline double loudness(std::span<const double> x) { return loudness_from_rms(rms_energy(x)); }

inline double zcr(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  std::size_t changes = 0;
  for (std::size_t i = 1; i < x.size(); ++i) changes += (x[i] >= 0.0) != (x[i - 1] >= 0.0);
  return static_cast<double>(changes) / static_cast<double>(x.size() - 1);
}

inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  return w;
}

struct PitchEstimate {
  double f0_hz = 0.0;         // 0 when unvoiced
  double voicing_prob = 0.0;  // clamp(peak_r, 0, 1)
  double peak_r = 0.0;        // interpolated normalized autocorrelation peak
};

struct PitchOptions {
  double f0_min_hz = 50.0;
  double f0_max_hz = 500.0;
  double voicing_threshold = 0.45;
  double octave_cost = 0.02;
};

// Normalized cross-correlation pitch estimate on a mean-removed window:
//   r(tau) = sum x[n] x[n+tau] / sqrt(sum x[n]^2 * sum x[n+tau]^2)
// over lags in [sr/fmax, sr/fmin]. Local maxima are refined by parabolic
// interpolation and ranked by peak - octave_cost * log2(lag / min_lag).
inline PitchEstimate f0_autocorr(std::span<const double> window, int sample_rate_hz, const PitchOptions& opt = {}) {
  const std::size_t n = window.size();
  const double sr = static_cast<double>(sample_rate_hz);
  const std::size_t lag_lo = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / opt.f0_max_hz)));
  const std::size_t lag_hi = static_cast<std::size_t>(std::ceil(sr / opt.f0_min_hz));
  if (n < lag_hi + 2) throw std::invalid_argument("f0_autocorr: window shorter than two periods of f0_min");

  std::vector<double> x(window.begin(), window.end());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  for (double& v : x) v -= mean;

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];

  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
  std::vector<double> r(lag_hi + 2, 0.0);
  const double tiny = 1e-20;
  for (std::size_t lag = lag_lo - 1; lag <= lag_hi + 1; ++lag) {
    const std::size_t len = n - lag;
    const double e0 = prefix[len];
    const double e1 = prefix[n] - prefix[lag];
    if (e0 * e1 <= tiny) continue;
    const double num = xv.head(static_cast<Eigen::Index>(len)).dot(xv.segment(static_cast<Eigen::Index>(lag),
                                                                                static_cast<Eigen::Index>(len)));
    r[lag] = num / std::sqrt(e0 * e1);
  }

  double best_score = -1e300, best_peak = 0.0, best_lag = 0.0;
  for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) {
    const double a = r[lag - 1], b = r[lag], c = r[lag + 1];
    if (!(b > 0.0 && b >= a && b > c)) continue;
    const double denom = a - 2.0 * b + c;
    double delta = 0.0, peak = b;
    if (denom < 0.0) {
      delta = 0.5 * (a - c) / denom;
      peak = b - 0.25 * (a - c) * delta;
    }
    const double fl = static_cast<double>(lag) + delta;
    const double score = peak - opt.octave_cost * std::log2(fl / static_cast<double>(lag_lo));
    if (score > best_score) {
      best_score = score;
      best_peak = peak;
      best_lag = fl;
    }
  }
  if (best_lag == 0.0) {
    // No interior peak: report the largest value in range, never voiced
    // unless it clears the threshold.
    for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) {
      if (r[lag] > best_peak) {
        best_peak = r[lag];
        best_lag = static_cast<double>(lag);
      }
    }
  }
  PitchEstimate est;
  est.peak_r = best_peak;
  est.voicing_prob = std::clamp(best_peak, 0.0, 1.0);
  est.f0_hz = (est.voicing_prob >= opt.voicing_threshold && best_lag > 0.0) ? sr / best_lag : 0.0;
  return est;
}

inline double hnr_from_r(double r) {
  r = std::clamp(r, 1e-6, 1.0 - 1e-6);
  return std::clamp(10.0 * std::log10(r / (1.0 - r)), -60.0, 60.0);
}

inline double hnr(std::span<const double> window, int sample_rate_hz, const PitchOptions& opt = {}) {
  return hnr_from_r(f0_autocorr(window, sample_rate_hz, opt).peak_r);
}

// Median over the voiced frames of a centered window; unvoiced frames are
// neither used nor modified.
inline std::vector<double> smooth_f0(std::span<const double> raw, int width = 5) {
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  const auto n = static_cast<std::ptrdiff_t>(raw.size());
  std::vector<double> out(raw.begin(), raw.end());
  std::vector<double> vals;
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    if (raw[k] <= 0.0) continue;
    vals.clear();
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, k - half); j <= std::min(n - 1, k + half); ++j)
      if (raw[j] > 0.0) vals.push_back(raw[j]);
    std::sort(vals.begin(), vals.end());
    const std::size_t m = vals.size();
    out[k] = (m % 2) ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
  }
  return out;
}

// The volatile store keeps GCC 11's SLP vectorizer from folding the
// double -> float -> double round trip away at -O3.
inline double round_to_float(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

// Values are rounded to float precision so the 32-bit feature cache is
// lossless.
inline FeatureMatrix extract_features(const Waveform& w, const FeaturizerParams& p = {}) {
  validate(w);
  const double grid = p.longest_window_s();
  const auto pitch_frames = frame_signal(w, p.pitch_window_s, p.hop_s, grid);
  const auto energy_frames = frame_signal(w, p.energy_window_s, p.hop_s, grid);
  const auto hann = hann_window(energy_frames.front().size());
  const PitchOptions popt{p.f0_min_hz, p.f0_max_hz, p.voicing_threshold, p.octave_cost};

  const std::size_t n = pitch_frames.size();
  FeatureMatrix fm;
  fm.hop_s = p.hop_s;
  fm.rows.resize(n);
  std::vector<double> raw_f0(n);
  for (std::size_t k = 0; k < n; ++k) {
    const PitchEstimate pe = f0_autocorr(pitch_frames[k], w.sample_rate_hz, popt);
    const double rms = rms_energy(energy_frames[k], hann);
    raw_f0[k] = pe.f0_hz;
    auto& row = fm.rows[k];
    row[kRmsEnergy] = rms;
    row[kLoudness] = loudness_from_rms(rms);
    row[kZcr] = zcr(energy_frames[k]);
    row[kVoicingProb] = pe.voicing_prob;
    row[kHnrDb] = hnr_from_r(pe.peak_r);
  }
  const auto f0 = smooth_f0(raw_f0, p.median_width);
  for (std::size_t k = 0; k < n; ++k) {
    fm.rows[k][kF0Smooth] = f0[k];
    for (double& v : fm.rows[k]) v = round_to_float(v);
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
  FeatureRow mean{};
  FeatureRow std{1, 1, 1, 1, 1, 1};
  std::size_t frames = 0;
};

template <class MatrixPtrRange>
NormStats fit_norm_ptrs(const MatrixPtrRange& mats) {
  NormStats s;
  std::array<long double, kNumFeatures> sum{}, sq{};
  for (const FeatureMatrix* m : mats) {
    for (const auto& row : m->rows) {
      for (int f = 0; f < kNumFeatures; ++f) {
        sum[f] += row[f];
        sq[f] += static_cast<long double>(row[f]) * row[f];
      }
      ++s.frames;
    }
  }
  if (s.frames == 0) return s;
  for (int f = 0; f < kNumFeatures; ++f) {
    const long double mean = sum[f] / s.frames;
    const long double var = std::max<long double>(0.0L, sq[f] / s.frames - mean * mean);
    s.mean[f] = static_cast<double>(mean);
    const double sd = std::sqrt(static_cast<double>(var));
    s.std[f] = sd > 1e-9 * (1.0 + std::abs(s.mean[f])) ? sd : 1.0;
  }
  return s;
}

inline NormStats fit_norm(std::span<const FeatureMatrix> mats) {
  std::vector<const FeatureMatrix*> ptrs;
  for (const auto& m : mats) ptrs.push_back(&m);
  return fit_norm_ptrs(ptrs);
}

inline FeatureMatrix apply_norm(FeatureMatrix fm, const NormStats& s) {
  for (auto& row : fm.rows)
    for (int f = 0; f < kNumFeatures; ++f) row[f] = (row[f] - s.mean[f]) / s.std[f];
  return fm;
}

// ---------------------------------------------------------------------------
// Ablation

struct Ablation {
  bool duration_only = false;
  std::set<FeatureGroup> dropped;

  static Ablation none() { return {}; }
  static Ablation duration() { return {true, {}}; }
  static Ablation drop(std::set<FeatureGroup> groups) {
    if (groups.size() >= 3)
      throw std::invalid_argument("dropping every feature group is the duration-only ablation; request it explicitly");
    return {false, std::move(groups)};
  }
  bool is_none() const { return !duration_only && dropped.empty(); }

  // "all", "duration_only", or "-pitch-voicing" style names.
  std::string name() const {
    if (duration_only) return "duration_only";
    if (dropped.empty()) return "all";
    std::string s;
    for (auto g : dropped) s += std::string("-") + group_name(g);
    return s;
  }
  // Human-readable list of the groups still available.
  std::string kept() const {
    if (duration_only) return "duration";
    std::string s;
    for (auto g : {FeatureGroup::pitch, FeatureGroup::intensity, FeatureGroup::voicing}) {
      if (dropped.count(g)) continue;
      if (!s.empty()) s += "+";
      s += group_name(g);
    }
    return s;
  }
  bool operator==(const Ablation&) const = default;
};

inline FeatureMatrix ablate(FeatureMatrix fm, const Ablation& a) {
  if (a.dropped.size() >= 3)
    throw std::invalid_argument("dropping every feature group is the duration-only ablation; request it explicitly");
  if (a.duration_only) {
    for (auto& row : fm.rows) row.fill(1.0);
    return fm;
  }
  for (auto g : a.dropped)
    for (int c : group_columns(g))
      for (auto& row : fm.rows) row[c] = 0.0;
  return fm;
}

// ---------------------------------------------------------------------------
// Feature cache: uint32 n, uint32 6, then n*6 little-endian float32, row-major.

inline void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& fm) {
  std::string b;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put32(static_cast<std::uint32_t>(fm.n()));
  put32(kNumFeatures);
  for (const auto& row : fm.rows)
    for (double v : row) put32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file " + path.string());
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

inline FeatureMatrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto get32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(bytes[off] | (bytes[off + 1] << 8) | (bytes[off + 2] << 16) |
                                      (static_cast<std::uint32_t>(bytes[off + 3]) << 24));
  };
  if (bytes.size() < 8) throw std::runtime_error(path.string() + ": truncated feature header");
  const std::uint32_t n = get32(0), d = get32(4);
  if (d != kNumFeatures || bytes.size() != 8 + std::size_t{4} * n * d)
    throw std::runtime_error(path.string() + ": bad feature file shape");
  FeatureMatrix fm;
  fm.rows.resize(n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t f = 0; f < d; ++f) fm.rows[i][f] = std::bit_cast<float>(get32(8 + 4 * (i * d + f)));
  return fm;
}

inline std::filesystem::path feature_cache_path(const std::filesystem::path& dir, const std::string& utterance_id,
                                                const FeaturizerParams& p) {
  return dir / (utterance_id + "." + p.cache_key() + ".feat");
}

}  // namespace pitchacc
