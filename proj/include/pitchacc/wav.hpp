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

// Mono waveforms and 16-bit PCM WAV files.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pitchacc {

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate_hz = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

inline void validate(const Waveform& w) {
  if (w.samples.empty()) throw AudioError("empty waveform");
  if (w.sample_rate_hz < 8000) throw AudioError("sample rate below 8000 Hz");
}

inline std::int16_t to_pcm16(double x) {
  return static_cast<std::int16_t>(std::lround(std::clamp(x, -1.0, 1.0) * 32767.0));
}
inline double from_pcm16(std::int16_t v) { return static_cast<double>(v) / 32767.0; }

// Snaps samples onto the 16-bit grid so an in-memory waveform equals what
// read_wav() returns after write_wav().
inline void quantize_pcm16(Waveform& w) {
  for (auto& s : w.samples) s = from_pcm16(to_pcm16(s));
}

namespace detail {
inline void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
}  // namespace detail

inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::string b;
  b.reserve(44 + 2 * n);
  b += "RIFF";
  detail::put_u32(b, 36 + 2 * n);
  b += "WAVEfmt ";
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, static_cast<std::uint32_t>(w.sample_rate_hz));
  detail::put_u32(b, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  detail::put_u16(b, 2);
  detail::put_u16(b, 16);
  b += "data";
  detail::put_u32(b, 2 * n);
  for (double s : w.samples) detail::put_u16(b, static_cast<std::uint16_t>(to_pcm16(s)));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path.string());
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { throw AudioError(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) || std::memcmp(bytes.data() + 8, "WAVE", 4))
    fail("not a RIFF/WAVE file");
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) fail("truncated chunk");
    if (!std::memcmp(chunk, "fmt ", 4)) {
      if (size < 16) fail("short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      if (detail::get_u16(f) != 1) fail("only PCM is supported");
      if (detail::get_u16(f + 2) != 1) fail("only mono is supported");
      if (detail::get_u16(f + 14) != 16) fail("only 16-bit samples are supported");
      w.sample_rate_hz = static_cast<int>(detail::get_u32(f + 4));
      have_fmt = true;
    } else if (!std::memcmp(chunk, "data", 4)) {
      if (!have_fmt) fail("data chunk before fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = from_pcm16(static_cast<std::int16_t>(detail::get_u16(bytes.data() + body + 2 * i)));
      return w;
    }
    pos = body + size + (size & 1);
  }
  fail("no data chunk");
  return w;
}

}  // namespace pitchacc
