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

// Checkpoint files.
//
//   "PACK"                       magic
//   uint32 version               (= 1)
//   uint64 metadata length, then UTF-8 metadata (JSON: config, vocabulary, ...)
//   uint32 tensor count
//   per tensor: uint32 name length, name, uint32 rank, uint64 dims[rank],
//               numel float32 values, row-major
//
// All integers and floats are little-endian.
#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pitchacc/nn/tensor.hpp"

namespace pitchacc::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw std::out_of_range("checkpoint has no tensor named '" + name + "'");
  }
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string b;
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  b += "PACK";
  put(kCheckpointVersion, 4);
  put(ck.metadata.size(), 8);
  b += ck.metadata;
  put(ck.tensors.size(), 4);
  for (const auto& t : ck.tensors) {
    if (t.data.size() != numel(t.shape)) throw CheckpointError("tensor '" + t.name + "' size does not match shape");
    put(t.name.size(), 4);
    b += t.name;
    put(t.shape.size(), 4);
    for (auto d : t.shape) put(d, 8);
    for (float f : t.data) put(std::bit_cast<std::uint32_t>(f), 4);
  }
  return b;
}

inline Checkpoint decode_checkpoint(const std::string& b) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > b.size()) throw CheckpointError("truncated checkpoint");
  };
  auto get = [&](int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
    pos += static_cast<std::size_t>(bytes);
    return v;
  };
  auto get_str = [&](std::size_t n) {
    need(n);
    std::string s = b.substr(pos, n);
    pos += n;
    return s;
  };
  if (get_str(4) != "PACK") throw CheckpointError("not a checkpoint file");
  const auto version = get(4);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.metadata = get_str(get(8));
  const auto count = get(4);
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = get_str(get(4));
    const auto rank = get(4);
    for (std::uint64_t r = 0; r < rank; ++r) t.shape.push_back(get(8));
    const std::size_t n = numel(t.shape);
    need(4 * n);
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
    ck.tensors.push_back(std::move(t));
  }
  if (pos != b.size()) throw CheckpointError("trailing bytes after checkpoint");
  return ck;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = encode_checkpoint(ck);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace pitchacc::nn
