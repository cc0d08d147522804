// Copyright 2026 The Rebasin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// RBSN checkpoints and the plain-text permutation format.

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "rebasin/errors.hpp"
#include "rebasin/model.hpp"

namespace rebasin {
namespace {

constexpr std::array<char, 4> kMagic = {'R', 'B', 'S', 'N'};
// Refuse absurd headers before allocating.
constexpr std::uint32_t kMaxDim = 1u << 24;

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {
      static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
      static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

void put_f32(std::ostream& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ParseError(std::string("checkpoint truncated while reading ") + what,
                       offset_ + static_cast<std::uint64_t>(in_.gcount()));
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void write_checkpoint(const ModelWeights& model, std::ostream& out) {
  model.validate();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    put_u32(out, static_cast<std::uint32_t>(layer.weight.rows()));
    put_u32(out, static_cast<std::uint32_t>(layer.weight.cols()));
    for (const float v : layer.weight.values()) put_f32(out, v);
    for (const float v : layer.bias) put_f32(out, v);
  }
  const char code = static_cast<char>(model.activation);
  out.write(&code, 1);
  if (!out) throw Error("failed writing checkpoint");
}

ModelWeights read_checkpoint(std::istream& in) {
  Reader reader(in);
  std::array<char, 4> magic{};
  reader.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) {
    throw ParseError("bad checkpoint magic: expected \"RBSN\", found \"" +
                         std::string(magic.data(), magic.size()) + "\"",
                     0);
  }
  const std::uint32_t version = reader.u32("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version),
                     4);
  }
  const std::uint64_t layers_offset = reader.offset();
  const std::uint32_t num_layers = reader.u32("layer count");
  if (num_layers == 0 || num_layers > 4096) {
    throw ParseError("implausible layer count " + std::to_string(num_layers),
                     layers_offset);
  }
  ModelWeights model;
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    const std::uint64_t shape_offset = reader.offset();
    const std::uint32_t rows = reader.u32("layer rows");
    const std::uint32_t cols = reader.u32("layer cols");
    if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim) {
      throw ParseError("implausible layer shape " + std::to_string(rows) + "x" +
                           std::to_string(cols),
                       shape_offset);
    }
    if (l > 0 && cols != model.layers.back().weight.rows()) {
      throw ParseError("layer " + std::to_string(l) +
                           " input width does not chain with previous layer",
                       shape_offset);
    }
    DenseLayer<float> layer{Matrix<float>(rows, cols),
                            std::vector<float>(rows)};
    for (float& v : layer.weight.values()) v = reader.f32("weights");
    for (float& v : layer.bias) v = reader.f32("biases");
    model.layers.push_back(std::move(layer));
  }
  const std::uint64_t code_offset = reader.offset();
  char code = 0;
  reader.bytes(&code, 1, "activation code");
  switch (static_cast<std::uint8_t>(code)) {
    case 0:
      model.activation = Activation::kRelu;
      break;
    case 1:
      model.activation = Activation::kIdentity;
      break;
    default:
      throw ParseError("unknown activation code " +
                           std::to_string(static_cast<std::uint8_t>(code)),
                       code_offset);
  }
  return model;
}

void save_checkpoint(const ModelWeights& model,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  write_checkpoint(model, out);
}

ModelWeights load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::string format_permutation_set(const PermutationSet& perms) {
  std::string out;
  for (const auto& p : perms.perms) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(p[i]);
    }
    out += '\n';
  }
  return out;
}

PermutationSet parse_permutation_set(const std::string& text) {
  PermutationSet out;
  std::istringstream lines(text);
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(lines, line)) {
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::vector<int> map;
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      int value = 0;
      try {
        value = std::stoi(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) {
        throw ParseError("bad permutation index \"" + token + "\"",
                         line_offset);
      }
      map.push_back(value);
    }
    if (!is_bijection(map)) {
      throw ParseError("permutation line is not a bijection", line_offset);
    }
    out.perms.emplace_back(std::move(map));
  }
  return out;
}

void save_permutation_set(const PermutationSet& perms,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out << format_permutation_set(perms);
}

PermutationSet load_permutation_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open permutation file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_permutation_set(buffer.str());
}

}  // namespace rebasin
