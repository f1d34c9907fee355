// Copyright (c) the r2i project authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "r2i/weights.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "r2i/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight files assume a little-endian host");

namespace r2i {

namespace {

constexpr char kMagic[4] = {'R', '2', 'I', 'W'};
constexpr uint8_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size())
    throw CorruptError("weight file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const char* weight_kind_name(WeightKind k) {
  switch (k) {
    case WeightKind::kResidual: return "residual";
    case WeightKind::kPrediction: return "prediction";
    case WeightKind::kFull: return "full";
    case WeightKind::kDecoding: return "decoding";
    case WeightKind::kIr2i: return "ir2i";
    case WeightKind::kInpaint: return "inpaint";
    case WeightKind::kVanilla: return "vanilla";
  }
  return "?";
}

void save_weights(const std::string& path, const WeightFile& file) {
  std::string out;
  out.append(kMagic, 4);
  put<uint8_t>(out, kVersion);
  put<uint8_t>(out, uint8_t(file.kind));
  put<uint8_t>(out, file.stages);
  put<uint64_t>(out, file.seed);
  put<uint32_t>(out, uint32_t(file.params.size()));
  for (const auto& name : file.params.names()) {
    const Tensor& t = file.params.at(name);
    R2I_CHECK_ARG(name.size() < 65536, "parameter name too long");
    put<uint16_t>(out, uint16_t(name.size()));
    out.append(name);
    const Shape& s = t.shape();
    put<uint8_t>(out, 4);
    put<uint32_t>(out, uint32_t(s.n));
    put<uint32_t>(out, uint32_t(s.c));
    put<uint32_t>(out, uint32_t(s.h));
    put<uint32_t>(out, uint32_t(s.w));
    out.append(reinterpret_cast<const char*>(t.data()),
               size_t(t.count()) * sizeof(float));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write weights: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("weight write failed: " + path);
}

WeightFile load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights: " + path);
  std::string in((std::istreambuf_iterator<char>(f)),
                 std::istreambuf_iterator<char>());
  size_t pos = 0;
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0)
    throw CorruptError("not a weight file: " + path);
  pos = 4;
  const uint8_t version = take<uint8_t>(in, pos);
  if (version != kVersion)
    throw CorruptError("unknown weight format version " +
                       std::to_string(version));
  WeightFile file;
  const uint8_t kind = take<uint8_t>(in, pos);
  if (kind > uint8_t(WeightKind::kVanilla))
    throw CorruptError("unknown model kind tag");
  file.kind = WeightKind(kind);
  file.stages = take<uint8_t>(in, pos);
  file.seed = take<uint64_t>(in, pos);
  const uint32_t count = take<uint32_t>(in, pos);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = take<uint16_t>(in, pos);
    if (pos + name_len > in.size()) throw CorruptError("weight file truncated");
    std::string name(in.data() + pos, name_len);
    pos += name_len;
    const uint8_t ndim = take<uint8_t>(in, pos);
    if (ndim != 4) throw CorruptError("unsupported tensor rank");
    Shape s;
    s.n = int(take<uint32_t>(in, pos));
    s.c = int(take<uint32_t>(in, pos));
    s.h = int(take<uint32_t>(in, pos));
    s.w = int(take<uint32_t>(in, pos));
    const size_t bytes = size_t(s.count()) * sizeof(float);
    if (pos + bytes > in.size()) throw CorruptError("weight file truncated");
    std::vector<float> values(size_t(s.count()));
    std::memcpy(values.data(), in.data() + pos, bytes);
    pos += bytes;
    file.params.create(name, Tensor::from_values(s, std::move(values)));
  }
  return file;
}

std::array<uint8_t, 8> weight_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights: " + path);
  std::string in((std::istreambuf_iterator<char>(f)),
                 std::istreambuf_iterator<char>());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  if (EVP_Digest(in.data(), in.size(), md, &md_len, EVP_sha256(), nullptr) != 1 ||
      md_len < 8)
    throw IoError("digest computation failed");
  std::array<uint8_t, 8> out;
  std::memcpy(out.data(), md, 8);
  return out;
}

}  // namespace r2i
