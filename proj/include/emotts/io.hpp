// Copyright 2026 The emotts Authors
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

#pragma once

// File formats shared by every stage.
//
// WAV: RIFF/WAVE, mono. Written as 16-bit PCM; 16-bit PCM and 32-bit IEEE
// float are accepted on read.
//
// Tensor file (.emt), all integers little-endian:
//   "EMTT" | u32 version=1 | u32 dtype (1=f32, 2=f64) | u32 ndim |
//   u64 dims[ndim] | u64 config_hash | data (row-major)
//
// Archive (.ema): a JSON metadata block plus named tensors:
//   "EMTA" | u32 version=1 | u64 meta_len | meta bytes (UTF-8 JSON) |
//   u32 count | count x { u32 name_len | name | u32 dtype | u32 ndim |
//   u64 dims[ndim] | data }
// Checkpoints and feature stores are archives.

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "emotts/common.hpp"
#include "emotts/rng.hpp"
#include "json.hpp"

namespace emotts::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class DType : uint32_t { kF32 = 1, kF64 = 2 };

namespace detail {

template <typename T>
void Put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}
  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string Bytes(size_t n) {
    Need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void Need(size_t n) {
    if (pos_ + n > data_.size()) throw RuntimeError(what_ + ": truncated file");
  }
  const std::string& data_;
  std::string what_;
  size_t pos_ = 0;
};

inline void PutMatrix(std::string& buf, const Mat& m, DType dt) {
  Put<uint32_t>(buf, static_cast<uint32_t>(dt));
  Put<uint32_t>(buf, 2);
  Put<uint64_t>(buf, static_cast<uint64_t>(m.rows()));
  Put<uint64_t>(buf, static_cast<uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (dt == DType::kF32)
      Put<float>(buf, static_cast<float>(m.data()[i]));
    else
      Put<double>(buf, m.data()[i]);
  }
}

inline Mat GetMatrix(Reader& r, bool with_hash, uint64_t* hash) {
  const auto dt = static_cast<DType>(r.Get<uint32_t>());
  const uint32_t ndim = r.Get<uint32_t>();
  if (ndim < 1 || ndim > 2) throw RuntimeError("tensor: only 1-D and 2-D tensors supported");
  uint64_t dims[2] = {1, 1};
  for (uint32_t i = 0; i < ndim; ++i) dims[i] = r.Get<uint64_t>();
  if (ndim == 1) std::swap(dims[0], dims[1]);
  if (with_hash) *hash = r.Get<uint64_t>();
  Mat m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (dt == DType::kF32)
      m.data()[i] = r.Get<float>();
    else if (dt == DType::kF64)
      m.data()[i] = r.Get<double>();
    else
      throw RuntimeError("tensor: unknown dtype");
  }
  return m;
}

}  // namespace detail

inline std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingDependency("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void WriteFile(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write '" + p.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError("write failed for '" + p.string() + "'");
}

inline uint64_t HashBytes(std::string_view s) { return Fnv1a64(s); }
inline uint64_t HashFile(const fs::path& p) { return HashBytes(ReadFile(p)); }

inline std::string HexHash(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// WAV

inline std::string EncodeWav(const std::vector<double>& samples, int sample_rate) {
  std::string buf;
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  buf += "RIFF";
  detail::Put<uint32_t>(buf, 36 + data_bytes);
  buf += "WAVEfmt ";
  detail::Put<uint32_t>(buf, 16);
  detail::Put<uint16_t>(buf, 1);  // PCM
  detail::Put<uint16_t>(buf, 1);  // mono
  detail::Put<uint32_t>(buf, static_cast<uint32_t>(sample_rate));
  detail::Put<uint32_t>(buf, static_cast<uint32_t>(sample_rate) * 2);
  detail::Put<uint16_t>(buf, 2);
  detail::Put<uint16_t>(buf, 16);
  buf += "data";
  detail::Put<uint32_t>(buf, data_bytes);
  for (double s : samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    detail::Put<int16_t>(buf, static_cast<int16_t>(q));
  }
  return buf;
}

/// Rounds to the 16-bit PCM grid so that write/read round-trips exactly.
inline double QuantizePcm16(double s) {
  return std::clamp(std::round(s * 32768.0), -32768.0, 32767.0) / 32768.0;
}

struct WavData {
  int sample_rate = 0;
  std::vector<double> samples;
};

inline WavData DecodeWav(const std::string& bytes, const std::string& what) {
  detail::Reader r(bytes, what);
  if (r.Bytes(4) != "RIFF") throw ValidationError(what + ": not a RIFF file");
  r.Get<uint32_t>();
  if (r.Bytes(4) != "WAVE") throw ValidationError(what + ": not a WAVE file");
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  while (!r.done()) {
    const std::string id = r.Bytes(4);
    const uint32_t size = r.Get<uint32_t>();
    if (id == "fmt ") {
      const std::string body = r.Bytes(size);
      detail::Reader fr(body, what);
      format = fr.Get<uint16_t>();
      channels = fr.Get<uint16_t>();
      rate = fr.Get<uint32_t>();
      fr.Get<uint32_t>();
      fr.Get<uint16_t>();
      bits = fr.Get<uint16_t>();
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ValidationError(what + ": data chunk before fmt chunk");
      if (channels != 1) throw ValidationError(what + ": only mono audio is supported");
      WavData w;
      w.sample_rate = static_cast<int>(rate);
      const std::string body = r.Bytes(size);
      detail::Reader dr(body, what);
      if (format == 1 && bits == 16) {
        for (uint32_t i = 0; i < size / 2; ++i) w.samples.push_back(dr.Get<int16_t>() / 32768.0);
      } else if (format == 3 && bits == 32) {
        for (uint32_t i = 0; i < size / 4; ++i) w.samples.push_back(dr.Get<float>());
      } else {
        throw ValidationError(what + ": unsupported WAV encoding");
      }
      return w;
    } else {
      r.Bytes(size + (size & 1));
    }
  }
  throw ValidationError(what + ": no data chunk");
}

inline void WriteWav(const fs::path& p, const std::vector<double>& samples, int sample_rate) {
  WriteFile(p, EncodeWav(samples, sample_rate));
}

inline WavData ReadWav(const fs::path& p) { return DecodeWav(ReadFile(p), p.string()); }

// ---------------------------------------------------------------------------
// Tensor file

inline std::string EncodeTensor(const Mat& m, uint64_t config_hash, DType dt = DType::kF32) {
  std::string buf = "EMTT";
  detail::Put<uint32_t>(buf, 1);
  detail::Put<uint32_t>(buf, static_cast<uint32_t>(dt));
  detail::Put<uint32_t>(buf, 2);
  detail::Put<uint64_t>(buf, static_cast<uint64_t>(m.rows()));
  detail::Put<uint64_t>(buf, static_cast<uint64_t>(m.cols()));
  detail::Put<uint64_t>(buf, config_hash);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (dt == DType::kF32)
      detail::Put<float>(buf, static_cast<float>(m.data()[i]));
    else
      detail::Put<double>(buf, m.data()[i]);
  }
  return buf;
}

inline Mat DecodeTensor(const std::string& bytes, uint64_t* config_hash, const std::string& what) {
  detail::Reader r(bytes, what);
  if (r.Bytes(4) != "EMTT") throw RuntimeError(what + ": bad tensor magic");
  if (r.Get<uint32_t>() != 1) throw RuntimeError(what + ": unsupported tensor version");
  uint64_t h = 0;
  Mat m = detail::GetMatrix(r, true, &h);
  if (config_hash) *config_hash = h;
  return m;
}

inline void WriteTensor(const fs::path& p, const Mat& m, uint64_t config_hash) {
  WriteFile(p, EncodeTensor(m, config_hash));
}

inline Mat ReadTensor(const fs::path& p, uint64_t* config_hash = nullptr) {
  return DecodeTensor(ReadFile(p), config_hash, p.string());
}

// ---------------------------------------------------------------------------
// Archive

struct Archive {
  json meta = json::object();
  std::map<std::string, Mat> tensors;
  std::map<std::string, DType> dtypes;

  void Put(const std::string& name, Mat m, DType dt = DType::kF64) {
    tensors[name] = std::move(m);
    dtypes[name] = dt;
  }
  const Mat& Get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw RuntimeError("archive: missing tensor '" + name + "'");
    return it->second;
  }
  bool Has(const std::string& name) const { return tensors.count(name) > 0; }
};

inline std::string EncodeArchive(const Archive& a) {
  std::string buf = "EMTA";
  detail::Put<uint32_t>(buf, 1);
  const std::string meta = a.meta.dump();
  detail::Put<uint64_t>(buf, meta.size());
  buf += meta;
  detail::Put<uint32_t>(buf, static_cast<uint32_t>(a.tensors.size()));
  for (const auto& [name, m] : a.tensors) {
    detail::Put<uint32_t>(buf, static_cast<uint32_t>(name.size()));
    buf += name;
    auto dt = a.dtypes.count(name) ? a.dtypes.at(name) : DType::kF64;
    detail::PutMatrix(buf, m, dt);
  }
  return buf;
}

inline Archive DecodeArchive(const std::string& bytes, const std::string& what) {
  detail::Reader r(bytes, what);
  if (r.Bytes(4) != "EMTA") throw RuntimeError(what + ": bad archive magic");
  if (r.Get<uint32_t>() != 1) throw RuntimeError(what + ": unsupported archive version");
  Archive a;
  const auto meta_len = r.Get<uint64_t>();
  a.meta = json::parse(r.Bytes(meta_len));
  const uint32_t count = r.Get<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = r.Get<uint32_t>();
    std::string name = r.Bytes(len);
    a.tensors[name] = detail::GetMatrix(r, false, nullptr);
  }
  return a;
}

inline void WriteArchive(const fs::path& p, const Archive& a) { WriteFile(p, EncodeArchive(a)); }
inline Archive ReadArchive(const fs::path& p) { return DecodeArchive(ReadFile(p), p.string()); }

// ---------------------------------------------------------------------------
// Line-delimited JSON

inline std::vector<json> ReadJsonl(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw MissingDependency("cannot open '" + p.string() + "'");
  std::vector<json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(p.string() + ":" + std::to_string(lineno) + ": malformed line (" +
                            e.what() + ")");
    }
  }
  return out;
}

inline void WriteJsonl(const fs::path& p, const std::vector<json>& rows) {
  std::string buf;
  for (const auto& r : rows) {
    buf += r.dump();
    buf += '\n';
  }
  WriteFile(p, buf);
}

inline void AppendJsonl(const fs::path& p, const json& row) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::app);
  out << row.dump() << '\n';
}

}  // namespace emotts::io
