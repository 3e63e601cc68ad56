#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ddet/adam.hpp"
#include "ddet/error.hpp"
#include "ddet/model.hpp"
#include "ddet/tensor.hpp"

// Checkpoint container: magic "DDET", u32 version, then a tensor table
// (u32 count; per entry u32 name length, UTF-8 name, u8 dtype code
// (0 = f32, 1 = f64), u8 rank (always 4), four u32 dims, raw little-endian
// values), then the optimizer state as a second table in the same format
// ("m.<name>", "v.<name>", and a scalar "step"), then CRC32 of everything
// before it. All multi-byte fields are little-endian.

namespace ddet {

inline constexpr char kCheckpointMagic[4] = {'D', 'D', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

struct ByteSink {
  std::vector<unsigned char> bytes;

  void put(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void put_u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    put(b, 4);
  }
  void put_u8(std::uint8_t v) { bytes.push_back(v); }
};

struct ByteSource {
  const unsigned char* p;
  std::size_t left;
  std::string path;

  void need(std::size_t n) const {
    if (left < n) throw FormatError(path + ": truncated checkpoint");
  }
  void get(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p, n);
    p += n;
    left -= n;
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint8_t get_u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --left;
    return v;
  }
};

template <typename T>
void write_table(ByteSink& sink, const ParamMap<T>& table) {
  sink.put_u32(static_cast<std::uint32_t>(table.size()));
  for (const auto& [name, t] : table) {
    sink.put_u32(static_cast<std::uint32_t>(name.size()));
    sink.put(name.data(), name.size());
    sink.put_u8(dtype_code<T>());
    sink.put_u8(4);
    const Shape s = t.shape();
    sink.put_u32(static_cast<std::uint32_t>(s.n));
    sink.put_u32(static_cast<std::uint32_t>(s.c));
    sink.put_u32(static_cast<std::uint32_t>(s.h));
    sink.put_u32(static_cast<std::uint32_t>(s.w));
    // Assumes a little-endian host, as does every target we build for.
    sink.put(t.data(), t.numel() * sizeof(T));
  }
}

template <typename T>
ParamMap<T> read_table(ByteSource& src) {
  ParamMap<T> table;
  const std::uint32_t count = src.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = src.get_u32();
    src.need(name_len);
    std::string name(reinterpret_cast<const char*>(src.p), name_len);
    src.p += name_len;
    src.left -= name_len;
    const std::uint8_t code = src.get_u8();
    if (code != dtype_code<T>()) {
      throw FormatError(src.path + ": tensor '" + name + "' has dtype code " +
                        std::to_string(code) + ", expected " +
                        std::to_string(dtype_code<T>()));
    }
    const std::uint8_t rank = src.get_u8();
    if (rank != 4) {
      throw FormatError(src.path + ": tensor '" + name + "' has rank " + std::to_string(rank) +
                        ", expected 4");
    }
    Shape s;
    s.n = static_cast<int>(src.get_u32());
    s.c = static_cast<int>(src.get_u32());
    s.h = static_cast<int>(src.get_u32());
    s.w = static_cast<int>(src.get_u32());
    Tensor<T> t(s);
    src.get(t.data(), t.numel() * sizeof(T));
    if (!table.emplace(std::move(name), std::move(t)).second) {
      throw FormatError(src.path + ": duplicate tensor name in checkpoint");
    }
  }
  return table;
}

}  // namespace detail

template <typename T>
void checkpoint_save(const ModelParams<T>& params, const AdamState<T>& state,
                     const std::string& path) {
  detail::ByteSink sink;
  sink.put(kCheckpointMagic, 4);
  sink.put_u32(kCheckpointVersion);
  detail::write_table(sink, params.tensors);

  ParamMap<T> opt;
  for (const auto& [name, t] : state.m) opt.emplace("m." + name, t);
  for (const auto& [name, t] : state.v) opt.emplace("v." + name, t);
  Tensor<T> step(Shape{1, 1, 1, 1});
  step.data()[0] = static_cast<T>(state.step);
  opt.emplace("step", std::move(step));
  detail::write_table(sink, opt);

  const auto crc =
      static_cast<std::uint32_t>(crc32(0L, sink.bytes.data(), static_cast<uInt>(sink.bytes.size())));
  sink.put_u32(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(sink.bytes.data()),
            static_cast<std::streamsize>(sink.bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

template <typename T>
std::pair<ModelParams<T>, AdamState<T>> checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 12) throw FormatError(path + ": truncated checkpoint");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = static_cast<std::uint32_t>(bytes[body]) |
                         (static_cast<std::uint32_t>(bytes[body + 1]) << 8) |
                         (static_cast<std::uint32_t>(bytes[body + 2]) << 16) |
                         (static_cast<std::uint32_t>(bytes[body + 3]) << 24);
  const auto actual = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
  if (stored != actual) throw FormatError(path + ": CRC mismatch (corrupted checkpoint)");

  detail::ByteSource src{bytes.data(), body, path};
  char magic[4];
  src.get(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(path + ": bad magic bytes (not a checkpoint)");
  }
  const std::uint32_t version = src.get_u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  }

  ModelParams<T> params;
  params.tensors = detail::read_table<T>(src);
  for (auto& [name, t] : params.tensors) t.set_requires_grad(true);

  ParamMap<T> opt = detail::read_table<T>(src);
  if (src.left != 0) throw FormatError(path + ": trailing bytes after optimizer table");

  AdamState<T> state;
  for (auto& [name, t] : opt) {
    if (name == "step") {
      state.step = static_cast<std::int64_t>(t.data()[0]);
    } else if (name.rfind("m.", 0) == 0) {
      state.m.emplace(name.substr(2), std::move(t));
    } else if (name.rfind("v.", 0) == 0) {
      state.v.emplace(name.substr(2), std::move(t));
    } else {
      throw FormatError(path + ": unknown optimizer entry '" + name + "'");
    }
  }
  return {std::move(params), std::move(state)};
}

// Checks that loaded parameters exactly cover the architecture the config
// declares; names the first offender so mismatches are diagnosable.
template <typename T>
void validate_against_config(const ModelParams<T>& loaded, const ModelConfig& cfg) {
  ModelParams<T> expect = init_params<T>(cfg, 0);
  for (const auto& [name, t] : expect.tensors) {
    auto it = loaded.tensors.find(name);
    if (it == loaded.tensors.end()) {
      throw FormatError("checkpoint missing parameter '" + name + "' required by the config");
    }
    if (!(it->second.shape() == t.shape())) {
      throw FormatError("parameter '" + name + "' has shape " + it->second.shape().str() +
                        ", config expects " + t.shape().str());
    }
  }
  for (const auto& [name, t] : loaded.tensors) {
    if (expect.tensors.find(name) == expect.tensors.end()) {
      throw FormatError("checkpoint has unknown parameter '" + name + "' not in the config");
    }
  }
}

}  // namespace ddet
