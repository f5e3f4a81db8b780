#pragma once

// Binary container shared by checkpoints and solution fields: one line of
// compact JSON, a '\n', then `payload_count` little-endian float64 values.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pinnevo {

using Json = nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t byte_offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace io {

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
  }
}

/// Writes to `path` via a temporary sibling and rename, so readers never see
/// a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::string encode_container(Json header, const std::vector<double>& payload) {
  header["payload_count"] = payload.size();
  std::string bytes = header.dump();
  bytes.push_back('\n');
  const std::size_t start = bytes.size();
  bytes.resize(start + 8 * payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    const std::uint64_t le = to_little_endian(std::bit_cast<std::uint64_t>(payload[i]));
    std::memcpy(bytes.data() + start + 8 * i, &le, 8);
  }
  return bytes;
}

struct Container {
  Json header;
  std::vector<double> payload;
};

inline Container decode_container(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw FormatError("missing header terminator", bytes.size());
  Container c;
  try {
    c.header = Json::parse(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(newline));
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("malformed header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  if (!c.header.is_object() || !c.header.contains("payload_count") ||
      !c.header["payload_count"].is_number_unsigned()) {
    throw FormatError("header lacks payload_count", 0);
  }
  const auto count = c.header["payload_count"].get<std::size_t>();
  const std::size_t start = newline + 1;
  const std::size_t have = bytes.size() - start;
  if (have < 8 * count) {
    throw FormatError("truncated payload: expected " + std::to_string(8 * count) + " bytes, found " +
                          std::to_string(have),
                      bytes.size());
  }
  if (have > 8 * count) throw FormatError("trailing bytes after payload", start + 8 * count);
  c.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t le;
    std::memcpy(&le, bytes.data() + start + 8 * i, 8);
    c.payload[i] = std::bit_cast<double>(to_little_endian(le));
  }
  return c;
}

/// FNV-1a, used to tag outputs with the configuration that produced them.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace io

#ifndef PINNEVO_VERSION
#define PINNEVO_VERSION "0.1.0"
#endif

inline constexpr const char* kVersion = PINNEVO_VERSION;

}  // namespace pinnevo
