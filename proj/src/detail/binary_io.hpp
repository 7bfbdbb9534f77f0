#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <zlib.h>

#include "dposer/types.hpp"

namespace dposer::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }

  // Appends the CRC32 of everything written so far.
  void seal() { put<std::uint32_t>(crc32_of(bytes_.data(), bytes_.size())); }

  const std::vector<unsigned char>& bytes() const { return bytes_; }

  static std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
  }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string what) : bytes_(std::move(bytes)), what_(std::move(what)) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > bytes_.size()) throw CorruptionError(what_ + ": file is truncated");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void expect_magic(const char (&magic)[5]) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), magic, 4) != 0)
      throw FormatError(what_ + ": bad magic bytes (expected '" + std::string(magic, 4) + "')");
    pos_ = 4;
  }

  // Verifies the trailing CRC32 over all preceding bytes and hides it from
  // further reads.
  void verify_crc() {
    if (bytes_.size() < 8) throw CorruptionError(what_ + ": file is truncated");
    const std::size_t body = bytes_.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes_.data() + body, 4);
    if (stored != ByteWriter::crc32_of(bytes_.data(), body)) throw CorruptionError(what_ + ": CRC mismatch");
    bytes_.resize(body);
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<unsigned char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& bytes);

}  // namespace dposer::detail
