#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hgkr {

// Little-endian byte buffer used by the encoder and index file formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v);
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(const char (&m)[5]);

  const std::vector<std::uint8_t>& data() const { return buf_; }

  // Appends a CRC-32 of everything written so far and flushes to `path`.
  void write_with_checksum(const std::string& path);

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  // Loads `path`, verifies the CRC-32 trailer and strips it.
  static ByteReader from_checksummed_file(const std::string& path);

  explicit ByteReader(std::vector<std::uint8_t> buf) : buf_(std::move(buf)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32();
  void expect_magic(const char (&m)[5]);
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace hgkr
