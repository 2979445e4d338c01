#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "venom/errors.hpp"

namespace venom::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

/// Append-only little-endian byte buffer.
class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; errors name the failing offset.
class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  void bytes(void* p, std::size_t n, const char* what) {
    if (n > buf_.size() - pos_)
      throw FormatError(std::string("truncated file: need ") + std::to_string(n) +
                        " bytes for " + what + " at offset " + std::to_string(pos_) +
                        ", have " + std::to_string(buf_.size() - pos_));
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }

  void expect_magic(const char (&m)[5]) {
    char got[4];
    const std::size_t at = pos_;
    bytes(got, 4, "magic");
    if (std::memcmp(got, m, 4) != 0)
      throw FormatError("bad magic at offset " + std::to_string(at));
  }

  template <class T>
  T read(const char* what) {
    T v;
    bytes(&v, sizeof(T), what);
    return v;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void expect_end() const {
    if (pos_ != buf_.size())
      throw FormatError("trailing bytes after offset " + std::to_string(pos_));
  }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace venom::binio
