#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "seqdiff/error.hpp"

namespace seqdiff::binary {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

/// Sequential little-endian reader over a byte string.
class Reader {
 public:
  Reader(const std::string& bytes, std::string format) : bytes_(bytes), format_(std::move(format)) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - offset_ < sizeof(T)) {
      throw ParseError(format_ + ": truncated while reading " + what, offset_);
    }
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n, const char* what) {
    if (bytes_.size() - offset_ < n) throw ParseError(format_ + ": truncated while reading " + what, offset_);
    std::string s = bytes_.substr(offset_, n);
    offset_ += n;
    return s;
  }

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return bytes_.size() - offset_; }

 private:
  const std::string& bytes_;
  std::string format_;
  std::size_t offset_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace seqdiff::binary
