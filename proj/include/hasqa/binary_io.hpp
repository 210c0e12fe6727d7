#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hasqa/errors.hpp"

namespace hasqa {

// Little-endian encoder over a growable byte buffer.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void raw(std::string_view s) {
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  template <typename U>
  void integer(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void f32(float v) { integer(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
  void string(std::string_view s) {
    integer(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Little-endian decoder; every failure reports the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  template <typename U>
  U integer(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(U);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(integer<std::uint32_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(integer<std::uint64_t>(what)); }
  std::string string(const char* what) {
    const auto start = pos_;
    const auto n = integer<std::uint32_t>(what);
    if (n > remaining()) {
      throw FormatError(start, std::string("truncated ") + what + " (length " +
                                   std::to_string(n) + ")");
    }
    auto b = bytes(n, what);
    return {b.begin(), b.end()};
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > remaining()) {
      throw FormatError(pos_, std::string("truncated ") + what + ": need " + std::to_string(n) +
                                  " bytes, have " + std::to_string(remaining()));
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames, so a failed write never
// leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace hasqa
