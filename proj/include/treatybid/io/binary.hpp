#pragma once

// Little-endian binary encoding shared by checkpoints and state snapshots.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::io {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void boolean(bool v) { u8(v ? 1 : 0); }

  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }

  void engine(const Engine& eng) { str(save_engine(eng)); }

  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

  bool ok() const { return static_cast<bool>(out_); }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("checkpoint: unexpected end of data");
    return static_cast<std::uint8_t>(c);
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }

  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool boolean() { return u8() != 0; }

  std::string str() {
    const std::uint64_t n = length();
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("checkpoint: truncated string");
    return s;
  }

  std::vector<double> f64s() {
    const std::uint64_t n = length();
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

  void engine(Engine& eng) {
    const std::string s = str();
    std::istringstream in(s);
    in >> eng;
    if (!in) throw FormatError("checkpoint: malformed rng state");
  }

  void expect(const std::string& bytes, const char* what) {
    std::string got(bytes.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != bytes) throw FormatError(std::string("checkpoint: bad ") + what);
  }

 private:
  std::uint64_t length() {
    const std::uint64_t n = u64();
    if (n > (std::uint64_t{1} << 34)) throw FormatError("checkpoint: implausible length");
    return n;
  }

  std::istream& in_;
};

}  // namespace treatybid::io
