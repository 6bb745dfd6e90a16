#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "adathresh/error.hpp"

namespace adt::detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian; big-endian hosts need byte swapping");

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void tag(const char (&magic)[9]) { out_.write(magic, 8); }

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }

  void f64s(const std::vector<double>& v) {
    u64(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void expect_tag(const char (&magic)[9]) {
    char buf[8];
    in_.read(buf, 8);
    if (!in_ || std::memcmp(buf, magic, 8) != 0)
      throw Error(ErrorCode::parse, source_ + ": bad magic, expected " + std::string(magic));
  }

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }

  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }

  std::vector<double> f64s(std::uint64_t expected) {
    const auto n = u64();
    if (n != expected)
      throw Error(ErrorCode::shape_mismatch, source_ + ": array length " + std::to_string(n) +
                                                 " != expected " + std::to_string(expected));
    return f64s_raw(n);
  }

  std::vector<double> f64s() { return f64s_raw(u64()); }

  std::string str() {
    const auto n = u64();
    if (n > (1u << 24)) throw Error(ErrorCode::parse, source_ + ": string too long");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }

 private:
  std::vector<double> f64s_raw(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 34)) throw Error(ErrorCode::parse, source_ + ": array too long");
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }

  void check() {
    if (!in_) throw Error(ErrorCode::parse, source_ + ": truncated file");
  }

  std::istream& in_;
  std::string source_;
};

}  // namespace adt::detail
