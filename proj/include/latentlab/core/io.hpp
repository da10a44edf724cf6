#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "latentlab/core/error.hpp"

namespace latentlab {

static_assert(std::endian::native == std::endian::little,
              "binary artifact payloads are written in native little-endian order");

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

/// Append-only byte buffer for binary artifacts.
class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    put_bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("short write to " + path.string());
  }

 private:
  std::vector<unsigned char> buf_;
};

/// Bounds-checked reader; every overrun is a LoadError naming the artifact.
class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> data, std::string what)
      : data_(std::move(data)), what_(std::move(what)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string(std::size_t max_len = 1u << 26) {
    auto n = get<std::uint64_t>();
    if (n > max_len) throw LoadError(what_ + ": implausible string length");
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw LoadError(what_ + ": truncated file");
  }
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace latentlab
