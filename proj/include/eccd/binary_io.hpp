#pragma once

// Little-endian binary encoding shared by every checkpoint file. Files are
// decoded from a fully read buffer so a short or corrupt file never leaves a
// half-filled object behind.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eccd {

/// Malformed, truncated or wrong-version file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u32(std::uint32_t v);
  void f64(double v);
  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }
  const std::vector<char>& bytes() const { return bytes_; }
  /// Writes to a sibling temporary, then renames over `path`.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes, std::string what)
      : bytes_(std::move(bytes)), what_(std::move(what)) {}
  static ByteReader open(const std::filesystem::path& path);

  /// Throws FormatError unless the next bytes equal `m`.
  void expect_magic(std::string_view m);
  std::uint32_t u32();
  double f64();
  std::vector<double> f64s(std::size_t n);
  /// Throws FormatError if unread bytes remain.
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::vector<char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace eccd
