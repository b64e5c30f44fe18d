#include "eccd/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace eccd {

void ByteWriter::u32(std::uint32_t v) {
  for (int b = 0; b < 4; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void ByteWriter::f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b)
    bytes_.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

void ByteWriter::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ByteReader ByteReader::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return ByteReader(std::move(bytes), path.string());
}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n)
    throw FormatError(what_ + ": truncated file or version mismatch");
}

void ByteReader::expect_magic(std::string_view m) {
  need(m.size());
  if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
    throw FormatError(what_ + ": bad magic, expected " + std::string(m));
  pos_ += m.size();
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
  pos_ += 4;
  return v;
}

double ByteReader::f64() {
  need(8);
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
  pos_ += 8;
  return std::bit_cast<double>(bits);
}

std::vector<double> ByteReader::f64s(std::size_t n) {
  if (n > (bytes_.size() - pos_) / 8)
    throw FormatError(what_ + ": truncated file or version mismatch");
  std::vector<double> v(n);
  for (auto& x : v) x = f64();
  return v;
}

void ByteReader::expect_end() const {
  if (pos_ != bytes_.size())
    throw FormatError(what_ + ": unexpected trailing bytes");
}

}  // namespace eccd
