#include "lsf/binary_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "lsf/error.hpp"

namespace lsf::io {
namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

std::string magic_string(const Magic& m) { return std::string(m.data(), m.size()); }

void BinaryWriter::magic(const Magic& m) { out_.write(m.data(), m.size()); }
void BinaryWriter::u8(std::uint8_t v) { put(out_, v); }
void BinaryWriter::u16(std::uint16_t v) { put(out_, v); }
void BinaryWriter::u32(std::uint32_t v) { put(out_, v); }
void BinaryWriter::u64(std::uint64_t v) { put(out_, v); }
void BinaryWriter::f32(float v) { put(out_, std::bit_cast<std::uint32_t>(v)); }
void BinaryWriter::f64(double v) { put(out_, std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::f32s(std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) f32(v);
  }
}

void BinaryWriter::f64s(std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double v : values) f64(v);
  }
}

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryReader::read_raw(void* dst, std::size_t n, const char* what) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw DataError(source_ + ": truncated file while reading " + what);
  }
}

void BinaryReader::expect_magic(const Magic& m) {
  Magic got{};
  in_.read(got.data(), got.size());
  if (static_cast<std::size_t>(in_.gcount()) != got.size() || got != m) {
    throw DataError(source_ + ": bad magic, expected \"" + magic_string(m) + "\"");
  }
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  read_raw(&v, sizeof v, "u8");
  return v;
}

std::uint16_t BinaryReader::u16() {
  std::uint16_t v;
  read_raw(&v, sizeof v, "u16");
  return to_little(v);
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  read_raw(&v, sizeof v, "u32");
  return to_little(v);
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  read_raw(&v, sizeof v, "u64");
  return to_little(v);
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }
double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

void BinaryReader::f32s(std::span<float> out) {
  read_raw(out.data(), out.size_bytes(), "f32 payload");
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : out) v = std::bit_cast<float>(to_little(std::bit_cast<std::uint32_t>(v)));
  }
}

void BinaryReader::f64s(std::span<double> out) {
  read_raw(out.data(), out.size_bytes(), "f64 payload");
  if constexpr (std::endian::native == std::endian::big) {
    for (double& v : out) v = std::bit_cast<double>(to_little(std::bit_cast<std::uint64_t>(v)));
  }
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  std::string s(n, '\0');
  if (n > 0) read_raw(s.data(), n, "string");
  return s;
}

void BinaryReader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) {
    throw DataError(source_ + ": trailing bytes after payload");
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  return out;
}

}  // namespace lsf::io
