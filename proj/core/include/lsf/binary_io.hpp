#pragma once

// Little-endian primitives shared by the LSFD/LSFM/LSFS/LSFI file formats.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace lsf::io {

using Magic = std::array<char, 4>;

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void magic(const Magic& m);
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void f32s(std::span<const float> values);
  void f64s(std::span<const double> values);
  // u32 length prefix followed by the raw bytes.
  void str(std::string_view s);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  // `source` names the file in error messages.
  BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  // Throws DataError naming the file and the expected magic on mismatch.
  void expect_magic(const Magic& m);
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void f32s(std::span<float> out);
  void f64s(std::span<double> out);
  std::string str();
  // Throws unless the stream is exhausted.
  void expect_end();

  const std::string& source() const { return source_; }

 private:
  void read_raw(void* dst, std::size_t n, const char* what);

  std::istream& in_;
  std::string source_;
};

std::string magic_string(const Magic& m);

// Opens for binary reading/writing; throws DataError on failure.
std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace lsf::io
