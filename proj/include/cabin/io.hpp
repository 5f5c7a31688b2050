#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cabin::io {

// FNV-1a 64-bit, the artifact checksum everywhere.
std::uint64_t fnv1a(const void* data, std::size_t n);
std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t v);

// Whole-file helpers; throw IoError on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::vector<std::uint8_t> read_binary(const std::string& path);
void write_binary(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Little-endian primitive append/read for the blob and checkpoint formats.
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
void put_f64(std::vector<std::uint8_t>& out, double v);

// Cursor-based reads; throw DataError("truncated ...") past the end.
struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str(std::size_t n);
  void need(std::size_t n) const;
};

// %.17g rendering, enough digits to round-trip a double exactly.
std::string fmt_double(double v);

}  // namespace cabin::io
