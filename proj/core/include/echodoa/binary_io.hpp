#pragma once

// Little-endian byte encoding shared by the dataset, capture and checkpoint
// containers.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace echodoa {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::span<const std::uint8_t> data);
  void tag(std::string_view magic);
  void string(std::string_view s);  // u32 length + bytes
  /// Appends the CRC32 of everything written so far.
  void finish_with_crc();

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  std::vector<std::uint8_t> take() noexcept { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Reads from a byte span; every underflow throws Error{truncated}.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::string string(std::size_t max_len = 1u << 20);
  /// Throws bad_magic when the next bytes differ from `magic`.
  void expect_tag(std::string_view magic);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

/// Checks that the trailing 4 bytes are the CRC32 of the rest and returns the
/// body without them. Throws truncated / checksum_failure.
std::span<const std::uint8_t> verified_body(std::span<const std::uint8_t> file_bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace echodoa
