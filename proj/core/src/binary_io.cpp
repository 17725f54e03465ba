#include "echodoa/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "echodoa/error.hpp"

namespace echodoa {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(std::span<const std::uint8_t> data) {
  buf_.insert(buf_.end(), data.begin(), data.end());
}

void ByteWriter::tag(std::string_view magic) {
  for (char c : magic) buf_.push_back(static_cast<std::uint8_t>(c));
}

void ByteWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  tag(s);
}

void ByteWriter::finish_with_crc() { u32(crc32(buf_)); }

void ByteReader::need(std::size_t n) const {
  require(remaining() >= n, ErrorKind::truncated, "binary data ends unexpectedly");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::string(std::size_t max_len) {
  const std::uint32_t n = u32();
  require(n <= max_len, ErrorKind::truncated, "binary string length out of range");
  const auto raw = bytes(n);
  return std::string(raw.begin(), raw.end());
}

void ByteReader::expect_tag(std::string_view magic) {
  need(magic.size());
  require(std::memcmp(data_.data() + pos_, magic.data(), magic.size()) == 0,
          ErrorKind::bad_magic, "expected magic '" + std::string(magic) + "'");
  pos_ += magic.size();
}

std::span<const std::uint8_t> verified_body(std::span<const std::uint8_t> file_bytes) {
  require(file_bytes.size() >= 4, ErrorKind::truncated, "file too short for a checksum");
  const auto body = file_bytes.first(file_bytes.size() - 4);
  ByteReader tail(file_bytes.last(4));
  require(tail.u32() == crc32(body), ErrorKind::checksum_failure, "integrity checksum mismatch");
  return body;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  require(static_cast<bool>(in) || size == 0, ErrorKind::io, "failed reading " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::io, "failed writing " + path.string());
}

}  // namespace echodoa
