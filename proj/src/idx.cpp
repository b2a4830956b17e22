#include "cnnma/idx.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <limits>

namespace cnnma {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;  // unsigned byte, rank 3
constexpr std::uint32_t kLabelMagic = 0x00000801;  // unsigned byte, rank 1

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, size_t off) {
  return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
         (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

std::string hex32(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xf];
  return s;
}

}  // namespace

ImageSet parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16)
    throw IdxError(IdxErrorCode::Truncated,
                   "IDX image header needs 16 bytes, have " + std::to_string(bytes.size()));
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kImageMagic)
    throw IdxError(IdxErrorCode::BadMagic,
                   "bad IDX image magic " + hex32(magic) + ", want " + hex32(kImageMagic));
  const std::uint64_t count = read_be32(bytes, 4);
  const std::uint64_t rows = read_be32(bytes, 8);
  const std::uint64_t cols = read_be32(bytes, 12);
  if (count > 0 && (rows == 0 || cols == 0))
    throw IdxError(IdxErrorCode::DimensionOverflow, "IDX image dimensions must be positive");
  if (rows > 0 && cols > 0 && count > std::numeric_limits<std::uint64_t>::max() / (rows * cols))
    throw IdxError(IdxErrorCode::DimensionOverflow, "IDX image dimensions overflow");
  const std::uint64_t payload = count * rows * cols;
  if (payload > std::uint64_t(std::numeric_limits<std::int64_t>::max()))
    throw IdxError(IdxErrorCode::DimensionOverflow, "IDX image payload too large");
  if (bytes.size() - 16 < payload)
    throw IdxError(IdxErrorCode::Truncated,
                   "IDX image payload truncated: want " + std::to_string(payload) +
                       " bytes, have " + std::to_string(bytes.size() - 16));

  ImageSet set;
  set.count = static_cast<std::int64_t>(count);
  set.rows = static_cast<int>(rows);
  set.cols = static_cast<int>(cols);
  set.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return set;
}

LabelSet parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8)
    throw IdxError(IdxErrorCode::Truncated,
                   "IDX label header needs 8 bytes, have " + std::to_string(bytes.size()));
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kLabelMagic)
    throw IdxError(IdxErrorCode::BadMagic,
                   "bad IDX label magic " + hex32(magic) + ", want " + hex32(kLabelMagic));
  const std::uint64_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count)
    throw IdxError(IdxErrorCode::Truncated,
                   "IDX label payload truncated: want " + std::to_string(count) +
                       " bytes, have " + std::to_string(bytes.size() - 8));

  LabelSet set;
  set.labels.assign(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  for (size_t i = 0; i < set.labels.size(); ++i) {
    if (set.labels[i] > 9)
      throw IdxError(IdxErrorCode::BadLabel, "label " + std::to_string(int(set.labels[i])) +
                                                 " at index " + std::to_string(i) +
                                                 " out of range [0, 9]");
  }
  return set;
}

std::vector<std::uint8_t> serialize_idx_images(const ImageSet& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.count));
  write_be32(out, static_cast<std::uint32_t>(images.rows));
  write_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(const LabelSet& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.labels.size());
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.labels.size()));
  out.insert(out.end(), labels.labels.begin(), labels.labels.end());
  return out;
}

namespace {

std::vector<std::uint8_t> gzip_inflate(const std::vector<std::uint8_t>& in,
                                       const std::string& path) {
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  // 16 + MAX_WBITS selects gzip framing.
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
    throw IdxError(IdxErrorCode::Io, "inflateInit failed for " + path);

  std::vector<std::uint8_t> out;
  out.reserve(in.size() * 4);
  std::uint8_t buf[1 << 16];
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int ret = Z_OK;
  do {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IdxError(IdxErrorCode::Io, "gzip inflate failed for " + path +
                                           " (zlib code " + std::to_string(ret) + ")");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
  } while (ret != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

}  // namespace

std::vector<std::uint8_t> read_idx_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IdxError(IdxErrorCode::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  if (!file.good() && !file.eof()) throw IdxError(IdxErrorCode::Io, "read error on " + path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gzip_inflate(bytes, path);
  return bytes;
}

}  // namespace cnnma
