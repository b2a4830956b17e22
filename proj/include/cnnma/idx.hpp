#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnnma {

// Failure categories for IDX ingestion; kept distinct so callers (and the
// CLI exit codes) can tell a corrupt header from a short read.
enum class IdxErrorCode { BadMagic, Truncated, DimensionOverflow, BadLabel, Io };

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  IdxErrorCode code() const { return code_; }

 private:
  IdxErrorCode code_;
};

struct ImageSet {
  std::int64_t count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // count*rows*cols bytes, row-major
};

struct LabelSet {
  std::vector<std::uint8_t> labels;  // class indices in [0, 9]
  std::int64_t count() const { return static_cast<std::int64_t>(labels.size()); }
};

// IDX is the canonical MNIST container: a big-endian 32-bit magic
// (0x0000TTRR: type byte, rank byte), one big-endian 32-bit size per
// dimension, then the raw unsigned-byte payload.
ImageSet parse_idx_images(std::span<const std::uint8_t> bytes);
LabelSet parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_idx_images(const ImageSet& images);
std::vector<std::uint8_t> serialize_idx_labels(const LabelSet& labels);

// Reads a file, transparently inflating it when it starts with the gzip
// magic 0x1f8b. Throws IdxError{Io} on filesystem or inflate failure.
std::vector<std::uint8_t> read_idx_file(const std::string& path);

}  // namespace cnnma
