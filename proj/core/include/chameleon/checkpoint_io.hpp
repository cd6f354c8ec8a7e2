#pragma once

// Checkpoint files. Two encodings of the same content:
//   binary: magic, version, config block, packed 4-bit weight nibbles (low
//           nibble first, little-endian), 16-bit aligned little-endian biases
//   text:   line-oriented, one directive per line, used for fixtures
// Layout is documented in docs/checkpoint_format.md.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chameleon/netmodel.hpp"

namespace chameleon::net {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> v);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

enum class CheckpointFormat { binary, text };

inline constexpr char kBinaryMagic[8] = {'C', 'H', 'M', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint16_t kFormatVersion = 1;

std::vector<std::uint8_t> encode_binary(const Checkpoint& ckpt);
Checkpoint decode_binary(std::span<const std::uint8_t> bytes);

std::string encode_text(const Checkpoint& ckpt);
Checkpoint decode_text(const std::string& text);

/// Detects the format from the leading bytes. Throws ParseError or
/// ValidationError; a missing file is reported as std::runtime_error naming
/// the path.
Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                     CheckpointFormat format = CheckpointFormat::binary);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Hex string with one character per 4-bit code.
std::string codes_to_hex(std::span<const quant::LogWeight> codes);
std::vector<quant::LogWeight> codes_from_hex(const std::string& hex);

}  // namespace chameleon::net
