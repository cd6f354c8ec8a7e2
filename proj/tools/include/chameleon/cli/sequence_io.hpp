#pragma once

// Text input sequences: one timestep per line, channels separated by
// whitespace, '#' starts a comment. Integer mode expects values already in
// [0,15]; real mode scales by 2^input_shift, rounds, and clamps.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <cstdint>

#include "chameleon/pe_array.hpp"

namespace chameleon::cli {

/// Carries "path:line: message".
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SequenceFormat {
  /// Expected channels per line, checked when set.
  std::optional<int> channels;
  /// Set for real-valued input.
  std::optional<int> input_shift;
};

pe::Sequence parse_sequence(const std::string& text, const std::string& origin, const SequenceFormat& fmt = {});
pe::Sequence read_sequence(const std::filesystem::path& path, const SequenceFormat& fmt = {});
std::string format_sequence(const pe::Sequence& seq);

/// Several sequences in one file. Each starts with "label <int>" and runs
/// until the next label line.
using LabeledSequences = std::vector<std::pair<int, pe::Sequence>>;
LabeledSequences read_labeled_sequences(const std::filesystem::path& path, const SequenceFormat& fmt = {});

}  // namespace chameleon::cli

namespace chameleon::cli {

/// Uniform random 4-bit sequence, same generator as the episode sampler.
pe::Sequence random_sequence(int length, int channels, std::uint64_t seed);

}  // namespace chameleon::cli
