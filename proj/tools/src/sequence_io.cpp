#include "chameleon/cli/sequence_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "chameleon/cli/episodes.hpp"

namespace chameleon::cli {

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw InputError(origin + ":" + std::to_string(line) + ": " + msg);
}

std::vector<quant::QAct> parse_step(const std::string& body, const std::string& origin, int line,
                                    const SequenceFormat& fmt) {
  std::istringstream ls(body);
  std::vector<quant::QAct> step;
  std::string tok;
  while (ls >> tok) {
    if (fmt.input_shift) {
      double v = 0;
      try {
        std::size_t used = 0;
        v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        fail(origin, line, "not a number: '" + tok + "'");
      }
      const double scaled = std::round(std::ldexp(v, *fmt.input_shift));
      step.emplace_back(static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(quant::kActMax))));
    } else {
      int v = 0;
      try {
        std::size_t used = 0;
        v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        fail(origin, line, "not an integer: '" + tok + "'");
      }
      if (v < 0 || v > quant::kActMax) fail(origin, line, "value " + tok + " outside [0,15]");
      step.emplace_back(v);
    }
  }
  if (fmt.channels && static_cast<int>(step.size()) != *fmt.channels)
    fail(origin, line, "expected " + std::to_string(*fmt.channels) + " channels, got " + std::to_string(step.size()));
  return step;
}

std::string strip_comment(std::string s) {
  if (auto h = s.find('#'); h != std::string::npos) s.resize(h);
  return s;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

pe::Sequence parse_sequence(const std::string& text, const std::string& origin, const SequenceFormat& fmt) {
  std::istringstream in(text);
  pe::Sequence seq;
  std::string line;
  int lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_comment(line);
    if (blank(line)) continue;
    auto step = parse_step(line, origin, lineno, fmt);
    if (seq.empty()) width = step.size();
    else if (step.size() != width)
      fail(origin, lineno, "expected " + std::to_string(width) + " channels, got " + std::to_string(step.size()));
    seq.push_back(std::move(step));
  }
  if (seq.empty()) throw InputError(origin + ": empty sequence");
  return seq;
}

pe::Sequence read_sequence(const std::filesystem::path& path, const SequenceFormat& fmt) {
  return parse_sequence(slurp(path), path.string(), fmt);
}

std::string format_sequence(const pe::Sequence& seq) {
  std::string s;
  for (const auto& step : seq) {
    for (std::size_t i = 0; i < step.size(); ++i) {
      if (i) s += ' ';
      s += std::to_string(step[i].value());
    }
    s += '\n';
  }
  return s;
}

LabeledSequences read_labeled_sequences(const std::filesystem::path& path, const SequenceFormat& fmt) {
  const std::string origin = path.string();
  std::istringstream in(slurp(path));
  LabeledSequences out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_comment(line);
    if (blank(line)) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "label") {
      int label = 0;
      if (!(ls >> label)) fail(origin, lineno, "label needs an integer");
      out.emplace_back(label, pe::Sequence{});
      continue;
    }
    if (out.empty()) fail(origin, lineno, "timestep before the first 'label' line");
    out.back().second.push_back(parse_step(line, origin, lineno, fmt));
  }
  for (const auto& [label, seq] : out)
    if (seq.empty()) throw InputError(origin + ": label " + std::to_string(label) + " has no timesteps");
  if (out.empty()) throw InputError(origin + ": no sequences");
  return out;
}

}  // namespace chameleon::cli

namespace chameleon::cli {

pe::Sequence random_sequence(int length, int channels, std::uint64_t seed) {
  Rng rng(seed);
  pe::Sequence seq(static_cast<std::size_t>(std::max(length, 0)));
  for (auto& step : seq)
    for (int c = 0; c < channels; ++c) step.emplace_back(static_cast<int>(rng.below(quant::kActMax + 1)));
  return seq;
}

}  // namespace chameleon::cli
