#include "chameleon/checkpoint_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace chameleon::net {

namespace {

std::string join_violations(const std::vector<Violation>& v) {
  std::string s = "checkpoint validation failed";
  for (const auto& x : v) s += "; " + x.location + ": " + x.message;
  return s;
}

std::uint32_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint32_t h = 2166136261U;
  for (auto b : bytes) {
    h ^= b;
    h *= 16777619U;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void i8(int v) { buf_.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(v))); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xFF));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void i16(int v) { u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v))); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void align2() {
    if (buf_.size() % 2 != 0) u8(0);
  }
  void nibbles(const std::vector<quant::LogWeight>& w) {
    u32(static_cast<std::uint32_t>(w.size()));
    for (std::size_t i = 0; i < w.size(); i += 2) {
      std::uint8_t b = w[i].code();
      if (i + 1 < w.size()) b = static_cast<std::uint8_t>(b | (w[i + 1].code() << 4));
      u8(b);
    }
    align2();
  }
  void biases(const std::vector<quant::QBias>& b) {
    u32(static_cast<std::uint32_t>(b.size()));
    for (auto x : b) i16(x.value());
  }
  void rescale(const quant::RescaleSpec& r) {
    i8(r.input_shift);
    u8(static_cast<std::uint8_t>(r.output_shift));
    u8(static_cast<std::uint8_t>(r.overflow));
    i8(r.zero_point);
  }
  void conv(const ConvLayerSpec& c) {
    u32(static_cast<std::uint32_t>(c.in_channels));
    u32(static_cast<std::uint32_t>(c.out_channels));
    u32(static_cast<std::uint32_t>(c.kernel_size));
    u32(static_cast<std::uint32_t>(c.dilation));
    u8(c.has_bias ? 1 : 0);
    u8(0);
    u8(0);
    u8(0);
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw ParseError(std::string("truncated file while reading ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  int i8(const char* what) { return static_cast<std::int8_t>(u8(what)); }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  int i16(const char* what) { return static_cast<std::int16_t>(u16(what)); }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  int positive(const char* what, std::uint32_t max = 1U << 24) {
    const auto at = pos_;
    const auto v = u32(what);
    if (v == 0 || v > max) throw ParseError(std::string("implausible ") + what + " " + std::to_string(v), at);
    return static_cast<int>(v);
  }
  void align2() {
    if (pos_ % 2 != 0) {
      const auto at = pos_;
      if (u8("padding") != 0) throw ParseError("nonzero padding byte", at);
    }
  }
  std::vector<quant::LogWeight> nibbles(const char* what) {
    const auto n = u32(what);
    need((static_cast<std::size_t>(n) + 1) / 2, what);
    std::vector<quant::LogWeight> w;
    w.reserve(n);
    for (std::uint32_t i = 0; i < n; i += 2) {
      const auto b = u8(what);
      w.push_back(quant::LogWeight::from_code(b & 0x0F));
      if (i + 1 < n) w.push_back(quant::LogWeight::from_code(b >> 4));
    }
    align2();
    return w;
  }
  std::vector<quant::QBias> biases() {
    const auto n = u32("bias count");
    need(static_cast<std::size_t>(n) * 2, "biases");
    std::vector<quant::QBias> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto at = pos_;
      const int v = i16("bias");
      if (v < quant::kBiasMin || v > quant::kBiasMax) throw ParseError("bias outside 14-bit range", at);
      out.emplace_back(v);
    }
    return out;
  }
  quant::RescaleSpec rescale() {
    quant::RescaleSpec r;
    r.input_shift = i8("rescale");
    r.output_shift = u8("rescale");
    const auto at = pos_;
    const auto m = u8("rescale");
    if (m > 1) throw ParseError("unknown overflow mode", at);
    r.overflow = static_cast<quant::OverflowMode>(m);
    r.zero_point = i8("rescale");
    return r;
  }
  ConvLayerSpec conv() {
    ConvLayerSpec c;
    c.in_channels = positive("in_channels");
    c.out_channels = positive("out_channels");
    c.kernel_size = positive("kernel_size");
    c.dilation = positive("dilation");
    c.has_bias = u8("has_bias") != 0;
    u8("pad");
    u8("pad");
    u8("pad");
    return c;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void require_valid(const Checkpoint& ck) {
  auto v = validate_checkpoint(ck);
  if (!v.empty()) throw ValidationError(std::move(v));
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> v)
    : std::runtime_error(join_violations(v)), violations_(std::move(v)) {}

std::vector<std::uint8_t> encode_binary(const Checkpoint& ck) {
  require_valid(ck);
  Writer w;
  for (char c : kBinaryMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kFormatVersion);
  w.u16(0);
  const auto& cfg = ck.config;
  w.u32(static_cast<std::uint32_t>(cfg.input_channels));
  w.u32(static_cast<std::uint32_t>(cfg.sequence_length));
  w.u32(static_cast<std::uint32_t>(cfg.blocks.size()));
  w.u32(static_cast<std::uint32_t>(cfg.head.size()));
  for (const auto& b : cfg.blocks) {
    w.u8(b.conv2 ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(b.residual));
    w.u16(0);
    w.conv(b.conv1);
    if (b.conv2) w.conv(*b.conv2);
  }
  for (int h : cfg.head) w.u32(static_cast<std::uint32_t>(h));
  for (const auto& p : ck.conv) {
    w.rescale(p.rescale);
    w.nibbles(p.weights);
    w.biases(p.bias);
    w.nibbles(p.residual_weights);
  }
  for (const auto& f : ck.head) {
    w.rescale(f.rescale);
    w.nibbles(f.weights);
    w.biases(f.bias);
  }
  const auto sum = fnv1a(w.bytes());
  w.u32(sum);
  return std::move(w.bytes());
}

Checkpoint decode_binary(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(sizeof(kBinaryMagic), "magic");
  if (std::memcmp(bytes.data(), kBinaryMagic, sizeof(kBinaryMagic)) != 0)
    throw ParseError("bad magic", 0);
  for (std::size_t i = 0; i < sizeof(kBinaryMagic); ++i) r.u8("magic");
  {
    const auto at = r.pos();
    const auto version = r.u16("version");
    if (version != kFormatVersion) throw ParseError("unsupported version " + std::to_string(version), at);
    r.u16("reserved");
  }
  Checkpoint ck;
  auto& cfg = ck.config;
  cfg.input_channels = r.positive("input_channels");
  cfg.sequence_length = r.positive("sequence_length");
  const auto nblocks = r.u32("block count");
  const auto nhead = r.u32("head count");
  if (nblocks > 4096 || nhead > 4096) throw ParseError("implausible layer count", r.pos() - 8);
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    ResidualBlockSpec b;
    const auto flags = r.u8("block flags");
    const auto at = r.pos();
    const auto res = r.u8("residual kind");
    if (res > 2) throw ParseError("unknown residual kind", at);
    b.residual = static_cast<ResidualKind>(res);
    r.u16("reserved");
    b.conv1 = r.conv();
    if (flags & 1) b.conv2 = r.conv();
    cfg.blocks.push_back(b);
  }
  for (std::uint32_t i = 0; i < nhead; ++i) cfg.head.push_back(r.positive("head width"));
  const auto nconv = static_cast<std::size_t>(cfg.num_conv_layers());
  for (std::size_t i = 0; i < nconv; ++i) {
    ConvParams p;
    p.rescale = r.rescale();
    p.weights = r.nibbles("conv weights");
    p.bias = r.biases();
    p.residual_weights = r.nibbles("residual weights");
    ck.conv.push_back(std::move(p));
  }
  for (std::uint32_t i = 0; i < nhead; ++i) {
    FcParams f;
    f.rescale = r.rescale();
    f.weights = r.nibbles("fc weights");
    f.bias = r.biases();
    ck.head.push_back(std::move(f));
  }
  const auto body_end = r.pos();
  const auto stored = r.u32("checksum");
  if (stored != fnv1a(bytes.subspan(0, body_end))) throw ParseError("checksum mismatch", body_end);
  if (r.remaining() != 0) throw ParseError("trailing bytes after checksum", r.pos());
  require_valid(ck);
  return ck;
}

std::string codes_to_hex(std::span<const quant::LogWeight> codes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(codes.size());
  for (auto c : codes) s.push_back(kHex[c.code()]);
  return s;
}

std::vector<quant::LogWeight> codes_from_hex(const std::string& hex) {
  std::vector<quant::LogWeight> out;
  out.reserve(hex.size());
  for (char ch : hex) {
    unsigned v = 0;
    if (ch >= '0' && ch <= '9') v = static_cast<unsigned>(ch - '0');
    else if (ch >= 'a' && ch <= 'f') v = static_cast<unsigned>(ch - 'a' + 10);
    else if (ch >= 'A' && ch <= 'F') v = static_cast<unsigned>(ch - 'A' + 10);
    else throw std::invalid_argument(std::string("invalid weight code '") + ch + "'");
    out.push_back(quant::LogWeight::from_code(v));
  }
  return out;
}

namespace {

void write_conv_spec(std::ostringstream& os, const ConvLayerSpec& c) {
  os << c.in_channels << ' ' << c.out_channels << ' ' << c.kernel_size << ' ' << c.dilation << ' '
     << (c.has_bias ? 1 : 0);
}

void write_rescale(std::ostringstream& os, const quant::RescaleSpec& r) {
  os << r.input_shift << ' ' << r.output_shift << ' ' << quant::to_string(r.overflow);
  if (r.zero_point != 0) os << ' ' << r.zero_point;
}

void write_biases(std::ostringstream& os, const std::vector<quant::QBias>& b) {
  for (auto x : b) os << ' ' << x.value();
}

}  // namespace

std::string encode_text(const Checkpoint& ck) {
  require_valid(ck);
  std::ostringstream os;
  const auto& cfg = ck.config;
  os << "chameleon-checkpoint " << kFormatVersion << '\n';
  os << "input_channels " << cfg.input_channels << '\n';
  os << "sequence_length " << cfg.sequence_length << '\n';
  for (const auto& b : cfg.blocks) {
    os << "block " << to_string(b.residual) << " conv1 ";
    write_conv_spec(os, b.conv1);
    if (b.conv2) {
      os << " conv2 ";
      write_conv_spec(os, *b.conv2);
    }
    os << '\n';
  }
  os << "head";
  for (int h : cfg.head) os << ' ' << h;
  os << '\n';
  for (std::size_t i = 0; i < ck.conv.size(); ++i) {
    const auto& p = ck.conv[i];
    os << "layer " << i + 1 << " rescale ";
    write_rescale(os, p.rescale);
    os << '\n';
    os << "layer " << i + 1 << " weights " << codes_to_hex(p.weights) << '\n';
    os << "layer " << i + 1 << " bias";
    write_biases(os, p.bias);
    os << '\n';
    if (!p.residual_weights.empty())
      os << "layer " << i + 1 << " residual " << codes_to_hex(p.residual_weights) << '\n';
  }
  for (std::size_t i = 0; i < ck.head.size(); ++i) {
    const auto& f = ck.head[i];
    os << "fc " << i + 1 << " rescale ";
    write_rescale(os, f.rescale);
    os << '\n';
    os << "fc " << i + 1 << " weights " << codes_to_hex(f.weights) << '\n';
    os << "fc " << i + 1 << " bias";
    write_biases(os, f.bias);
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

namespace {

struct Line {
  std::size_t offset;
  std::vector<std::string> tok;
};

int to_int(const Line& l, std::size_t i) {
  if (i >= l.tok.size()) throw ParseError("missing field " + std::to_string(i), l.offset);
  try {
    std::size_t used = 0;
    const int v = std::stoi(l.tok[i], &used);
    if (used != l.tok[i].size()) throw std::invalid_argument("junk");
    return v;
  } catch (const std::exception&) {
    throw ParseError("expected integer, got '" + l.tok[i] + "'", l.offset);
  }
}

ConvLayerSpec read_conv_spec(const Line& l, std::size_t at) {
  ConvLayerSpec c;
  c.in_channels = to_int(l, at);
  c.out_channels = to_int(l, at + 1);
  c.kernel_size = to_int(l, at + 2);
  c.dilation = to_int(l, at + 3);
  c.has_bias = to_int(l, at + 4) != 0;
  if (c.in_channels < 1 || c.out_channels < 1 || c.kernel_size < 1 || c.dilation < 1)
    throw ParseError("conv dimensions must be positive", l.offset);
  return c;
}

quant::RescaleSpec read_rescale(const Line& l, std::size_t at) {
  quant::RescaleSpec r;
  r.input_shift = to_int(l, at);
  r.output_shift = to_int(l, at + 1);
  if (at + 2 >= l.tok.size()) throw ParseError("missing overflow mode", l.offset);
  try {
    r.overflow = quant::overflow_mode_from_string(l.tok[at + 2]);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), l.offset);
  }
  if (at + 3 < l.tok.size()) r.zero_point = to_int(l, at + 3);
  return r;
}

std::vector<quant::QBias> read_biases(const Line& l, std::size_t at) {
  std::vector<quant::QBias> b;
  for (std::size_t i = at; i < l.tok.size(); ++i) {
    const int v = to_int(l, i);
    if (v < quant::kBiasMin || v > quant::kBiasMax) throw ParseError("bias outside 14-bit range", l.offset);
    b.emplace_back(v);
  }
  return b;
}

std::vector<quant::LogWeight> read_codes(const Line& l, std::size_t at, const std::string& where) {
  if (at >= l.tok.size()) return {};
  try {
    return codes_from_hex(l.tok[at]);
  } catch (const std::invalid_argument& e) {
    throw ValidationError({{"weight_code", where, e.what()}});
  }
}

}  // namespace

Checkpoint decode_text(const std::string& text) {
  std::vector<Line> lines;
  {
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      std::string raw = text.substr(pos, nl - pos);
      if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
      std::istringstream is(raw);
      Line l{pos, {}};
      for (std::string t; is >> t;) l.tok.push_back(t);
      if (!l.tok.empty()) lines.push_back(std::move(l));
      pos = nl + 1;
    }
  }
  if (lines.empty() || lines[0].tok[0] != "chameleon-checkpoint")
    throw ParseError("missing 'chameleon-checkpoint' header", 0);
  if (to_int(lines[0], 1) != kFormatVersion) throw ParseError("unsupported version", lines[0].offset);

  Checkpoint ck;
  auto& cfg = ck.config;
  bool ended = false;
  std::size_t end_offset = text.size();
  bool saw_head = false;
  for (std::size_t li = 1; li < lines.size() && !ended; ++li) {
    const auto& l = lines[li];
    const auto& kw = l.tok[0];
    if (kw == "input_channels") {
      cfg.input_channels = to_int(l, 1);
    } else if (kw == "sequence_length") {
      cfg.sequence_length = to_int(l, 1);
    } else if (kw == "block") {
      if (l.tok.size() < 3 || l.tok[2] != "conv1") throw ParseError("malformed block line", l.offset);
      ResidualBlockSpec b;
      try {
        b.residual = residual_kind_from_string(l.tok[1]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), l.offset);
      }
      b.conv1 = read_conv_spec(l, 3);
      if (l.tok.size() > 8) {
        if (l.tok[8] != "conv2") throw ParseError("expected 'conv2'", l.offset);
        b.conv2 = read_conv_spec(l, 9);
      }
      cfg.blocks.push_back(b);
    } else if (kw == "head") {
      saw_head = true;
      for (std::size_t i = 1; i < l.tok.size(); ++i) cfg.head.push_back(to_int(l, i));
    } else if (kw == "layer" || kw == "fc") {
      const bool is_fc = kw == "fc";
      const int idx = to_int(l, 1);
      if (l.tok.size() < 3) throw ParseError("missing field name", l.offset);
      const auto want = is_fc ? cfg.head.size() : static_cast<std::size_t>(cfg.num_conv_layers());
      if (idx < 1 || static_cast<std::size_t>(idx) > want)
        throw ParseError(kw + " index " + std::to_string(idx) + " out of range", l.offset);
      if (is_fc) ck.head.resize(want);
      else ck.conv.resize(want);
      const auto i = static_cast<std::size_t>(idx - 1);
      const std::string where = kw + " " + std::to_string(idx);
      const auto& field = l.tok[2];
      if (field == "rescale") {
        (is_fc ? ck.head[i].rescale : ck.conv[i].rescale) = read_rescale(l, 3);
      } else if (field == "weights") {
        (is_fc ? ck.head[i].weights : ck.conv[i].weights) = read_codes(l, 3, where);
      } else if (field == "bias") {
        (is_fc ? ck.head[i].bias : ck.conv[i].bias) = read_biases(l, 3);
      } else if (field == "residual" && !is_fc) {
        ck.conv[i].residual_weights = read_codes(l, 3, where);
      } else {
        throw ParseError("unknown field '" + field + "'", l.offset);
      }
    } else if (kw == "end") {
      ended = true;
      end_offset = l.offset;
    } else {
      throw ParseError("unknown directive '" + kw + "'", l.offset);
    }
  }
  if (!ended) throw ParseError("missing 'end' (truncated file?)", text.size());
  (void)end_offset;
  if (!saw_head) throw ParseError("missing 'head' line", text.size());
  ck.conv.resize(static_cast<std::size_t>(cfg.num_conv_layers()));
  ck.head.resize(cfg.head.size());
  require_valid(ck);
  return ck;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= sizeof(kBinaryMagic) &&
      std::memcmp(bytes.data(), kBinaryMagic, sizeof(kBinaryMagic)) == 0)
    return decode_binary(bytes);
  return decode_text(std::string(bytes.begin(), bytes.end()));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, CheckpointFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  if (format == CheckpointFormat::binary) {
    const auto bytes = encode_binary(ckpt);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    out << encode_text(ckpt);
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace chameleon::net
