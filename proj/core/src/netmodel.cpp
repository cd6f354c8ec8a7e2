#include "chameleon/netmodel.hpp"

#include <bit>
#include <random>
#include <set>
#include <stdexcept>

namespace chameleon::net {

std::string to_string(ResidualKind k) {
  switch (k) {
    case ResidualKind::none: return "none";
    case ResidualKind::identity: return "identity";
    case ResidualKind::conv1x1: return "conv1x1";
  }
  return "none";
}

ResidualKind residual_kind_from_string(const std::string& s) {
  if (s == "none") return ResidualKind::none;
  if (s == "identity") return ResidualKind::identity;
  if (s == "conv1x1") return ResidualKind::conv1x1;
  throw std::invalid_argument("unknown residual kind '" + s + "'");
}

int NetworkConfig::num_conv_layers() const {
  int n = 0;
  for (const auto& b : blocks) n += b.conv2 ? 2 : 1;
  return n;
}

int NetworkConfig::conv_output_channels() const {
  return blocks.empty() ? input_channels : blocks.back().out_channels();
}

int NetworkConfig::output_channels() const {
  return head.empty() ? conv_output_channels() : head.back();
}

std::vector<LayerView> conv_layers(const NetworkConfig& config) {
  std::vector<LayerView> out;
  int layer = 0;
  for (std::size_t b = 0; b < config.blocks.size(); ++b) {
    const auto& blk = config.blocks[b];
    const int block_input = layer;
    LayerView first{blk.conv1, static_cast<int>(b), !blk.conv2.has_value(), ResidualKind::none, -1};
    if (!blk.conv2) {
      first.residual = blk.residual;
      first.residual_source = blk.residual == ResidualKind::none ? -1 : block_input;
    }
    out.push_back(first);
    ++layer;
    if (blk.conv2) {
      LayerView second{*blk.conv2, static_cast<int>(b), true, blk.residual,
                       blk.residual == ResidualKind::none ? -1 : block_input};
      out.push_back(second);
      ++layer;
    }
  }
  return out;
}

std::int64_t weight_count(const NetworkConfig& config) {
  std::int64_t n = 0;
  for (const auto& lv : conv_layers(config)) {
    n += std::int64_t{lv.conv.in_channels} * lv.conv.out_channels * lv.conv.kernel_size;
    if (lv.residual == ResidualKind::conv1x1) {
      const auto& blk = config.blocks[static_cast<std::size_t>(lv.block)];
      n += std::int64_t{blk.in_channels()} * blk.out_channels();
    }
  }
  int prev = config.conv_output_channels();
  for (int w : config.head) {
    n += std::int64_t{prev} * w;
    prev = w;
  }
  return n;
}

std::int64_t bias_count(const NetworkConfig& config) {
  std::int64_t n = 0;
  for (const auto& lv : conv_layers(config))
    if (lv.conv.has_bias) n += lv.conv.out_channels;
  for (int w : config.head) n += w;
  return n;
}

namespace {

std::string layer_name(std::size_t block, int which) {
  return "block " + std::to_string(block + 1) + " conv" + std::to_string(which);
}

void check_conv(const ConvLayerSpec& c, const std::string& where, const HardwareLimits& lim,
                std::vector<Violation>& v) {
  if (c.in_channels < 1 || c.out_channels < 1)
    v.push_back({"channels", where, "channel counts must be positive"});
  if (c.in_channels > lim.max_channels || c.out_channels > lim.max_channels)
    v.push_back({"channels", where,
                 "channel count exceeds hardware maximum " + std::to_string(lim.max_channels)});
  if (c.kernel_size < 1 || c.kernel_size > lim.max_kernel)
    v.push_back({"kernel", where, "kernel size out of [1," + std::to_string(lim.max_kernel) + "]"});
  if (c.dilation < 1 || !std::has_single_bit(static_cast<unsigned>(c.dilation)))
    v.push_back({"dilation", where, "dilation must be a positive power of two"});
}

}  // namespace

std::vector<Violation> validate(const NetworkConfig& config, const HardwareLimits& lim) {
  std::vector<Violation> v;
  if (config.blocks.empty()) {
    v.push_back({"structure", "network", "no blocks"});
    return v;
  }
  if (config.input_channels < 1 || config.input_channels > lim.max_channels)
    v.push_back({"channels", "input", "input channel count out of range"});
  if (config.sequence_length < 1 || config.sequence_length > lim.max_sequence)
    v.push_back({"sequence", "input", "sequence length out of range"});

  int prev = config.input_channels;
  for (std::size_t b = 0; b < config.blocks.size(); ++b) {
    const auto& blk = config.blocks[b];
    const int expected_d = 1 << static_cast<int>(b);
    check_conv(blk.conv1, layer_name(b, 1), lim, v);
    if (blk.conv1.in_channels != prev)
      v.push_back({"channels", layer_name(b, 1),
                   "input channels " + std::to_string(blk.conv1.in_channels) +
                       " do not match previous output " + std::to_string(prev)});
    if (blk.conv1.dilation != expected_d)
      v.push_back({"dilation", layer_name(b, 1),
                   "dilation " + std::to_string(blk.conv1.dilation) + " breaks doubling schedule (expected " +
                       std::to_string(expected_d) + ")"});
    if (!blk.conv2) {
      v.push_back({"structure", "block " + std::to_string(b + 1), "missing second convolution"});
    } else {
      check_conv(*blk.conv2, layer_name(b, 2), lim, v);
      if (blk.conv2->in_channels != blk.conv1.out_channels)
        v.push_back({"channels", layer_name(b, 2), "input channels do not match conv1 output"});
      if (blk.conv2->dilation != blk.conv1.dilation)
        v.push_back({"dilation", layer_name(b, 2), "dilation differs from conv1 of the same block"});
    }
    if (blk.residual == ResidualKind::identity && blk.in_channels() != blk.out_channels())
      v.push_back({"residual", "block " + std::to_string(b + 1),
                   "identity residual requires matching input/output channels"});
    if (blk.residual == ResidualKind::none && blk.conv2)
      v.push_back({"residual", "block " + std::to_string(b + 1), "residual block without residual branch"});
    prev = blk.out_channels();
  }
  for (std::size_t h = 0; h < config.head.size(); ++h) {
    if (config.head[h] < 1 || config.head[h] > lim.max_channels)
      v.push_back({"channels", "fc " + std::to_string(h + 1), "FC width out of range"});
  }
  const auto wc = weight_count(config);
  if (wc > lim.max_weights)
    v.push_back({"weights", "network",
                 "weight count exceeds 133k (" + std::to_string(wc) + " > " +
                     std::to_string(lim.max_weights) + ")"});
  return v;
}

std::int64_t receptive_field(const NetworkConfig& config) {
  std::set<int> kernels;
  std::int64_t r = 1;
  for (const auto& lv : conv_layers(config)) {
    kernels.insert(lv.conv.kernel_size);
    r += std::int64_t{lv.conv.kernel_size - 1} * lv.conv.dilation;
  }
  if (kernels.size() > 1)
    throw std::invalid_argument("receptive_field: non-uniform kernel sizes");
  return r;
}

std::vector<Violation> validate_checkpoint(const Checkpoint& ckpt) {
  std::vector<Violation> v;
  const auto layers = conv_layers(ckpt.config);
  if (ckpt.conv.size() != layers.size()) {
    v.push_back({"shape", "network",
                 "expected " + std::to_string(layers.size()) + " conv layers, found " +
                     std::to_string(ckpt.conv.size())});
    return v;
  }
  auto check_codes = [&](const std::vector<quant::LogWeight>& w, const std::string& where) {
    for (const auto& c : w)
      if (c.code() > 15) {
        v.push_back({"weight_code", where, "invalid weight code"});
        return;
      }
  };
  auto check_rescale = [&](const quant::RescaleSpec& r, const std::string& where) {
    if (auto msg = quant::check(r); !msg.empty()) v.push_back({"rescale", where, msg});
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& lv = layers[i];
    const auto& p = ckpt.conv[i];
    const std::string where = "layer " + std::to_string(i + 1);
    const auto expect_w = static_cast<std::size_t>(lv.conv.in_channels) *
                          static_cast<std::size_t>(lv.conv.out_channels) *
                          static_cast<std::size_t>(lv.conv.kernel_size);
    if (p.weights.size() != expect_w)
      v.push_back({"shape", where,
                   "weight tensor has " + std::to_string(p.weights.size()) + " entries, expected " +
                       std::to_string(expect_w)});
    const auto expect_b = lv.conv.has_bias ? static_cast<std::size_t>(lv.conv.out_channels) : 0U;
    if (p.bias.size() != expect_b)
      v.push_back({"shape", where, "bias vector length mismatch"});
    std::size_t expect_r = 0;
    if (lv.residual == ResidualKind::conv1x1) {
      const auto& blk = ckpt.config.blocks[static_cast<std::size_t>(lv.block)];
      expect_r = static_cast<std::size_t>(blk.in_channels()) * static_cast<std::size_t>(blk.out_channels());
    }
    if (p.residual_weights.size() != expect_r)
      v.push_back({"shape", where, "residual projection shape mismatch"});
    check_codes(p.weights, where);
    check_codes(p.residual_weights, where);
    check_rescale(p.rescale, where);
  }
  if (ckpt.head.size() != ckpt.config.head.size()) {
    v.push_back({"shape", "head", "FC layer count mismatch"});
    return v;
  }
  int prev = ckpt.config.conv_output_channels();
  for (std::size_t h = 0; h < ckpt.head.size(); ++h) {
    const std::string where = "fc " + std::to_string(h + 1);
    const int w = ckpt.config.head[h];
    if (ckpt.head[h].weights.size() != static_cast<std::size_t>(prev) * static_cast<std::size_t>(w))
      v.push_back({"shape", where, "FC weight shape mismatch"});
    if (ckpt.head[h].bias.size() != static_cast<std::size_t>(w))
      v.push_back({"shape", where, "FC bias length mismatch"});
    check_codes(ckpt.head[h].weights, where);
    check_rescale(ckpt.head[h].rescale, where);
    prev = w;
  }
  return v;
}

namespace {

// Portable bounded draws; std distributions differ across standard libraries
// and fixtures must be reproducible.
struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  int uniform(int lo, int hi) {  // inclusive
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(eng() % span);
  }
};

quant::LogWeight random_code(Rng& rng, int zero_permille) {
  if (rng.uniform(0, 999) < zero_permille) return quant::LogWeight::zero();
  for (;;) {
    const auto code = static_cast<unsigned>(rng.uniform(0, 15));
    if (code != quant::LogWeight::kZeroCode) return quant::LogWeight::from_code(code);
  }
}

quant::RescaleSpec random_rescale(Rng& rng, const GenerateOptions& opt) {
  quant::RescaleSpec r;
  r.output_shift = rng.uniform(opt.min_output_shift, opt.max_output_shift);
  r.input_shift = rng.uniform(-opt.max_abs_input_shift, opt.max_abs_input_shift);
  r.overflow = opt.overflow ? *opt.overflow
                            : (rng.uniform(0, 1) == 0 ? quant::OverflowMode::wrap
                                                      : quant::OverflowMode::clamp);
  return r;
}

}  // namespace

Checkpoint generate_checkpoint(const NetworkConfig& config, std::uint64_t seed,
                               const GenerateOptions& opt) {
  Rng rng(seed);
  Checkpoint ck;
  ck.config = config;
  for (const auto& lv : conv_layers(config)) {
    ConvParams p;
    const auto nw = static_cast<std::size_t>(lv.conv.in_channels) *
                    static_cast<std::size_t>(lv.conv.out_channels) *
                    static_cast<std::size_t>(lv.conv.kernel_size);
    p.weights.reserve(nw);
    for (std::size_t i = 0; i < nw; ++i) p.weights.push_back(random_code(rng, opt.zero_weight_permille));
    if (lv.conv.has_bias)
      for (int o = 0; o < lv.conv.out_channels; ++o)
        p.bias.emplace_back(rng.uniform(-opt.bias_magnitude, opt.bias_magnitude));
    p.rescale = random_rescale(rng, opt);
    if (lv.residual == ResidualKind::conv1x1) {
      const auto& blk = config.blocks[static_cast<std::size_t>(lv.block)];
      const auto nr = static_cast<std::size_t>(blk.in_channels()) * static_cast<std::size_t>(blk.out_channels());
      for (std::size_t i = 0; i < nr; ++i) p.residual_weights.push_back(random_code(rng, opt.zero_weight_permille));
    }
    ck.conv.push_back(std::move(p));
  }
  int prev = config.conv_output_channels();
  for (int w : config.head) {
    FcParams f;
    const auto nw = static_cast<std::size_t>(prev) * static_cast<std::size_t>(w);
    for (std::size_t i = 0; i < nw; ++i) f.weights.push_back(random_code(rng, opt.zero_weight_permille));
    for (int o = 0; o < w; ++o) f.bias.emplace_back(rng.uniform(-opt.bias_magnitude, opt.bias_magnitude));
    f.rescale = random_rescale(rng, opt);
    f.rescale.input_shift = 0;
    ck.head.push_back(std::move(f));
    prev = w;
  }
  return ck;
}

NetworkConfig make_tcn(const TcnShape& s) {
  NetworkConfig c;
  c.input_channels = s.input_channels;
  c.sequence_length = s.sequence_length;
  c.head = s.head;
  int in = s.input_channels;
  for (int b = 0; b < s.blocks; ++b) {
    ResidualBlockSpec blk;
    const int d = 1 << b;
    blk.conv1 = {in, s.channels, s.kernel_size, d, true};
    blk.conv2 = ConvLayerSpec{s.channels, s.channels, s.kernel_size, d, true};
    blk.residual = in == s.channels ? ResidualKind::identity : ResidualKind::conv1x1;
    c.blocks.push_back(blk);
    in = s.channels;
  }
  return c;
}

namespace presets {

NetworkConfig greedy_example() {
  return make_tcn({.input_channels = 1, .channels = 4, .blocks = 2, .kernel_size = 2,
                   .sequence_length = 12, .head = {}});
}

NetworkConfig omniglot() {
  // 28x28 images flattened pixel-wise; 7 blocks, 14 layers.
  return make_tcn({.input_channels = 1, .channels = 32, .blocks = 7, .kernel_size = 8,
                   .sequence_length = 784, .head = {128, 48}});
}

NetworkConfig raw_audio_kws() {
  // 12 blocks of k=3 give R = 1 + 2*(2^13 - 2) = 16381 >= 16000.
  return make_tcn({.input_channels = 1, .channels = 32, .blocks = 12, .kernel_size = 3,
                   .sequence_length = 16000, .head = {64, 12}});
}

NetworkConfig mfcc_kws() {
  // 28 MFCC coefficients, 63 frames.
  return make_tcn({.input_channels = 28, .channels = 24, .blocks = 4, .kernel_size = 3,
                   .sequence_length = 63, .head = {12}});
}

NetworkConfig small_fixture() {
  return make_tcn({.input_channels = 2, .channels = 4, .blocks = 2, .kernel_size = 2,
                   .sequence_length = 16, .head = {3}});
}

std::optional<NetworkConfig> by_name(const std::string& name) {
  if (name == "greedy-example") return greedy_example();
  if (name == "omniglot") return omniglot();
  if (name == "raw-audio-kws") return raw_audio_kws();
  if (name == "mfcc-kws") return mfcc_kws();
  if (name == "small") return small_fixture();
  return std::nullopt;
}

std::vector<std::string> names() {
  return {"greedy-example", "omniglot", "raw-audio-kws", "mfcc-kws", "small"};
}

}  // namespace presets

}  // namespace chameleon::net
