#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chameleon/quant.hpp"

namespace chameleon::net {

enum class ResidualKind : std::uint8_t { none = 0, identity = 1, conv1x1 = 2 };

std::string to_string(ResidualKind k);
ResidualKind residual_kind_from_string(const std::string& s);

struct ConvLayerSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_size = 2;
  int dilation = 1;
  bool has_bias = true;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Two causal convolutions sharing a dilation plus a residual branch. A
/// block without conv2 is a bare single convolution; the engines accept it,
/// validate() reports it.
struct ResidualBlockSpec {
  ConvLayerSpec conv1;
  std::optional<ConvLayerSpec> conv2;
  ResidualKind residual = ResidualKind::none;

  int in_channels() const { return conv1.in_channels; }
  int out_channels() const { return conv2 ? conv2->out_channels : conv1.out_channels; }
  friend bool operator==(const ResidualBlockSpec&, const ResidualBlockSpec&) = default;
};

struct NetworkConfig {
  int input_channels = 1;
  int sequence_length = 1;
  std::vector<ResidualBlockSpec> blocks;
  /// Output widths of the FC head, applied to the final timestep. The last
  /// entry is the embedding dimension V.
  std::vector<int> head;

  int num_conv_layers() const;
  int conv_output_channels() const;
  int output_channels() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Flattened conv-layer view. Graph layer index = position + 1; layer 0 is
/// the input.
struct LayerView {
  ConvLayerSpec conv;
  int block = 0;
  bool closes_block = false;
  ResidualKind residual = ResidualKind::none;
  /// Graph layer feeding the residual branch, -1 when there is none.
  int residual_source = -1;
};

std::vector<LayerView> conv_layers(const NetworkConfig& config);

struct HardwareLimits {
  std::int64_t max_weights = 133'000;
  int max_channels = 1024;
  int max_kernel = 16;
  int max_sequence = 1 << 20;
};

struct Violation {
  std::string constraint;
  std::string location;
  std::string message;
};

std::int64_t weight_count(const NetworkConfig& config);
std::int64_t bias_count(const NetworkConfig& config);

std::vector<Violation> validate(const NetworkConfig& config, const HardwareLimits& limits = {});

/// R = 1 + sum over conv layers of (k-1)*d, which for the doubling block
/// schedule equals 1 + sum_{l=1}^{L/2} 2^l (k-1). Throws
/// std::invalid_argument when kernel sizes differ between layers.
std::int64_t receptive_field(const NetworkConfig& config);

/// Parameters of one conv layer. Weights are stored [out][in][tap].
struct ConvParams {
  std::vector<quant::LogWeight> weights;
  std::vector<quant::QBias> bias;
  quant::RescaleSpec rescale;
  /// 1x1 residual projection [out][in]; only on the closing layer of a
  /// conv1x1 block.
  std::vector<quant::LogWeight> residual_weights;

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

/// FC head layer, weights [out][in].
struct FcParams {
  std::vector<quant::LogWeight> weights;
  std::vector<quant::QBias> bias;
  quant::RescaleSpec rescale;

  friend bool operator==(const FcParams&, const FcParams&) = default;
};

struct Checkpoint {
  NetworkConfig config;
  std::vector<ConvParams> conv;
  std::vector<FcParams> head;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::size_t conv_weight_index(const ConvLayerSpec& c, int out, int in, int tap) {
  return (static_cast<std::size_t>(out) * static_cast<std::size_t>(c.in_channels) +
          static_cast<std::size_t>(in)) *
             static_cast<std::size_t>(c.kernel_size) +
         static_cast<std::size_t>(tap);
}

/// Shape/range problems of a checkpoint against its own config. Each entry
/// names the offending layer.
std::vector<Violation> validate_checkpoint(const Checkpoint& ckpt);

struct GenerateOptions {
  int max_output_shift = 6;
  int min_output_shift = 0;
  int max_abs_input_shift = 2;
  int bias_magnitude = 64;
  /// Fraction (per mille) of weights forced to the zero code.
  int zero_weight_permille = 100;
  std::optional<quant::OverflowMode> overflow;
};

/// Deterministic pseudo-random checkpoint for a config.
Checkpoint generate_checkpoint(const NetworkConfig& config, std::uint64_t seed,
                               const GenerateOptions& opt = {});

/// Builder for the standard doubling-dilation TCN.
struct TcnShape {
  int input_channels = 1;
  int channels = 16;
  int blocks = 1;
  int kernel_size = 2;
  int sequence_length = 64;
  std::vector<int> head;
};
NetworkConfig make_tcn(const TcnShape& shape);

namespace presets {
/// Four-layer, 12-input network used to illustrate greedy execution.
NetworkConfig greedy_example();
/// 14-layer embedder for sequential (pixel-flattened) Omniglot, V = 48.
NetworkConfig omniglot();
/// Raw 16 kHz audio keyword spotting with R >= 16000.
NetworkConfig raw_audio_kws();
/// MFCC keyword spotting that fits the always-on 4x4-mode memories.
NetworkConfig mfcc_kws();
/// Small network backing the committed golden fixture.
NetworkConfig small_fixture();

std::optional<NetworkConfig> by_name(const std::string& name);
std::vector<std::string> names();
}  // namespace presets

}  // namespace chameleon::net
