#pragma once

// Dual-mode shift-PE array, its banked weight/bias memories and the engine
// that runs a scheduled network through them.
//
// Accumulators carry guard bits: column sums are kept exactly while a tile
// pass runs and saturate to the 18-bit Accum range when the OPE reads them.
// That keeps results independent of the order in which 4x4 and 16x16 modes
// visit sub-tiles.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chameleon/netmodel.hpp"
#include "chameleon/quant.hpp"
#include "chameleon/scheduler.hpp"

namespace chameleon::pe {

enum class ArrayMode : std::uint8_t { m4x4 = 0, m16x16 = 1 };

std::string to_string(ArrayMode m);
ArrayMode array_mode_from_string(const std::string& s);
constexpr int lanes(ArrayMode m) { return m == ArrayMode::m4x4 ? 4 : 16; }

inline constexpr int kArrayDim = 16;

inline constexpr int kWeightBanks = 32;
inline constexpr int kWeightRows = 512;
inline constexpr int kNibblesPerRow = 8;
inline constexpr int kAlwaysOnWeightBanks = 4;

inline constexpr int kBiasBanks = 8;
inline constexpr int kBiasRows = 64;
inline constexpr int kBiasesPerRow = 2;
inline constexpr int kAlwaysOnBiasBanks = 4;

// 16x16 mode: one address = one full tile / 16 biases.
inline constexpr int kTileAddresses = kWeightRows;
inline constexpr int kBiasAddresses16 = kBiasRows;
// 4x4 mode: the always-on banks stacked in pairs, one address = one 4x4
// sub-tile / 4 biases.
inline constexpr int kSubtileAddresses = kWeightRows * kAlwaysOnWeightBanks / 2;
inline constexpr int kBiasAddresses4 = kBiasRows * kAlwaysOnBiasBanks / 2;
inline constexpr std::int64_t kMaxWeights4x4 = std::int64_t{kSubtileAddresses} * 16;
inline constexpr std::int64_t kMaxBiases4x4 = std::int64_t{kBiasAddresses4} * 4;

/// [input lane i][output column j] stored at i*16 + j.
using WeightTile = std::array<quant::LogWeight, kArrayDim * kArrayDim>;
/// 4x4 sub-tile, row-major.
using SubTile = std::array<quant::LogWeight, 16>;
using ActVector = std::array<quant::QAct, kArrayDim>;

constexpr std::uint32_t weight_bank_mask(ArrayMode m) {
  return m == ArrayMode::m4x4 ? (1U << kAlwaysOnWeightBanks) - 1 : 0xFFFFFFFFU;
}
constexpr std::uint32_t bias_bank_mask(ArrayMode m) {
  return m == ArrayMode::m4x4 ? (1U << kAlwaysOnBiasBanks) - 1 : (1U << kBiasBanks) - 1;
}

class CapacityError : public std::runtime_error {
 public:
  CapacityError(std::string resource, std::int64_t needed, std::int64_t available);
  const std::string& resource() const { return resource_; }
  std::int64_t needed() const { return needed_; }
  std::int64_t available() const { return available_; }

 private:
  std::string resource_;
  std::int64_t needed_;
  std::int64_t available_;
};

struct PeArrayState {
  explicit PeArrayState(ArrayMode m = ArrayMode::m16x16);

  ArrayMode mode;
  std::array<std::int64_t, kArrayDim> acc{};
  std::uint64_t cycles = 0;
  std::uint32_t active_weight_banks;
  std::uint32_t active_bias_banks;
  /// Sum over cycles of the number of powered weight + bias banks.
  std::uint64_t active_bank_cycles = 0;

  void clear_accumulators() { acc.fill(0); }
  /// OPE-side read of column j, saturated to the 18-bit range.
  quant::Accum read(int column) const;
};

/// One array cycle: every active column j adds sum_i shift_mac(a_i, w_ij).
/// In 4x4 mode only lanes/columns 0..3 are honoured and activation lanes
/// 4..15 must be zero (std::invalid_argument otherwise).
void array_cycle(PeArrayState& state, const ActVector& activations, const WeightTile& weights);
/// 4x4-mode cycle fed straight from a stacked sub-tile.
void array_cycle(PeArrayState& state, const ActVector& activations, const SubTile& weights);

struct OpeConfig {
  quant::RescaleSpec rescale;
  quant::QBias bias;
  /// Without ReLU, negative values go through the 4-bit mapping as well
  /// (wrap keeps the low nibble, clamp pins them to 0).
  bool relu = true;
};

/// acc + (residual rescaled by input_shift) + bias, all saturating.
quant::Accum ope_preactivation(quant::Accum acc, const OpeConfig& cfg,
                               std::optional<quant::Accum> residual = std::nullopt);
quant::QAct ope_finalize(quant::Accum acc, const OpeConfig& cfg,
                         std::optional<quant::Accum> residual = std::nullopt,
                         quant::QuantStats* stats = nullptr);

/// Position of weight (i, j) of a 16x16 tile inside one memory address:
/// the top-left 4x4 block first (row-major), then rows 4..15 of columns
/// 0..3, then columns 4..15 row by row. Position p lives in bank p/8,
/// nibble p%8.
constexpr int tile_position(int i, int j) {
  if (j < 4) return i < 4 ? i * 4 + j : 16 + (i - 4) * 4 + j;
  return 64 + i * 12 + (j - 4);
}

class WeightMemoryMap {
 public:
  WeightMemoryMap();

  quant::LogWeight cell(int bank, int row, int nibble) const;

  void store_tile(int address, const WeightTile& tile);
  /// Reads every bank; banks outside `active_mask` count as gated reads.
  WeightTile load_tile(int address, std::uint32_t active_mask) const;

  /// Stacked 4x4-mode addressing: address A occupies banks
  /// 2*(A/512) and 2*(A/512)+1 at row A%512.
  void store_subtile(int address, const SubTile& sub);
  SubTile load_subtile(int address, std::uint32_t active_mask) const;

  std::uint64_t gated_reads() const { return gated_reads_; }
  std::uint64_t reads() const { return reads_; }
  void reset_counters() const {
    gated_reads_ = 0;
    reads_ = 0;
  }

  /// "W b<bank> r<row> <8 hex codes>" for every row holding a non-zero code.
  std::string dump() const;

 private:
  void touch(int bank, std::uint32_t mask) const;
  std::vector<std::uint8_t> cells_;  // bank-major, one code per byte
  mutable std::uint64_t gated_reads_ = 0;
  mutable std::uint64_t reads_ = 0;
};

class BiasMemoryMap {
 public:
  BiasMemoryMap();

  quant::QBias cell(int bank, int row, int slot) const;

  /// 16x16 mode: 16 biases across all 8 banks at one row.
  void store_group16(int address, std::span<const quant::QBias, 16> b);
  std::array<quant::QBias, 16> load_group16(int address, std::uint32_t active_mask) const;
  /// 4x4 mode: address A occupies banks 2*(A/64), 2*(A/64)+1 at row A%64.
  void store_group4(int address, std::span<const quant::QBias, 4> b);
  std::array<quant::QBias, 4> load_group4(int address, std::uint32_t active_mask) const;

  std::uint64_t gated_reads() const { return gated_reads_; }
  std::string dump() const;

 private:
  void touch(int bank, std::uint32_t mask) const;
  std::vector<quant::QBias> cells_;
  mutable std::uint64_t gated_reads_ = 0;
};

/// Where one layer's parameters sit. Units are 16x16 tiles or 4x4
/// sub-tiles depending on the mode.
struct LayerPlacement {
  int in_units = 0;
  int out_units = 0;
  int taps = 1;
  int weight_base = 0;
  /// 1x1 residual projection, -1 when absent.
  int residual_base = -1;
  int residual_in_units = 0;
  /// First bias address, -1 when the layer has no bias.
  int bias_base = -1;

  int weight_address(int tap, int out_unit, int in_unit) const {
    return weight_base + (tap * out_units + out_unit) * in_units + in_unit;
  }
};

struct MemoryLayout {
  ArrayMode mode = ArrayMode::m16x16;
  std::vector<LayerPlacement> conv;
  std::vector<LayerPlacement> head;
  int weight_addresses = 0;
  int bias_addresses = 0;
};

/// Throws CapacityError when the network does not fit the mode's memories.
MemoryLayout plan_layout(const net::NetworkConfig& config, ArrayMode mode);

/// Array cycles for one output timestep of a conv layer, including the 1x1
/// residual pass. 4x4 mode walks every 16x16-padded tile as 16 sub-tile
/// cycles, so it is exactly 16x the 16x16 figure.
std::uint64_t node_cycles(const net::LayerView& layer, const net::NetworkConfig& config,
                          ArrayMode mode);
std::uint64_t head_cycles(const net::NetworkConfig& config, ArrayMode mode);
/// Analytic cycle count of a whole scheduled inference.
std::uint64_t inference_cycles(const net::NetworkConfig& config, const sched::DependencySets& deps,
                               ArrayMode mode);

/// lanes^2 * 2 * clock_hz, ops per second (one MAC = 2 ops).
double peak_throughput(ArrayMode mode, double clock_hz);

using Sequence = std::vector<std::vector<quant::QAct>>;

struct InferenceResult {
  /// Output of the last layer (head if present) at the final timestep.
  std::vector<quant::QAct> output;
  /// Pre-requantization values of the last layer; argmax gives the class.
  std::vector<quant::Accum> logits;
  int predicted = 0;
  std::uint64_t cycles = 0;
  /// Cycles spent per graph layer 1..L (index 0 unused) and in the head.
  std::vector<std::uint64_t> layer_cycles;
  std::uint64_t head_cycles = 0;
  std::uint64_t active_bank_cycles = 0;
  std::uint64_t gated_bank_reads = 0;
  quant::QuantStats stats;
};

/// Lowest index among the maxima.
int argmax(std::span<const quant::Accum> v);

class Engine {
 public:
  /// Maps the checkpoint into the memories; throws CapacityError.
  Engine(net::Checkpoint ckpt, ArrayMode mode);

  ArrayMode mode() const { return mode_; }
  const MemoryLayout& layout() const { return layout_; }
  const WeightMemoryMap& weights() const { return wmem_; }
  const BiasMemoryMap& biases() const { return bmem_; }
  const net::Checkpoint& checkpoint() const { return ckpt_; }

  /// Runs the pruned greedy schedule for `input`.
  InferenceResult run(const Sequence& input);
  /// Runs a caller-provided schedule (for example the dense one).
  InferenceResult run(const Sequence& input, const sched::Schedule& schedule);

  /// Rebuilds the parameters by reading them back out of the memories.
  net::Checkpoint read_back() const;

  /// Text dump of the layout and both memories.
  std::string memory_dump() const;

 private:
  struct Fifo {
    int channels = 0;
    std::vector<std::vector<quant::QAct>> slots;
  };

  void begin(const sched::Schedule& schedule);
  void execute(const sched::Event& e, const Sequence& input, InferenceResult& res);
  std::vector<quant::QAct> run_fc(std::size_t h, const std::vector<quant::QAct>& x,
                                  std::vector<quant::Accum>* preact, InferenceResult& res);

  std::vector<quant::Accum> conv_node(std::size_t layer, const std::vector<const std::vector<quant::QAct>*>& taps,
                                      const std::vector<quant::QAct>* residual_src,
                                      std::vector<quant::QAct>& out, InferenceResult& res);

  void tile_pass(const std::vector<quant::QAct>& x, int in_channels, const LayerPlacement& p, int tap,
                 int out_tile, bool residual);
  std::array<quant::QBias, 16> bias_block(const LayerPlacement& p, int out_tile) const;

  net::Checkpoint ckpt_;
  std::vector<net::LayerView> layers_;
  ArrayMode mode_;
  MemoryLayout layout_;
  WeightMemoryMap wmem_;
  BiasMemoryMap bmem_;
  PeArrayState state_;
  std::vector<Fifo> fifo_;
};

}  // namespace chameleon::pe
