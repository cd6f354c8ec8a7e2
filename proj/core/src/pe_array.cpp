#include "chameleon/pe_array.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace chameleon::pe {

using quant::Accum;
using quant::LogWeight;
using quant::QAct;
using quant::QBias;

std::string to_string(ArrayMode m) { return m == ArrayMode::m4x4 ? "4x4" : "16x16"; }

ArrayMode array_mode_from_string(const std::string& s) {
  if (s == "4x4") return ArrayMode::m4x4;
  if (s == "16x16") return ArrayMode::m16x16;
  throw std::invalid_argument("unknown array mode '" + s + "' (expected 4x4 or 16x16)");
}

CapacityError::CapacityError(std::string resource, std::int64_t needed, std::int64_t available)
    : std::runtime_error(resource + ": " + std::to_string(needed) + " needed, " +
                         std::to_string(available) + " available"),
      resource_(std::move(resource)),
      needed_(needed),
      available_(available) {}

PeArrayState::PeArrayState(ArrayMode m)
    : mode(m), active_weight_banks(weight_bank_mask(m)), active_bias_banks(bias_bank_mask(m)) {}

Accum PeArrayState::read(int column) const { return Accum::saturate(acc[static_cast<std::size_t>(column)]); }

namespace {

void tick(PeArrayState& s) {
  ++s.cycles;
  s.active_bank_cycles += static_cast<std::uint64_t>(std::popcount(s.active_weight_banks) +
                                                     std::popcount(s.active_bias_banks));
}

}  // namespace

void array_cycle(PeArrayState& s, const ActVector& a, const WeightTile& w) {
  const int n = lanes(s.mode);
  for (int i = n; i < kArrayDim; ++i)
    if (a[static_cast<std::size_t>(i)].value() != 0)
      throw std::invalid_argument("inactive activation lane carries a non-zero value");
  for (int j = 0; j < n; ++j) {
    std::int64_t col = 0;
    for (int i = 0; i < n; ++i) {
      col += quant::shift_mac(a[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(i * kArrayDim + j)]).value();
      audit::count_add();
    }
    s.acc[static_cast<std::size_t>(j)] += col;
    audit::count_add();
  }
  tick(s);
}

void array_cycle(PeArrayState& s, const ActVector& a, const SubTile& w) {
  if (s.mode != ArrayMode::m4x4) throw std::logic_error("sub-tile cycle outside 4x4 mode");
  for (int i = 4; i < kArrayDim; ++i)
    if (a[static_cast<std::size_t>(i)].value() != 0)
      throw std::invalid_argument("inactive activation lane carries a non-zero value");
  for (int j = 0; j < 4; ++j) {
    std::int64_t col = 0;
    for (int i = 0; i < 4; ++i) {
      col += quant::shift_mac(a[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(i * 4 + j)]).value();
      audit::count_add();
    }
    s.acc[static_cast<std::size_t>(j)] += col;
    audit::count_add();
  }
  tick(s);
}

Accum ope_preactivation(Accum acc, const OpeConfig& cfg, std::optional<Accum> residual) {
  Accum v = acc;
  if (residual) v = quant::sat_add(v, quant::sat_shift(*residual, cfg.rescale.input_shift));
  return quant::sat_add(v, quant::to_accum(cfg.bias));
}

QAct ope_finalize(Accum acc, const OpeConfig& cfg, std::optional<Accum> residual, quant::QuantStats* stats) {
  const Accum v = ope_preactivation(acc, cfg, residual);
  if (cfg.relu) return quant::requantize(v, cfg.rescale, stats);
  std::int32_t x = v.value();
  if (cfg.rescale.output_shift > 0) {
    audit::count_shift();
    x >>= cfg.rescale.output_shift;
  }
  audit::count_compare();
  if (x >= 0 && x <= quant::kActMax) return QAct(x);
  if (stats) ++stats->overflow_events;
  if (cfg.rescale.overflow == quant::OverflowMode::wrap) return QAct(x & quant::kActMax);
  return QAct(x < 0 ? 0 : quant::kActMax);
}

// ---------------------------------------------------------------------------
// Weight memory

WeightMemoryMap::WeightMemoryMap()
    : cells_(static_cast<std::size_t>(kWeightBanks) * kWeightRows * kNibblesPerRow, LogWeight::kZeroCode) {}

namespace {

std::size_t wcell(int bank, int row, int nibble) {
  if (bank < 0 || bank >= kWeightBanks || row < 0 || row >= kWeightRows || nibble < 0 || nibble >= kNibblesPerRow)
    throw std::out_of_range("weight memory cell out of range");
  return (static_cast<std::size_t>(bank) * kWeightRows + static_cast<std::size_t>(row)) * kNibblesPerRow +
         static_cast<std::size_t>(nibble);
}

}  // namespace

LogWeight WeightMemoryMap::cell(int bank, int row, int nibble) const {
  return LogWeight::from_code(cells_[wcell(bank, row, nibble)]);
}

void WeightMemoryMap::touch(int bank, std::uint32_t mask) const {
  ++reads_;
  if (((mask >> bank) & 1U) == 0) ++gated_reads_;
}

void WeightMemoryMap::store_tile(int address, const WeightTile& tile) {
  if (address < 0 || address >= kTileAddresses) throw std::out_of_range("tile address out of range");
  for (int i = 0; i < kArrayDim; ++i)
    for (int j = 0; j < kArrayDim; ++j) {
      const int p = tile_position(i, j);
      cells_[wcell(p / kNibblesPerRow, address, p % kNibblesPerRow)] =
          tile[static_cast<std::size_t>(i * kArrayDim + j)].code();
    }
}

WeightTile WeightMemoryMap::load_tile(int address, std::uint32_t mask) const {
  if (address < 0 || address >= kTileAddresses) throw std::out_of_range("tile address out of range");
  for (int b = 0; b < kWeightBanks; ++b) touch(b, mask);
  WeightTile t;
  for (int i = 0; i < kArrayDim; ++i)
    for (int j = 0; j < kArrayDim; ++j) {
      const int p = tile_position(i, j);
      t[static_cast<std::size_t>(i * kArrayDim + j)] =
          LogWeight::from_code(cells_[wcell(p / kNibblesPerRow, address, p % kNibblesPerRow)]);
    }
  return t;
}

void WeightMemoryMap::store_subtile(int address, const SubTile& sub) {
  if (address < 0 || address >= kSubtileAddresses) throw std::out_of_range("sub-tile address out of range");
  const int bank0 = 2 * (address / kWeightRows);
  const int row = address % kWeightRows;
  for (int p = 0; p < 16; ++p)
    cells_[wcell(bank0 + p / kNibblesPerRow, row, p % kNibblesPerRow)] = sub[static_cast<std::size_t>(p)].code();
}

SubTile WeightMemoryMap::load_subtile(int address, std::uint32_t mask) const {
  if (address < 0 || address >= kSubtileAddresses) throw std::out_of_range("sub-tile address out of range");
  const int bank0 = 2 * (address / kWeightRows);
  const int row = address % kWeightRows;
  touch(bank0, mask);
  touch(bank0 + 1, mask);
  SubTile s;
  for (int p = 0; p < 16; ++p)
    s[static_cast<std::size_t>(p)] =
        LogWeight::from_code(cells_[wcell(bank0 + p / kNibblesPerRow, row, p % kNibblesPerRow)]);
  return s;
}

std::string WeightMemoryMap::dump() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::ostringstream os;
  for (int b = 0; b < kWeightBanks; ++b)
    for (int r = 0; r < kWeightRows; ++r) {
      std::string row;
      bool any = false;
      for (int k = 0; k < kNibblesPerRow; ++k) {
        const auto c = cells_[wcell(b, r, k)];
        any = any || c != LogWeight::kZeroCode;
        row.push_back(kHex[c]);
      }
      if (any) os << "W b" << b << " r" << r << ' ' << row << '\n';
    }
  return os.str();
}

// ---------------------------------------------------------------------------
// Bias memory

BiasMemoryMap::BiasMemoryMap() : cells_(static_cast<std::size_t>(kBiasBanks) * kBiasRows * kBiasesPerRow) {}

namespace {

std::size_t bcell(int bank, int row, int slot) {
  if (bank < 0 || bank >= kBiasBanks || row < 0 || row >= kBiasRows || slot < 0 || slot >= kBiasesPerRow)
    throw std::out_of_range("bias memory cell out of range");
  return (static_cast<std::size_t>(bank) * kBiasRows + static_cast<std::size_t>(row)) * kBiasesPerRow +
         static_cast<std::size_t>(slot);
}

}  // namespace

QBias BiasMemoryMap::cell(int bank, int row, int slot) const { return cells_[bcell(bank, row, slot)]; }

void BiasMemoryMap::touch(int bank, std::uint32_t mask) const {
  if (((mask >> bank) & 1U) == 0) ++gated_reads_;
}

void BiasMemoryMap::store_group16(int address, std::span<const QBias, 16> b) {
  for (int p = 0; p < 16; ++p) cells_[bcell(p / kBiasesPerRow, address, p % kBiasesPerRow)] = b[static_cast<std::size_t>(p)];
}

std::array<QBias, 16> BiasMemoryMap::load_group16(int address, std::uint32_t mask) const {
  std::array<QBias, 16> out{};
  for (int b = 0; b < kBiasBanks; ++b) touch(b, mask);
  for (int p = 0; p < 16; ++p) out[static_cast<std::size_t>(p)] = cells_[bcell(p / kBiasesPerRow, address, p % kBiasesPerRow)];
  return out;
}

void BiasMemoryMap::store_group4(int address, std::span<const QBias, 4> b) {
  if (address < 0 || address >= kBiasAddresses4) throw std::out_of_range("bias address out of range");
  const int bank0 = 2 * (address / kBiasRows);
  for (int p = 0; p < 4; ++p)
    cells_[bcell(bank0 + p / kBiasesPerRow, address % kBiasRows, p % kBiasesPerRow)] = b[static_cast<std::size_t>(p)];
}

std::array<QBias, 4> BiasMemoryMap::load_group4(int address, std::uint32_t mask) const {
  if (address < 0 || address >= kBiasAddresses4) throw std::out_of_range("bias address out of range");
  const int bank0 = 2 * (address / kBiasRows);
  touch(bank0, mask);
  touch(bank0 + 1, mask);
  std::array<QBias, 4> out{};
  for (int p = 0; p < 4; ++p)
    out[static_cast<std::size_t>(p)] = cells_[bcell(bank0 + p / kBiasesPerRow, address % kBiasRows, p % kBiasesPerRow)];
  return out;
}

std::string BiasMemoryMap::dump() const {
  std::ostringstream os;
  for (int b = 0; b < kBiasBanks; ++b)
    for (int r = 0; r < kBiasRows; ++r) {
      const auto x = cells_[bcell(b, r, 0)].value();
      const auto y = cells_[bcell(b, r, 1)].value();
      if (x != 0 || y != 0) os << "B b" << b << " r" << r << ' ' << x << ' ' << y << '\n';
    }
  return os.str();
}

// ---------------------------------------------------------------------------
// Layout and analytic counts

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

MemoryLayout plan_layout(const net::NetworkConfig& config, ArrayMode mode) {
  const int u = lanes(mode);
  MemoryLayout lay;
  lay.mode = mode;
  int waddr = 0;
  int baddr = 0;
  std::int64_t biases = 0;
  for (const auto& lv : net::conv_layers(config)) {
    LayerPlacement p;
    p.in_units = ceil_div(lv.conv.in_channels, u);
    p.out_units = ceil_div(lv.conv.out_channels, u);
    p.taps = lv.conv.kernel_size;
    p.weight_base = waddr;
    waddr += p.in_units * p.out_units * p.taps;
    if (lv.residual == net::ResidualKind::conv1x1) {
      const auto& blk = config.blocks[static_cast<std::size_t>(lv.block)];
      p.residual_in_units = ceil_div(blk.in_channels(), u);
      p.residual_base = waddr;
      waddr += p.residual_in_units * p.out_units;
    }
    if (lv.conv.has_bias) {
      p.bias_base = baddr;
      baddr += p.out_units;
      biases += lv.conv.out_channels;
    }
    lay.conv.push_back(p);
  }
  int prev = config.conv_output_channels();
  for (int w : config.head) {
    LayerPlacement p;
    p.in_units = ceil_div(prev, u);
    p.out_units = ceil_div(w, u);
    p.weight_base = waddr;
    waddr += p.in_units * p.out_units;
    p.bias_base = baddr;
    baddr += p.out_units;
    biases += w;
    lay.head.push_back(p);
    prev = w;
  }
  lay.weight_addresses = waddr;
  lay.bias_addresses = baddr;

  if (mode == ArrayMode::m16x16) {
    if (waddr > kTileAddresses) throw CapacityError("16x16 weight memory (tile addresses)", waddr, kTileAddresses);
    if (baddr > kBiasAddresses16) throw CapacityError("16x16 bias memory (addresses)", baddr, kBiasAddresses16);
  } else {
    const auto weights = net::weight_count(config);
    if (weights > kMaxWeights4x4) throw CapacityError("4x4 weight memory (weights)", weights, kMaxWeights4x4);
    if (waddr > kSubtileAddresses) throw CapacityError("4x4 weight memory (sub-tile addresses)", waddr, kSubtileAddresses);
    if (biases > kMaxBiases4x4) throw CapacityError("4x4 bias memory (biases)", biases, kMaxBiases4x4);
    if (baddr > kBiasAddresses4) throw CapacityError("4x4 bias memory (addresses)", baddr, kBiasAddresses4);
  }
  return lay;
}

std::uint64_t node_cycles(const net::LayerView& lv, const net::NetworkConfig& config, ArrayMode mode) {
  const auto in_t = static_cast<std::uint64_t>(ceil_div(lv.conv.in_channels, kArrayDim));
  const auto out_t = static_cast<std::uint64_t>(ceil_div(lv.conv.out_channels, kArrayDim));
  std::uint64_t tiles = in_t * out_t * static_cast<std::uint64_t>(lv.conv.kernel_size);
  if (lv.residual == net::ResidualKind::conv1x1) {
    const auto& blk = config.blocks[static_cast<std::size_t>(lv.block)];
    tiles += static_cast<std::uint64_t>(ceil_div(blk.in_channels(), kArrayDim)) * out_t;
  }
  return mode == ArrayMode::m4x4 ? tiles << 4 : tiles;
}

std::uint64_t head_cycles(const net::NetworkConfig& config, ArrayMode mode) {
  std::uint64_t tiles = 0;
  int prev = config.conv_output_channels();
  for (int w : config.head) {
    tiles += static_cast<std::uint64_t>(ceil_div(prev, kArrayDim)) * static_cast<std::uint64_t>(ceil_div(w, kArrayDim));
    prev = w;
  }
  return mode == ArrayMode::m4x4 ? tiles << 4 : tiles;
}

std::uint64_t inference_cycles(const net::NetworkConfig& config, const sched::DependencySets& deps, ArrayMode mode) {
  const auto layers = net::conv_layers(config);
  std::uint64_t c = 0;
  for (std::size_t l = 1; l < deps.sets.size() && l <= layers.size(); ++l)
    c += node_cycles(layers[l - 1], config, mode) * deps.sets[l].size();
  return c + head_cycles(config, mode);
}

double peak_throughput(ArrayMode mode, double clock_hz) {
  if (clock_hz <= 0.0) return 0.0;
  const int n = lanes(mode);
  return static_cast<double>(n * n * 2) * clock_hz;
}

int argmax(std::span<const Accum> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

// ---------------------------------------------------------------------------
// Engine

namespace {

LogWeight conv_weight(const net::ConvLayerSpec& c, const net::ConvParams& p, int out, int in, int tap) {
  if (out >= c.out_channels || in >= c.in_channels) return LogWeight::zero();
  return p.weights[net::conv_weight_index(c, out, in, tap)];
}

LogWeight matrix_weight(const std::vector<LogWeight>& w, int rows, int cols, int out, int in) {
  if (out >= rows || in >= cols) return LogWeight::zero();
  return w[static_cast<std::size_t>(out) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(in)];
}

QBias bias_at(const std::vector<QBias>& b, int i) {
  return i < static_cast<int>(b.size()) ? b[static_cast<std::size_t>(i)] : QBias{};
}

// Fills the memories for one [out][in] weight block. `get(out, in)` yields
// the weight; `addr(out_unit, in_unit)` the address.
template <class Get, class Addr>
void store_block(WeightMemoryMap& m, ArrayMode mode, int out_units, int in_units, Get get, Addr addr) {
  if (mode == ArrayMode::m16x16) {
    for (int b = 0; b < out_units; ++b)
      for (int a = 0; a < in_units; ++a) {
        WeightTile t;
        for (int i = 0; i < kArrayDim; ++i)
          for (int j = 0; j < kArrayDim; ++j)
            t[static_cast<std::size_t>(i * kArrayDim + j)] = get(b * kArrayDim + j, a * kArrayDim + i);
        m.store_tile(addr(b, a), t);
      }
  } else {
    for (int b = 0; b < out_units; ++b)
      for (int a = 0; a < in_units; ++a) {
        SubTile s;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) s[static_cast<std::size_t>(i * 4 + j)] = get(b * 4 + j, a * 4 + i);
        m.store_subtile(addr(b, a), s);
      }
  }
}

template <class Addr, class Set>
void load_block(const WeightMemoryMap& m, ArrayMode mode, int out_units, int in_units, Addr addr, Set set) {
  const auto mask = weight_bank_mask(mode);
  for (int b = 0; b < out_units; ++b)
    for (int a = 0; a < in_units; ++a) {
      if (mode == ArrayMode::m16x16) {
        const auto t = m.load_tile(addr(b, a), mask);
        for (int i = 0; i < kArrayDim; ++i)
          for (int j = 0; j < kArrayDim; ++j) set(b * kArrayDim + j, a * kArrayDim + i, t[static_cast<std::size_t>(i * kArrayDim + j)]);
      } else {
        const auto s = m.load_subtile(addr(b, a), mask);
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) set(b * 4 + j, a * 4 + i, s[static_cast<std::size_t>(i * 4 + j)]);
      }
    }
}

void store_biases(BiasMemoryMap& m, ArrayMode mode, const LayerPlacement& p, const std::vector<QBias>& b) {
  if (p.bias_base < 0) return;
  const int u = lanes(mode);
  for (int g = 0; g < p.out_units; ++g) {
    if (mode == ArrayMode::m16x16) {
      std::array<QBias, 16> grp{};
      for (int i = 0; i < 16; ++i) grp[static_cast<std::size_t>(i)] = bias_at(b, g * u + i);
      m.store_group16(p.bias_base + g, grp);
    } else {
      std::array<QBias, 4> grp{};
      for (int i = 0; i < 4; ++i) grp[static_cast<std::size_t>(i)] = bias_at(b, g * u + i);
      m.store_group4(p.bias_base + g, grp);
    }
  }
}

}  // namespace

Engine::Engine(net::Checkpoint ckpt, ArrayMode mode)
    : ckpt_(std::move(ckpt)),
      layers_(net::conv_layers(ckpt_.config)),
      mode_(mode),
      layout_(plan_layout(ckpt_.config, mode)),
      state_(mode) {
  if (auto v = net::validate_checkpoint(ckpt_); !v.empty())
    throw std::invalid_argument("checkpoint does not match its config: " + v.front().location + ": " + v.front().message);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& c = layers_[l].conv;
    const auto& p = layout_.conv[l];
    const auto& prm = ckpt_.conv[l];
    for (int tap = 0; tap < c.kernel_size; ++tap)
      store_block(wmem_, mode_, p.out_units, p.in_units,
                  [&](int o, int i) { return conv_weight(c, prm, o, i, tap); },
                  [&](int b, int a) { return p.weight_address(tap, b, a); });
    if (p.residual_base >= 0) {
      const int rin = ckpt_.config.blocks[static_cast<std::size_t>(layers_[l].block)].in_channels();
      store_block(wmem_, mode_, p.out_units, p.residual_in_units,
                  [&](int o, int i) { return matrix_weight(prm.residual_weights, c.out_channels, rin, o, i); },
                  [&](int b, int a) { return p.residual_base + b * p.residual_in_units + a; });
    }
    store_biases(bmem_, mode_, p, prm.bias);
  }
  int prev = ckpt_.config.conv_output_channels();
  for (std::size_t h = 0; h < layout_.head.size(); ++h) {
    const auto& p = layout_.head[h];
    const int w = ckpt_.config.head[h];
    store_block(wmem_, mode_, p.out_units, p.in_units,
                [&](int o, int i) { return matrix_weight(ckpt_.head[h].weights, w, prev, o, i); },
                [&](int b, int a) { return p.weight_address(0, b, a); });
    store_biases(bmem_, mode_, p, ckpt_.head[h].bias);
    prev = w;
  }
}

net::Checkpoint Engine::read_back() const {
  net::Checkpoint out = ckpt_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& c = layers_[l].conv;
    const auto& p = layout_.conv[l];
    auto& prm = out.conv[l];
    std::fill(prm.weights.begin(), prm.weights.end(), LogWeight::zero());
    for (int tap = 0; tap < c.kernel_size; ++tap)
      load_block(wmem_, mode_, p.out_units, p.in_units,
                 [&](int b, int a) { return p.weight_address(tap, b, a); },
                 [&](int o, int i, LogWeight w) {
                   if (o < c.out_channels && i < c.in_channels) prm.weights[net::conv_weight_index(c, o, i, tap)] = w;
                 });
    if (p.residual_base >= 0) {
      const int rin = ckpt_.config.blocks[static_cast<std::size_t>(layers_[l].block)].in_channels();
      load_block(wmem_, mode_, p.out_units, p.residual_in_units,
                 [&](int b, int a) { return p.residual_base + b * p.residual_in_units + a; },
                 [&](int o, int i, LogWeight w) {
                   if (o < c.out_channels && i < rin)
                     prm.residual_weights[static_cast<std::size_t>(o) * static_cast<std::size_t>(rin) + static_cast<std::size_t>(i)] = w;
                 });
    }
    for (int g = 0; g < p.out_units && p.bias_base >= 0; ++g) {
      const auto grp = bias_block(p, g);
      for (int i = 0; i < lanes(mode_); ++i) {
        const int o = g * lanes(mode_) + i;
        if (o < static_cast<int>(prm.bias.size())) prm.bias[static_cast<std::size_t>(o)] = grp[static_cast<std::size_t>(i)];
      }
    }
  }
  int prev = ckpt_.config.conv_output_channels();
  for (std::size_t h = 0; h < layout_.head.size(); ++h) {
    const auto& p = layout_.head[h];
    const int w = ckpt_.config.head[h];
    auto& f = out.head[h];
    load_block(wmem_, mode_, p.out_units, p.in_units, [&](int b, int a) { return p.weight_address(0, b, a); },
               [&](int o, int i, LogWeight x) {
                 if (o < w && i < prev) f.weights[static_cast<std::size_t>(o) * static_cast<std::size_t>(prev) + static_cast<std::size_t>(i)] = x;
               });
    for (int g = 0; g < p.out_units; ++g) {
      const auto grp = bias_block(p, g);
      for (int i = 0; i < lanes(mode_); ++i) {
        const int o = g * lanes(mode_) + i;
        if (o < w) f.bias[static_cast<std::size_t>(o)] = grp[static_cast<std::size_t>(i)];
      }
    }
    prev = w;
  }
  return out;
}

std::array<QBias, 16> Engine::bias_block(const LayerPlacement& p, int group) const {
  std::array<QBias, 16> out{};
  if (p.bias_base < 0 || group >= p.out_units) return out;
  if (mode_ == ArrayMode::m16x16) return bmem_.load_group16(p.bias_base + group, bias_bank_mask(mode_));
  const auto g4 = bmem_.load_group4(p.bias_base + group, bias_bank_mask(mode_));
  std::copy(g4.begin(), g4.end(), out.begin());
  return out;
}

// Accumulates x against the weights of one output group. In 16x16 mode a
// group is one 16-wide tile column; in 4x4 mode it is one 4-wide sub-block
// and every 16x16-padded input tile is walked as four sub-tile cycles,
// padding sub-tiles included.
void Engine::tile_pass(const std::vector<QAct>& x, int in_channels, const LayerPlacement& p, int tap,
                       int group, bool residual) {
  const int in_units = residual ? p.residual_in_units : p.in_units;
  auto addr = [&](int unit) {
    return residual ? p.residual_base + group * p.residual_in_units + unit : p.weight_address(tap, group, unit);
  };
  const int in_tiles = (in_channels + kArrayDim - 1) / kArrayDim;
  if (mode_ == ArrayMode::m16x16) {
    for (int a = 0; a < in_tiles; ++a) {
      ActVector act{};
      for (int i = 0; i < kArrayDim; ++i) {
        const int c = a * kArrayDim + i;
        if (c < in_channels) act[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(c)];
      }
      array_cycle(state_, act, wmem_.load_tile(addr(a), state_.active_weight_banks));
    }
    return;
  }
  for (int a = 0; a < in_tiles; ++a)
    for (int si = 0; si < 4; ++si) {
      const int unit = a * 4 + si;
      ActVector act{};
      SubTile w;
      w.fill(LogWeight::zero());
      if (unit < in_units && group < p.out_units) {
        for (int i = 0; i < 4; ++i) {
          const int c = unit * 4 + i;
          if (c < in_channels) act[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(c)];
        }
        w = wmem_.load_subtile(addr(unit), state_.active_weight_banks);
      }
      array_cycle(state_, act, w);
    }
}

std::vector<Accum> Engine::conv_node(std::size_t l, const std::vector<const std::vector<QAct>*>& taps,
                                     const std::vector<QAct>* residual_src, std::vector<QAct>& out,
                                     InferenceResult& res) {
  const auto& lv = layers_[l];
  const auto& c = lv.conv;
  const auto& p = layout_.conv[l];
  const auto& prm = ckpt_.conv[l];
  const int u = lanes(mode_);
  const int groups = ((c.out_channels + kArrayDim - 1) / kArrayDim) * (kArrayDim / u);
  const int res_in = lv.residual_source >= 0
                         ? ckpt_.config.blocks[static_cast<std::size_t>(lv.block)].in_channels()
                         : 0;
  const std::vector<QAct> zeros(static_cast<std::size_t>(c.in_channels));
  out.assign(static_cast<std::size_t>(c.out_channels), QAct{});
  std::vector<Accum> pre(static_cast<std::size_t>(c.out_channels));

  for (int g = 0; g < groups; ++g) {
    std::array<Accum, kArrayDim> resid{};
    if (lv.residual == net::ResidualKind::conv1x1) {
      state_.clear_accumulators();
      tile_pass(*residual_src, res_in, p, 0, g, true);
      for (int j = 0; j < u; ++j) resid[static_cast<std::size_t>(j)] = state_.read(j);
    }
    state_.clear_accumulators();
    for (int tap = 0; tap < c.kernel_size; ++tap) {
      const auto* x = taps[static_cast<std::size_t>(tap)];
      // Zero padding still occupies the tap's cycles.
      tile_pass(x ? *x : zeros, c.in_channels, p, tap, g, false);
    }
    const auto bias = bias_block(p, g);
    for (int j = 0; j < u; ++j) {
      const int o = g * u + j;
      if (o >= c.out_channels) break;
      OpeConfig cfg{prm.rescale, bias[static_cast<std::size_t>(j)], true};
      std::optional<Accum> r;
      if (lv.residual == net::ResidualKind::conv1x1) r = resid[static_cast<std::size_t>(j)];
      else if (lv.residual == net::ResidualKind::identity) r = quant::to_accum((*residual_src)[static_cast<std::size_t>(o)]);
      const Accum a = state_.read(j);
      pre[static_cast<std::size_t>(o)] = ope_preactivation(a, cfg, r);
      out[static_cast<std::size_t>(o)] = ope_finalize(a, cfg, r, &res.stats);
    }
  }
  return pre;
}

std::vector<QAct> Engine::run_fc(std::size_t h, const std::vector<QAct>& x, std::vector<Accum>* preact,
                                 InferenceResult& res) {
  const auto& p = layout_.head[h];
  const auto& f = ckpt_.head[h];
  const int w = ckpt_.config.head[h];
  const int in = static_cast<int>(x.size());
  const int u = lanes(mode_);
  const int groups = ((w + kArrayDim - 1) / kArrayDim) * (kArrayDim / u);
  std::vector<QAct> out(static_cast<std::size_t>(w));
  if (preact) preact->assign(static_cast<std::size_t>(w), Accum{});
  for (int g = 0; g < groups; ++g) {
    state_.clear_accumulators();
    tile_pass(x, in, p, 0, g, false);
    const auto bias = bias_block(p, g);
    for (int j = 0; j < u; ++j) {
      const int o = g * u + j;
      if (o >= w) break;
      OpeConfig cfg{f.rescale, bias[static_cast<std::size_t>(j)], true};
      const Accum a = state_.read(j);
      if (preact) (*preact)[static_cast<std::size_t>(o)] = ope_preactivation(a, cfg);
      out[static_cast<std::size_t>(o)] = ope_finalize(a, cfg, std::nullopt, &res.stats);
    }
  }
  return out;
}

void Engine::begin(const sched::Schedule& schedule) {
  state_ = PeArrayState(mode_);
  wmem_.reset_counters();
  fifo_.assign(schedule.slots.size(), {});
  for (std::size_t l = 0; l < schedule.slots.size(); ++l) {
    fifo_[l].channels = schedule.channels[l];
    fifo_[l].slots.assign(static_cast<std::size_t>(schedule.slots[l]),
                          std::vector<QAct>(static_cast<std::size_t>(schedule.channels[l])));
  }
}

InferenceResult Engine::run(const Sequence& input) {
  const int n = static_cast<int>(input.size());
  const auto deps = sched::dependency_sets(ckpt_.config, n);
  return run(input, sched::greedy_schedule(deps, ckpt_.config));
}

InferenceResult Engine::run(const Sequence& input, const sched::Schedule& schedule) {
  if (input.empty()) throw std::invalid_argument("empty input sequence");
  for (std::size_t t = 0; t < input.size(); ++t)
    if (static_cast<int>(input[t].size()) != ckpt_.config.input_channels)
      throw std::invalid_argument("input timestep " + std::to_string(t) + " has " + std::to_string(input[t].size()) +
                                  " channels, expected " + std::to_string(ckpt_.config.input_channels));
  if (schedule.slots.size() != layers_.size() + 1)
    throw std::invalid_argument("schedule does not match the network depth");

  begin(schedule);
  const auto gated_bias_before = bmem_.gated_reads();
  InferenceResult res;
  res.layer_cycles.assign(layers_.size() + 1, 0);
  const int n = static_cast<int>(input.size());
  std::vector<QAct> last_out;
  std::vector<Accum> last_pre;
  for (const auto& e : schedule.events) {
    const auto before = state_.cycles;
    if (e.node.layer == 0) {
      fifo_[0].slots[static_cast<std::size_t>(e.write.slot)] = input[static_cast<std::size_t>(e.node.timestep)];
      continue;
    }
    const auto l = static_cast<std::size_t>(e.node.layer) - 1;
    std::vector<const std::vector<QAct>*> taps;
    for (const auto& r : e.reads)
      taps.push_back(r.padding() ? nullptr : &fifo_[static_cast<std::size_t>(r.layer)].slots[static_cast<std::size_t>(r.slot)]);
    const std::vector<QAct>* rsrc = nullptr;
    if (e.residual_read)
      rsrc = &fifo_[static_cast<std::size_t>(e.residual_read->layer)].slots[static_cast<std::size_t>(e.residual_read->slot)];
    std::vector<QAct> out;
    auto pre = conv_node(l, taps, rsrc, out, res);
    if (e.node.layer == static_cast<int>(layers_.size()) && e.node.timestep == n - 1) {
      last_out = out;
      last_pre = std::move(pre);
    }
    fifo_[static_cast<std::size_t>(e.write.layer)].slots[static_cast<std::size_t>(e.write.slot)] = std::move(out);
    res.layer_cycles[l + 1] += state_.cycles - before;
  }
  if (layers_.empty()) {
    last_out = input.back();
    last_pre.clear();
    for (auto a : last_out) last_pre.push_back(quant::to_accum(a));
  }

  const auto head_start = state_.cycles;
  std::vector<QAct> x = last_out;
  for (std::size_t h = 0; h < layout_.head.size(); ++h) {
    const bool final = h + 1 == layout_.head.size();
    x = run_fc(h, x, final ? &last_pre : nullptr, res);
  }
  res.head_cycles = state_.cycles - head_start;
  res.output = std::move(x);
  res.logits = std::move(last_pre);
  res.predicted = argmax(res.logits);
  res.cycles = state_.cycles;
  res.active_bank_cycles = state_.active_bank_cycles;
  res.gated_bank_reads = wmem_.gated_reads() + (bmem_.gated_reads() - gated_bias_before);
  return res;
}

std::string Engine::memory_dump() const {
  std::ostringstream os;
  os << "mode " << to_string(mode_) << '\n';
  os << "weight_addresses " << layout_.weight_addresses << '\n';
  os << "bias_addresses " << layout_.bias_addresses << '\n';
  auto place = [&](const char* kind, std::size_t i, const LayerPlacement& p) {
    os << kind << ' ' << i + 1 << " units " << p.in_units << 'x' << p.out_units << " taps " << p.taps
       << " weights " << p.weight_base << " residual " << p.residual_base << " bias " << p.bias_base << '\n';
  };
  for (std::size_t i = 0; i < layout_.conv.size(); ++i) place("layer", i, layout_.conv[i]);
  for (std::size_t i = 0; i < layout_.head.size(); ++i) place("fc", i, layout_.head[i]);
  os << wmem_.dump() << bmem_.dump();
  return os.str();
}

}  // namespace chameleon::pe
