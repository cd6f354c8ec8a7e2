#pragma once

// Random small networks and inputs shared by the unit and acceptance tests.

#include <cstdint>
#include <random>
#include <vector>

#include "chameleon/netmodel.hpp"
#include "chameleon/pe_array.hpp"

namespace chameleon::testnets {

struct RandomNetLimits {
  int max_layers = 8;
  int max_channels = 8;
  int max_n = 64;
  int max_input_channels = 4;
};

struct RandomNet {
  net::Checkpoint ckpt;
  pe::Sequence input;
};

inline int draw(std::mt19937_64& g, int lo, int hi) {
  return lo + static_cast<int>(g() % static_cast<std::uint64_t>(hi - lo + 1));
}

/// Doubling-dilation TCN with random widths, kernel 2..3, optional head,
/// random bias/no-bias layers and random parameters.
inline RandomNet random_net(std::uint64_t seed, const RandomNetLimits& lim = {}) {
  std::mt19937_64 g(seed);
  net::TcnShape s;
  s.input_channels = draw(g, 1, lim.max_input_channels);
  s.channels = draw(g, 1, lim.max_channels);
  s.blocks = draw(g, 1, lim.max_layers / 2);
  s.kernel_size = draw(g, 2, 3);
  s.sequence_length = draw(g, 1, lim.max_n);
  const int heads = draw(g, 0, 2);
  for (int h = 0; h < heads; ++h) s.head.push_back(draw(g, 1, lim.max_channels));
  auto cfg = net::make_tcn(s);
  for (auto& b : cfg.blocks) {
    b.conv1.has_bias = draw(g, 0, 3) != 0;
    if (b.conv2) b.conv2->has_bias = draw(g, 0, 3) != 0;
  }
  net::GenerateOptions opt;
  opt.overflow = draw(g, 0, 1) ? quant::OverflowMode::clamp : quant::OverflowMode::wrap;
  opt.max_output_shift = draw(g, 2, 6);
  RandomNet r;
  r.ckpt = net::generate_checkpoint(cfg, g(), opt);
  r.input.resize(static_cast<std::size_t>(s.sequence_length));
  for (auto& step : r.input)
    for (int c = 0; c < s.input_channels; ++c) step.emplace_back(draw(g, 0, 15));
  return r;
}

/// Single causal conv (no second conv, no residual): in -> out, kernel k,
/// dilation d. The engines accept it; validate() flags the missing conv2.
inline net::NetworkConfig single_conv(int in, int out, int k, int d, int n) {
  net::NetworkConfig c;
  c.input_channels = in;
  c.sequence_length = n;
  net::ResidualBlockSpec b;
  b.conv1 = {in, out, k, d, true};
  c.blocks.push_back(b);
  return c;
}

}  // namespace chameleon::testnets
