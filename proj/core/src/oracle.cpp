#include "chameleon/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chameleon::oracle {

using quant::Accum;

namespace {

std::int64_t mul(std::int64_t a, std::int64_t b) {
  audit::count_multiply();
  return a * b;
}

// act[t][c] of one layer.
using Plane = std::vector<std::vector<int>>;

struct FinalNode {
  std::vector<int> values;
  std::vector<Accum> pre;
};

Accum finish(std::int64_t sum, std::optional<std::int64_t> residual, const quant::RescaleSpec& r, int bias,
             int& out, quant::QuantStats* st) {
  Accum v = Accum::saturate(sum);
  if (residual) v = quant::sat_add(v, quant::sat_shift(Accum::saturate(*residual), r.input_shift));
  v = quant::sat_add(v, Accum(bias));
  out = quant::requantize(v, r, st).value();
  return v;
}

}  // namespace

DenseOutput dense_forward(const net::Checkpoint& ck, const Sequence& input, const NodeHook& hook) {
  const auto& cfg = ck.config;
  const int n = static_cast<int>(input.size());
  if (n == 0) throw std::invalid_argument("empty input sequence");
  const auto layers = net::conv_layers(cfg);

  std::vector<Plane> act(layers.size() + 1);
  act[0].assign(static_cast<std::size_t>(n), {});
  for (int t = 0; t < n; ++t) {
    auto& v = act[0][static_cast<std::size_t>(t)];
    for (auto a : input[static_cast<std::size_t>(t)]) v.push_back(a.value());
    if (static_cast<int>(v.size()) != cfg.input_channels) throw std::invalid_argument("input width mismatch");
    if (hook) hook(0, t, v);
  }

  std::vector<Accum> last_pre;
  for (std::size_t l = 1; l <= layers.size(); ++l) {
    const auto& lv = layers[l - 1];
    const auto& c = lv.conv;
    const auto& p = ck.conv[l - 1];
    const int rin = lv.residual_source >= 0 ? cfg.blocks[static_cast<std::size_t>(lv.block)].in_channels() : 0;
    act[l].assign(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(c.out_channels)));
    for (int t = 0; t < n; ++t) {
      for (int o = 0; o < c.out_channels; ++o) {
        std::int64_t sum = 0;
        for (int j = 0; j < c.kernel_size; ++j) {
          const int src = t - j * c.dilation;
          if (src < 0) continue;
          const auto& x = act[l - 1][static_cast<std::size_t>(src)];
          for (int i = 0; i < c.in_channels; ++i)
            sum += mul(x[static_cast<std::size_t>(i)],
                       quant::decode_log_weight(p.weights[net::conv_weight_index(c, o, i, j)]));
        }
        std::optional<std::int64_t> res;
        if (lv.residual_source >= 0) {
          const auto& r = act[static_cast<std::size_t>(lv.residual_source)][static_cast<std::size_t>(t)];
          if (lv.residual == net::ResidualKind::identity) {
            res = r[static_cast<std::size_t>(o)];
          } else {
            std::int64_t rs = 0;
            for (int i = 0; i < rin; ++i)
              rs += mul(r[static_cast<std::size_t>(i)],
                        quant::decode_log_weight(p.residual_weights[static_cast<std::size_t>(o * rin + i)]));
            res = rs;
          }
        }
        const int b = c.has_bias ? p.bias[static_cast<std::size_t>(o)].value() : 0;
        const Accum pre = finish(sum, res, p.rescale, b, act[l][static_cast<std::size_t>(t)][static_cast<std::size_t>(o)], nullptr);
        if (l == layers.size() && t == n - 1) last_pre.push_back(pre);
      }
      if (hook) hook(static_cast<int>(l), t, act[l][static_cast<std::size_t>(t)]);
    }
  }

  std::vector<int> x = act.back()[static_cast<std::size_t>(n - 1)];
  if (layers.empty())
    for (int v : x) last_pre.push_back(Accum(v));
  for (std::size_t h = 0; h < cfg.head.size(); ++h) {
    const auto& f = ck.head[h];
    const int w = cfg.head[h];
    const int in = static_cast<int>(x.size());
    std::vector<int> y(static_cast<std::size_t>(w));
    std::vector<Accum> pre;
    for (int o = 0; o < w; ++o) {
      std::int64_t sum = 0;
      for (int i = 0; i < in; ++i)
        sum += mul(x[static_cast<std::size_t>(i)], quant::decode_log_weight(f.weights[static_cast<std::size_t>(o * in + i)]));
      pre.push_back(finish(sum, std::nullopt, f.rescale, f.bias[static_cast<std::size_t>(o)].value(),
                           y[static_cast<std::size_t>(o)], nullptr));
    }
    x = std::move(y);
    last_pre = std::move(pre);
  }

  DenseOutput out;
  for (int v : x) out.output.emplace_back(v);
  out.logits = std::move(last_pre);
  for (std::size_t i = 1; i < out.logits.size(); ++i)
    if (out.logits[i] > out.logits[static_cast<std::size_t>(out.predicted)]) out.predicted = static_cast<int>(i);
  return out;
}

std::vector<double> dense_forward_real(const net::Checkpoint& ck, const std::vector<std::vector<double>>& input) {
  const auto& cfg = ck.config;
  const int n = static_cast<int>(input.size());
  if (n == 0) throw std::invalid_argument("empty input sequence");
  const auto layers = net::conv_layers(cfg);
  std::vector<std::vector<std::vector<double>>> act(layers.size() + 1);
  act[0] = input;
  auto relu_scale = [](double v, const quant::RescaleSpec& r) { return std::max(0.0, std::ldexp(v, -r.output_shift)); };

  for (std::size_t l = 1; l <= layers.size(); ++l) {
    const auto& lv = layers[l - 1];
    const auto& c = lv.conv;
    const auto& p = ck.conv[l - 1];
    const int rin = lv.residual_source >= 0 ? cfg.blocks[static_cast<std::size_t>(lv.block)].in_channels() : 0;
    act[l].assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(c.out_channels)));
    for (int t = 0; t < n; ++t)
      for (int o = 0; o < c.out_channels; ++o) {
        double sum = 0;
        for (int j = 0; j < c.kernel_size; ++j) {
          const int src = t - j * c.dilation;
          if (src < 0) continue;
          for (int i = 0; i < c.in_channels; ++i) {
            audit::count_multiply();
            sum += act[l - 1][static_cast<std::size_t>(src)][static_cast<std::size_t>(i)] *
                   quant::decode_log_weight(p.weights[net::conv_weight_index(c, o, i, j)]);
          }
        }
        if (lv.residual_source >= 0) {
          const auto& r = act[static_cast<std::size_t>(lv.residual_source)][static_cast<std::size_t>(t)];
          double rs = 0;
          if (lv.residual == net::ResidualKind::identity) {
            rs = r[static_cast<std::size_t>(o)];
          } else {
            for (int i = 0; i < rin; ++i) {
              audit::count_multiply();
              rs += r[static_cast<std::size_t>(i)] *
                    quant::decode_log_weight(p.residual_weights[static_cast<std::size_t>(o * rin + i)]);
            }
          }
          sum += std::ldexp(rs, p.rescale.input_shift);
        }
        if (c.has_bias) sum += p.bias[static_cast<std::size_t>(o)].value();
        act[l][static_cast<std::size_t>(t)][static_cast<std::size_t>(o)] = relu_scale(sum, p.rescale);
      }
  }
  std::vector<double> x = act.back()[static_cast<std::size_t>(n - 1)];
  for (std::size_t h = 0; h < cfg.head.size(); ++h) {
    const auto& f = ck.head[h];
    const int w = cfg.head[h];
    const int in = static_cast<int>(x.size());
    std::vector<double> y(static_cast<std::size_t>(w));
    for (int o = 0; o < w; ++o) {
      double sum = f.bias[static_cast<std::size_t>(o)].value();
      for (int i = 0; i < in; ++i) {
        audit::count_multiply();
        sum += x[static_cast<std::size_t>(i)] * quant::decode_log_weight(f.weights[static_cast<std::size_t>(o * in + i)]);
      }
      y[static_cast<std::size_t>(o)] = relu_scale(sum, f.rescale);
    }
    x = std::move(y);
  }
  return x;
}

int l2_prototype_classify(const std::vector<std::vector<std::vector<double>>>& support,
                          const std::vector<double>& query, std::vector<double>* distances) {
  if (support.empty()) throw std::invalid_argument("no classes in support set");
  int best = 0;
  double best_d = 0;
  if (distances) distances->clear();
  for (std::size_t j = 0; j < support.size(); ++j) {
    const auto& shots = support[j];
    if (shots.empty()) throw std::invalid_argument("class without shots");
    double d = 0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      double s = 0;
      for (const auto& e : shots) s += e.at(i);
      const double diff = s / static_cast<double>(shots.size()) - query[i];
      d += diff * diff;
    }
    if (distances) distances->push_back(d);
    if (j == 0 || d < best_d) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return best;
}

DenseCost dense_cost(const net::NetworkConfig& cfg, int n) {
  DenseCost c;
  if (n <= 0) return c;
  const std::int64_t N = n;
  auto bytes = [](std::int64_t values) { return (values * 4 + 7) / 8; };
  for (const auto& lv : net::conv_layers(cfg)) {
    const std::int64_t cin = lv.conv.in_channels;
    const std::int64_t cout = lv.conv.out_channels;
    c.activations += N * cout;
    c.activation_bytes += bytes(N * cout);
    c.macs += N * cin * cout * lv.conv.kernel_size;
    if (lv.residual == net::ResidualKind::conv1x1)
      c.macs += N * cfg.blocks[static_cast<std::size_t>(lv.block)].in_channels() * cout;
    c.nodes += N;
  }
  std::int64_t prev = cfg.conv_output_channels();
  for (int w : cfg.head) {
    c.activations += w;
    c.activation_bytes += bytes(w);
    c.macs += prev * w;
    prev = w;
  }
  c.input_bytes = bytes(N * cfg.input_channels);
  return c;
}

}  // namespace chameleon::oracle
