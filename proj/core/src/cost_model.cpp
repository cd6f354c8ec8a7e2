#include "chameleon/cost_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chameleon/oracle.hpp"
#include "chameleon/scheduler.hpp"

namespace chameleon::cost {

namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

std::int64_t scheduled_macs(const net::NetworkConfig& cfg, const sched::DependencySets& deps) {
  const auto layers = net::conv_layers(cfg);
  std::int64_t macs = 0;
  for (std::size_t l = 1; l < deps.sets.size(); ++l) {
    const auto& lv = layers[l - 1];
    const auto nodes = static_cast<std::int64_t>(deps.sets[l].size());
    macs += nodes * lv.conv.in_channels * lv.conv.out_channels * lv.conv.kernel_size;
    if (lv.residual == net::ResidualKind::conv1x1)
      macs += nodes * cfg.blocks[static_cast<std::size_t>(lv.block)].in_channels() * lv.conv.out_channels;
  }
  std::int64_t prev = cfg.conv_output_channels();
  for (int w : cfg.head) {
    macs += prev * w;
    prev = w;
  }
  return macs;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

MetricsReport compare_strategies(const net::NetworkConfig& cfg, int n, double clock_hz) {
  MetricsReport r;
  r.sequence_length = n;
  r.weights = net::weight_count(cfg);
  r.weight_bytes = (r.weights * 4 + 7) / 8;
  try {
    r.receptive_field = net::receptive_field(cfg);
  } catch (const std::invalid_argument&) {
    r.receptive_field = 0;
  }

  const auto deps = sched::dependency_sets(cfg, n);
  const auto schedule = sched::greedy_schedule(deps, cfg);
  const auto fifo = sched::simulate_fifo(schedule, cfg);
  const auto dense = oracle::dense_cost(cfg, n);

  r.scheduled_events = static_cast<std::int64_t>(schedule.conv_events());
  r.dense_events = dense.nodes;
  r.scheduled_macs = scheduled_macs(cfg, deps);
  r.dense_macs = dense.macs;
  r.scheduled_ops = r.scheduled_macs * 2;
  r.dense_ops = r.dense_macs * 2;
  r.activation_bytes = fifo.activation_bytes;
  r.input_buffer_bytes = fifo.input_bytes;
  r.dense_activation_bytes = dense.activation_bytes;
  r.dense_input_bytes = dense.input_bytes;
  r.memory_ratio = ratio(static_cast<double>(r.dense_activation_bytes + r.dense_input_bytes),
                         static_cast<double>(r.activation_bytes + r.input_buffer_bytes));
  r.compute_ratio = ratio(static_cast<double>(r.dense_macs), static_cast<double>(r.scheduled_macs));
  r.weights_per_activation_kb = ratio(static_cast<double>(r.weights), static_cast<double>(r.activation_bytes) / 1024.0);

  r.cycles_16x16 = pe::inference_cycles(cfg, deps, pe::ArrayMode::m16x16);
  r.cycles_4x4 = pe::inference_cycles(cfg, deps, pe::ArrayMode::m4x4);
  r.ops_per_cycle = ratio(static_cast<double>(r.scheduled_ops), static_cast<double>(r.cycles_16x16));
  r.clock_hz = clock_hz;
  r.peak_ops_16x16 = pe::peak_throughput(pe::ArrayMode::m16x16, clock_hz);
  r.peak_ops_4x4 = pe::peak_throughput(pe::ArrayMode::m4x4, clock_hz);
  return r;
}

std::vector<ModeMetrics> mode_tradeoff(const net::Checkpoint& ckpt, const pe::Sequence& input, double clock_hz) {
  const int n = static_cast<int>(input.size());
  const auto deps = sched::dependency_sets(ckpt.config, n);
  const auto schedule = sched::greedy_schedule(deps, ckpt.config);
  const auto macs = scheduled_macs(ckpt.config, deps);

  std::vector<ModeMetrics> out;
  for (auto mode : {pe::ArrayMode::m4x4, pe::ArrayMode::m16x16}) {
    ModeMetrics m;
    m.mode = mode;
    m.powered_banks = std::popcount(pe::weight_bank_mask(mode)) + std::popcount(pe::bias_bank_mask(mode));
    m.peak_ops_per_s = pe::peak_throughput(mode, clock_hz);
    try {
      pe::Engine engine(ckpt, mode);
      const auto res = engine.run(input, schedule);
      m.fits = true;
      m.cycles = res.cycles;
      m.active_bank_cycles = res.active_bank_cycles;
      m.gated_bank_reads = res.gated_bank_reads;
      m.output = res.output;
      if (res.cycles > 0 && clock_hz > 0)
        m.achieved_ops_per_s = static_cast<double>(macs * 2) * clock_hz / static_cast<double>(res.cycles);
    } catch (const pe::CapacityError& e) {
      m.capacity_error = e.what();
      m.cycles = pe::inference_cycles(ckpt.config, deps, mode);
    }
    out.push_back(std::move(m));
  }
  std::uint64_t window = 0;
  for (const auto& m : out) window = std::max(window, m.cycles);
  for (auto& m : out) m.active_bank_window_cycles = static_cast<std::uint64_t>(m.powered_banks) * window;
  return out;
}

std::vector<std::pair<std::string, std::string>> fields(const MetricsReport& r) {
  return {
      {"sequence_length", std::to_string(r.sequence_length)},
      {"weights", std::to_string(r.weights)},
      {"weight_bytes", std::to_string(r.weight_bytes)},
      {"receptive_field", std::to_string(r.receptive_field)},
      {"scheduled_events", std::to_string(r.scheduled_events)},
      {"dense_events", std::to_string(r.dense_events)},
      {"scheduled_macs", std::to_string(r.scheduled_macs)},
      {"dense_macs", std::to_string(r.dense_macs)},
      {"scheduled_ops", std::to_string(r.scheduled_ops)},
      {"dense_ops", std::to_string(r.dense_ops)},
      {"activation_bytes", std::to_string(r.activation_bytes)},
      {"dense_activation_bytes", std::to_string(r.dense_activation_bytes)},
      {"input_buffer_bytes", std::to_string(r.input_buffer_bytes)},
      {"dense_input_bytes", std::to_string(r.dense_input_bytes)},
      {"memory_ratio", num(r.memory_ratio)},
      {"compute_ratio", num(r.compute_ratio)},
      {"weights_per_activation_kb", num(r.weights_per_activation_kb)},
      {"cycles_16x16", std::to_string(r.cycles_16x16)},
      {"cycles_4x4", std::to_string(r.cycles_4x4)},
      {"ops_per_cycle", num(r.ops_per_cycle)},
      {"clock_hz", num(r.clock_hz)},
      {"peak_ops_16x16", num(r.peak_ops_16x16)},
      {"peak_ops_4x4", num(r.peak_ops_4x4)},
  };
}

std::vector<std::pair<std::string, std::string>> fields(const std::vector<ModeMetrics>& modes) {
  std::vector<std::pair<std::string, std::string>> f;
  for (const auto& m : modes) {
    const std::string p = "mode_" + pe::to_string(m.mode) + ".";
    f.emplace_back(p + "fits", m.fits ? "1" : "0");
    f.emplace_back(p + "cycles", std::to_string(m.cycles));
    f.emplace_back(p + "peak_ops_per_s", num(m.peak_ops_per_s));
    f.emplace_back(p + "achieved_ops_per_s", num(m.achieved_ops_per_s));
    f.emplace_back(p + "powered_banks", std::to_string(m.powered_banks));
    f.emplace_back(p + "active_bank_cycles", std::to_string(m.active_bank_cycles));
    f.emplace_back(p + "active_bank_window_cycles", std::to_string(m.active_bank_window_cycles));
    f.emplace_back(p + "gated_bank_reads", std::to_string(m.gated_bank_reads));
  }
  return f;
}

namespace {

std::string kv(const std::vector<std::pair<std::string, std::string>>& f) {
  std::string s;
  for (const auto& [k, v] : f) s += k + ' ' + v + '\n';
  return s;
}

// Numbers stay numbers in JSON; keys keep their order.
std::string js(const std::vector<std::pair<std::string, std::string>>& f) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : f) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end && *end == '\0' && !v.empty()) {
      if (v.find_first_of(".eE") == std::string::npos) j[k] = std::stoll(v);
      else j[k] = d;
    } else {
      j[k] = v;
    }
  }
  return j.dump(2) + "\n";
}

}  // namespace

std::string to_key_value(const MetricsReport& r) { return kv(fields(r)); }
std::string to_json(const MetricsReport& r) { return js(fields(r)); }
std::string to_key_value(const std::vector<ModeMetrics>& m) { return kv(fields(m)); }
std::string to_json(const std::vector<ModeMetrics>& m) { return js(fields(m)); }

}  // namespace chameleon::cost
