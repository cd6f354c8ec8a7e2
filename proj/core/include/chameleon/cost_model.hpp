#pragma once

// Aggregated cycle / memory / op counts and the ratios against the dense
// full-buffering baseline. Reports print as flat "key value" lines or JSON
// with the same keys.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chameleon/netmodel.hpp"
#include "chameleon/pe_array.hpp"

namespace chameleon::cost {

inline constexpr double kDefaultClockHz = 150e6;

struct MetricsReport {
  int sequence_length = 0;
  std::int64_t weights = 0;
  std::int64_t weight_bytes = 0;
  std::int64_t receptive_field = 0;

  std::int64_t scheduled_events = 0;
  std::int64_t dense_events = 0;
  std::int64_t scheduled_macs = 0;
  std::int64_t dense_macs = 0;
  std::int64_t scheduled_ops = 0;
  std::int64_t dense_ops = 0;

  std::int64_t activation_bytes = 0;
  std::int64_t dense_activation_bytes = 0;
  std::int64_t input_buffer_bytes = 0;
  std::int64_t dense_input_bytes = 0;

  /// (dense activations + dense input) / (pruned activations + input buffer).
  double memory_ratio = 0;
  double compute_ratio = 0;
  /// Weights per kB of pruned activation memory.
  double weights_per_activation_kb = 0;

  std::uint64_t cycles_16x16 = 0;
  std::uint64_t cycles_4x4 = 0;
  double ops_per_cycle = 0;
  double clock_hz = kDefaultClockHz;
  double peak_ops_16x16 = 0;
  double peak_ops_4x4 = 0;
};

/// Pruned greedy schedule vs the dense baseline for one config.
MetricsReport compare_strategies(const net::NetworkConfig& config, int n, double clock_hz = kDefaultClockHz);

struct ModeMetrics {
  pe::ArrayMode mode = pe::ArrayMode::m16x16;
  bool fits = false;
  std::string capacity_error;
  std::uint64_t cycles = 0;
  double peak_ops_per_s = 0;
  /// Scheduled MAC ops divided by run time at the given clock.
  double achieved_ops_per_s = 0;
  int powered_banks = 0;
  /// Powered banks summed over the cycles the array is busy.
  std::uint64_t active_bank_cycles = 0;
  /// Powered banks over a common real-time window, the slowest mode's
  /// run time. This is the equal-work comparison between modes.
  std::uint64_t active_bank_window_cycles = 0;
  std::uint64_t gated_bank_reads = 0;
  std::vector<quant::QAct> output;
};

/// Runs the checkpoint in both modes on `input`. A mode that does not fit
/// reports fits=false and the capacity message.
std::vector<ModeMetrics> mode_tradeoff(const net::Checkpoint& ckpt, const pe::Sequence& input,
                                       double clock_hz = kDefaultClockHz);

/// "key value" lines in a fixed order.
std::string to_key_value(const MetricsReport& r);
std::string to_json(const MetricsReport& r);
std::string to_key_value(const std::vector<ModeMetrics>& modes);
std::string to_json(const std::vector<ModeMetrics>& modes);

/// Ordered key/value pairs behind both encodings.
std::vector<std::pair<std::string, std::string>> fields(const MetricsReport& r);
std::vector<std::pair<std::string, std::string>> fields(const std::vector<ModeMetrics>& modes);

}  // namespace chameleon::cost
