#pragma once

// Greedy dilation-aware execution over the pruned computation graph.
//
// Graph layer 0 is the input sequence, layers 1..L are the conv layers in
// conv_layers() order. Only the final timestep of layer L feeds the head, so
// everything not reachable backward from (L, n-1) is skipped. Taps that
// reach before t=0 read implicit zero padding and have no node.

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chameleon/netmodel.hpp"

namespace chameleon::sched {

struct NodeId {
  int layer = 0;
  int timestep = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct DependencySets {
  int sequence_length = 0;
  /// sets[l] holds the needed timesteps of layer l, ascending.
  std::vector<std::vector<int>> sets;

  int num_layers() const { return static_cast<int>(sets.size()) - 1; }
  std::size_t total() const;
  bool contains(int layer, int t) const;
};

DependencySets dependency_sets(const net::NetworkConfig& config, int n);
/// Every timestep of every layer, the unpruned baseline.
DependencySets dense_sets(const net::NetworkConfig& config, int n);

/// max(S_0) - min(S_0). Equals receptive_field() - 1 once n covers the field.
int cone_depth(const DependencySets& deps);

struct SlotRef {
  int layer = 0;
  /// -1 marks a zero-padding tap (timestep < 0); nothing is read.
  int slot = -1;
  int timestep = 0;
  bool padding() const { return slot < 0; }
  friend bool operator==(const SlotRef&, const SlotRef&) = default;
};

struct Event {
  NodeId node;
  /// One entry per kernel tap j (input timestep t - j*d); empty for inputs.
  std::vector<SlotRef> reads;
  std::optional<SlotRef> residual_read;
  SlotRef write;
};

struct Schedule {
  std::vector<Event> events;
  /// Slots allocated per layer 0..L.
  std::vector<int> slots;
  /// Channel width per layer 0..L.
  std::vector<int> channels;

  std::size_t conv_events() const;
};

Schedule greedy_schedule(const DependencySets& deps, const net::NetworkConfig& config);

/// Raised by simulate_fifo when a fixed per-layer capacity is exceeded.
class CapacityExceeded : public std::runtime_error {
 public:
  CapacityExceeded(int layer, std::size_t event, int capacity);
  int layer() const { return layer_; }
  std::size_t event() const { return event_; }

 private:
  int layer_;
  std::size_t event_;
};

struct OverwriteRecord {
  std::size_t event = 0;
  int layer = 0;
  int slot = 0;
  /// Timestep of the value that was replaced, -1 for a fresh slot.
  int evicted = -1;
};

struct FifoReport {
  std::vector<int> peak_live;
  /// Activation memory of layers 1..L plus the head outputs, bytes.
  std::int64_t activation_bytes = 0;
  /// Dedicated input memory (layer 0), bytes.
  std::int64_t input_bytes = 0;
  std::vector<OverwriteRecord> overwrites;
  /// Writes that replaced a value some later event still reads.
  std::uint64_t live_overwrites = 0;
  /// Reads that found a different timestep in the slot than expected.
  std::uint64_t stale_reads = 0;
  /// Events whose reads and writes break the one-read/one-write-per-layer
  /// port discipline.
  std::uint64_t port_conflicts = 0;
};

/// Replays the schedule against per-layer slot arrays. `capacities`, when
/// given, caps the slot count of each layer 0..L.
FifoReport simulate_fifo(const Schedule& schedule, const net::NetworkConfig& config,
                         const std::optional<std::vector<int>>& capacities = std::nullopt);

/// ceil(window * channels * 4 / 8).
std::int64_t input_buffer_bytes(std::int64_t window, int channels);

/// Bytes for `slots` timesteps of `channels` 4-bit values.
std::int64_t slot_bytes(std::int64_t slots, int channels);

/// One event per line:
///   <index> L<layer> t<timestep> reads <l:slot@t|pad ...> res <l:slot@t|-> write <l:slot>
std::string trace_text(const Schedule& schedule);

}  // namespace chameleon::sched
