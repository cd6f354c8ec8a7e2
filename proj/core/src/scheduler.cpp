#include "chameleon/scheduler.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace chameleon::sched {

std::size_t DependencySets::total() const {
  std::size_t n = 0;
  for (const auto& s : sets) n += s.size();
  return n;
}

bool DependencySets::contains(int layer, int t) const {
  if (layer < 0 || layer >= static_cast<int>(sets.size())) return false;
  const auto& s = sets[static_cast<std::size_t>(layer)];
  return std::binary_search(s.begin(), s.end(), t);
}

std::size_t Schedule::conv_events() const {
  return static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [](const Event& e) { return e.node.layer > 0; }));
}

namespace {

std::vector<int> layer_channels(const net::NetworkConfig& config) {
  std::vector<int> ch{config.input_channels};
  for (const auto& lv : net::conv_layers(config)) ch.push_back(lv.conv.out_channels);
  return ch;
}

}  // namespace

DependencySets dependency_sets(const net::NetworkConfig& config, int n) {
  const auto layers = net::conv_layers(config);
  const auto L = layers.size();
  DependencySets deps;
  deps.sequence_length = n;
  deps.sets.resize(L + 1);
  if (n <= 0) return deps;

  std::vector<std::vector<char>> mark(L + 1, std::vector<char>(static_cast<std::size_t>(n), 0));
  mark[L][static_cast<std::size_t>(n - 1)] = 1;
  for (std::size_t l = L; l >= 1; --l) {
    const auto& lv = layers[l - 1];
    for (int t = 0; t < n; ++t) {
      if (!mark[l][static_cast<std::size_t>(t)]) continue;
      for (int j = 0; j < lv.conv.kernel_size; ++j) {
        const int src = t - j * lv.conv.dilation;
        if (src < 0) break;
        mark[l - 1][static_cast<std::size_t>(src)] = 1;
      }
      if (lv.residual_source >= 0) mark[static_cast<std::size_t>(lv.residual_source)][static_cast<std::size_t>(t)] = 1;
    }
  }
  for (std::size_t l = 0; l <= L; ++l)
    for (int t = 0; t < n; ++t)
      if (mark[l][static_cast<std::size_t>(t)]) deps.sets[l].push_back(t);
  return deps;
}

DependencySets dense_sets(const net::NetworkConfig& config, int n) {
  DependencySets deps;
  deps.sequence_length = n;
  deps.sets.resize(static_cast<std::size_t>(config.num_conv_layers()) + 1);
  for (auto& s : deps.sets)
    for (int t = 0; t < n; ++t) s.push_back(t);
  return deps;
}

int cone_depth(const DependencySets& deps) {
  if (deps.sets.empty() || deps.sets[0].empty()) return 0;
  return deps.sets[0].back() - deps.sets[0].front();
}

Schedule greedy_schedule(const DependencySets& deps, const net::NetworkConfig& config) {
  const auto layers = net::conv_layers(config);
  const auto L = layers.size();
  if (deps.sets.size() != L + 1)
    throw std::invalid_argument("dependency sets do not match the network depth");
  const int n = deps.sequence_length;

  Schedule sched;
  sched.channels = layer_channels(config);
  sched.slots.assign(L + 1, 0);

  // producer[l][t] = index of the event that wrote (l, t), -1 if not yet.
  std::vector<std::vector<int>> producer(L + 1, std::vector<int>(static_cast<std::size_t>(std::max(n, 0)), -1));
  std::vector<std::size_t> next(L + 1, 0);

  auto done = [&](int l, int t) { return producer[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] >= 0; };

  auto ready = [&](std::size_t l) {
    if (next[l] >= deps.sets[l].size()) return false;
    const int t = deps.sets[l][next[l]];
    const auto& lv = layers[l - 1];
    for (int j = 0; j < lv.conv.kernel_size; ++j) {
      const int src = t - j * lv.conv.dilation;
      if (src < 0) break;
      if (!done(static_cast<int>(l) - 1, src)) return false;
    }
    return lv.residual_source < 0 || done(lv.residual_source, t);
  };

  auto emit = [&](std::size_t l, int t) {
    Event e;
    e.node = {static_cast<int>(l), t};
    e.write = {static_cast<int>(l), -1, t};
    if (l > 0) {
      const auto& lv = layers[l - 1];
      for (int j = 0; j < lv.conv.kernel_size; ++j) {
        const int src = t - j * lv.conv.dilation;
        e.reads.push_back({static_cast<int>(l) - 1, -1, src});
      }
      if (lv.residual_source >= 0) e.residual_read = SlotRef{lv.residual_source, -1, t};
    }
    producer[l][static_cast<std::size_t>(t)] = static_cast<int>(sched.events.size());
    sched.events.push_back(std::move(e));
    ++next[l];
  };

  for (int t0 : deps.sets[0]) {
    emit(0, t0);
    // Cascade: keep firing the deepest ready layer until nothing is ready.
    for (;;) {
      bool fired = false;
      for (std::size_t l = L; l >= 1; --l) {
        if (ready(l)) {
          emit(l, deps.sets[l][next[l]]);
          fired = true;
          break;
        }
      }
      if (!fired) break;
    }
  }
  for (std::size_t l = 1; l <= L; ++l)
    if (next[l] != deps.sets[l].size())
      throw std::logic_error("dependency sets are not closed under the network's taps");

  // Last event that reads each value; the final output stays live forever.
  constexpr int kForever = std::numeric_limits<int>::max();
  const auto ne = sched.events.size();
  std::vector<int> last_use(ne, -1);
  for (std::size_t i = 0; i < ne; ++i) {
    auto touch = [&](const SlotRef& r) {
      if (r.timestep < 0) return;
      const int p = producer[static_cast<std::size_t>(r.layer)][static_cast<std::size_t>(r.timestep)];
      last_use[static_cast<std::size_t>(p)] = std::max(last_use[static_cast<std::size_t>(p)], static_cast<int>(i));
    };
    for (const auto& r : sched.events[i].reads) touch(r);
    if (sched.events[i].residual_read) touch(*sched.events[i].residual_read);
  }
  if (L >= 1 && n > 0) last_use[static_cast<std::size_t>(producer[L][static_cast<std::size_t>(n - 1)])] = kForever;

  // Slot allocation: reuse the dead slot holding the oldest value, else grow.
  struct Occupant {
    int writer;
    int last_use;
  };
  std::vector<std::vector<Occupant>> occupants(L + 1);
  std::vector<std::vector<int>> slot_of(L + 1, std::vector<int>(static_cast<std::size_t>(std::max(n, 0)), -1));
  for (std::size_t i = 0; i < ne; ++i) {
    auto& e = sched.events[i];
    auto lookup = [&](SlotRef& r) {
      if (r.timestep >= 0) r.slot = slot_of[static_cast<std::size_t>(r.layer)][static_cast<std::size_t>(r.timestep)];
    };
    for (auto& r : e.reads) lookup(r);
    if (e.residual_read) lookup(*e.residual_read);

    const auto l = static_cast<std::size_t>(e.node.layer);
    auto& occ = occupants[l];
    int best = -1;
    for (std::size_t s = 0; s < occ.size(); ++s) {
      if (occ[s].last_use >= static_cast<int>(i)) continue;
      if (best < 0 || occ[s].writer < occ[static_cast<std::size_t>(best)].writer) best = static_cast<int>(s);
    }
    if (best < 0) {
      best = static_cast<int>(occ.size());
      occ.push_back({});
    }
    occ[static_cast<std::size_t>(best)] = {static_cast<int>(i), last_use[i]};
    e.write.slot = best;
    slot_of[l][static_cast<std::size_t>(e.node.timestep)] = best;
  }
  for (std::size_t l = 0; l <= L; ++l) sched.slots[l] = static_cast<int>(occupants[l].size());
  return sched;
}

CapacityExceeded::CapacityExceeded(int layer, std::size_t event, int capacity)
    : std::runtime_error("activation FIFO of layer " + std::to_string(layer) +
                         " exceeds its capacity of " + std::to_string(capacity) +
                         " slots at event " + std::to_string(event)),
      layer_(layer),
      event_(event) {}

std::int64_t slot_bytes(std::int64_t slots, int channels) {
  return (slots * channels * 4 + 7) / 8;
}

std::int64_t input_buffer_bytes(std::int64_t window, int channels) {
  if (window <= 0 || channels <= 0) return 0;
  return slot_bytes(window, channels);
}

FifoReport simulate_fifo(const Schedule& schedule, const net::NetworkConfig& config,
                         const std::optional<std::vector<int>>& capacities) {
  const auto nl = schedule.slots.size();
  FifoReport rep;
  rep.peak_live.assign(nl, 0);

  // Remaining future reads per (layer, timestep), derived from the schedule
  // itself so the replay does not trust the allocator's lifetimes.
  const int n = [&] {
    int m = 0;
    for (const auto& e : schedule.events) m = std::max(m, e.node.timestep + 1);
    return m;
  }();
  std::vector<std::vector<int>> pending(nl, std::vector<int>(static_cast<std::size_t>(n), 0));
  for (const auto& e : schedule.events) {
    for (const auto& r : e.reads)
      if (!r.padding()) ++pending[static_cast<std::size_t>(r.layer)][static_cast<std::size_t>(r.timestep)];
    if (e.residual_read) ++pending[static_cast<std::size_t>(e.residual_read->layer)][static_cast<std::size_t>(e.residual_read->timestep)];
  }
  // The final output is read by the head after the last event.
  const auto final_layer = nl - 1;
  std::vector<std::vector<int>> held(nl);  // slot -> timestep, -1 empty
  std::vector<int> live(nl, 0);

  auto is_live = [&](std::size_t l, int t) {
    return t >= 0 && (pending[l][static_cast<std::size_t>(t)] > 0 || (l == final_layer && l > 0 && t == n - 1));
  };

  for (std::size_t i = 0; i < schedule.events.size(); ++i) {
    const auto& e = schedule.events[i];
    auto consume = [&](const SlotRef& r) {
      const auto l = static_cast<std::size_t>(r.layer);
      if (r.slot < 0 || static_cast<std::size_t>(r.slot) >= held[l].size() ||
          held[l][static_cast<std::size_t>(r.slot)] != r.timestep) {
        ++rep.stale_reads;
        return;
      }
      auto& p = pending[l][static_cast<std::size_t>(r.timestep)];
      --p;
      if (!is_live(l, r.timestep)) --live[l];
    };
    int tap_layer = -1;
    for (const auto& r : e.reads) {
      if (r.padding()) continue;
      if (tap_layer >= 0 && r.layer != tap_layer) ++rep.port_conflicts;
      tap_layer = r.layer;
      consume(r);
    }
    if (e.residual_read) {
      if (e.residual_read->layer == tap_layer || e.residual_read->layer == e.write.layer) ++rep.port_conflicts;
      consume(*e.residual_read);
    }

    const auto l = static_cast<std::size_t>(e.write.layer);
    const int s = e.write.slot;
    if (s < 0) {
      ++rep.stale_reads;
      continue;
    }
    if (capacities && s >= (*capacities)[l]) throw CapacityExceeded(static_cast<int>(l), i, (*capacities)[l]);
    if (static_cast<std::size_t>(s) >= held[l].size()) held[l].resize(static_cast<std::size_t>(s) + 1, -1);
    const int evicted = held[l][static_cast<std::size_t>(s)];
    if (evicted >= 0 && is_live(l, evicted)) {
      ++rep.live_overwrites;
      --live[l];
    }
    rep.overwrites.push_back({i, static_cast<int>(l), s, evicted});
    held[l][static_cast<std::size_t>(s)] = e.write.timestep;
    if (is_live(l, e.write.timestep)) ++live[l];
    rep.peak_live[l] = std::max(rep.peak_live[l], live[l]);
  }

  for (std::size_t l = 1; l < nl; ++l)
    rep.activation_bytes += slot_bytes(static_cast<std::int64_t>(held[l].size()), schedule.channels[l]);
  for (int w : config.head) rep.activation_bytes += slot_bytes(1, w);
  rep.input_bytes = nl > 0 ? input_buffer_bytes(static_cast<std::int64_t>(held[0].size()), schedule.channels[0]) : 0;
  return rep;
}

std::string trace_text(const Schedule& schedule) {
  std::ostringstream os;
  auto ref = [&](const SlotRef& r) {
    if (r.padding()) {
      os << "pad";
      return;
    }
    os << r.layer << ':' << r.slot << '@' << r.timestep;
  };
  for (std::size_t i = 0; i < schedule.events.size(); ++i) {
    const auto& e = schedule.events[i];
    os << i << " L" << e.node.layer << " t" << e.node.timestep << " reads";
    if (e.reads.empty()) os << " -";
    for (const auto& r : e.reads) {
      os << ' ';
      ref(r);
    }
    os << " res ";
    if (e.residual_read) ref(*e.residual_read);
    else os << '-';
    os << " write " << e.write.layer << ':' << e.write.slot << '\n';
  }
  return os.str();
}

}  // namespace chameleon::sched
