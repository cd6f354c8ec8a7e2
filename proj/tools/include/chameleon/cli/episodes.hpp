#pragma once

// Episodic support/query sampling for few-shot runs, plus the synthetic
// Gaussian-cluster embedding generator.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <vector>

#include "chameleon/quant.hpp"

namespace chameleon::cli {

using Embedding = std::vector<quant::QAct>;

struct EpisodeSpec {
  int ways = 5;
  int shots = 1;
  int queries_per_way = 1;
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument outside 1..256 ways, 1..128 shots.
void check(const EpisodeSpec& spec);

struct ClusterOptions {
  int dim = 48;
  /// Per-component standard deviation of shots and queries around a center.
  double noise = 1.0;
  /// Minimum L2 distance between class centers.
  double margin = 8.0;
  /// Make every per-class shot sum an exact power of two (or zero).
  bool power_of_two_sums = false;
};

struct Episode {
  /// support[way][shot] and the way's label.
  std::vector<std::vector<Embedding>> support;
  std::vector<int> support_labels;
  std::vector<Embedding> queries;
  /// Index into support for each query.
  std::vector<int> query_way;
};

/// Small deterministic helpers on top of mt19937_64; results do not depend
/// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  std::uint64_t next() { return g_(); }
  /// Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : g_() % n; }
  /// Uniform in [0, 1).
  double unit() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  double normal();

 private:
  std::mt19937_64 g_;
};

Episode synthetic_episode(const EpisodeSpec& spec, const ClusterOptions& opt);

/// Labeled embeddings, grouped by label in ascending order.
using EmbeddingPool = std::map<int, std::vector<Embedding>>;

/// One embedding per line: "<label> v1 v2 ... vV", values in [0,15].
EmbeddingPool read_embedding_file(const std::filesystem::path& path);

/// Draws `ways` labels and, for each, shots + queries distinct items.
/// Throws std::invalid_argument when the pool is too small.
Episode sample_episode(const EpisodeSpec& spec, const EmbeddingPool& pool);

}  // namespace chameleon::cli
