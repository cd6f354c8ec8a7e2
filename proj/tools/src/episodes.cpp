#include "chameleon/cli/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "chameleon/proto_learn.hpp"

namespace chameleon::cli {

using quant::QAct;

void check(const EpisodeSpec& s) {
  if (s.ways < 1 || s.ways > proto::kMaxWays)
    throw std::invalid_argument("ways must be in [1," + std::to_string(proto::kMaxWays) + "]");
  if (s.shots < 1 || s.shots > proto::kMaxShots)
    throw std::invalid_argument("shots must be in [1," + std::to_string(proto::kMaxShots) + "]");
  if (s.queries_per_way < 0) throw std::invalid_argument("queries per way must be non-negative");
}

double Rng::normal() {
  // Box-Muller; 1 - unit() keeps the log argument positive.
  const double u1 = 1.0 - unit();
  const double u2 = unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

namespace {

int clamp_act(double v) { return std::clamp(static_cast<int>(std::lround(v)), 0, quant::kActMax); }

Embedding noisy(const std::vector<double>& center, double noise, Rng& rng) {
  Embedding e;
  e.reserve(center.size());
  for (double c : center) e.emplace_back(clamp_act(c + noise * rng.normal()));
  return e;
}

std::vector<std::vector<double>> draw_centers(int ways, const ClusterOptions& opt, Rng& rng) {
  std::vector<std::vector<double>> centers;
  const double m2 = opt.margin * opt.margin;
  for (int w = 0; w < ways; ++w) {
    std::vector<double> c(static_cast<std::size_t>(opt.dim));
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (auto& x : c) x = static_cast<double>(rng.below(quant::kActMax + 1));
      bool far = true;
      for (const auto& o : centers) {
        double d = 0;
        for (std::size_t i = 0; i < c.size(); ++i) d += (c[i] - o[i]) * (c[i] - o[i]);
        far = far && d >= m2;
      }
      if (far) break;
    }
    centers.push_back(c);
  }
  return centers;
}

// Nearest power of two to v in the log domain, capped at `cap`.
int snap_pow2(double v, int cap) {
  if (v < 0.5) return 0;
  int e = static_cast<int>(std::lround(std::log2(v)));
  while (e > 0 && (1 << e) > cap) --e;
  return 1 << e;
}

// Splits `total` into k shots in [0,15] at random.
std::vector<int> split(int total, int k, Rng& rng) {
  std::vector<int> parts(static_cast<std::size_t>(k));
  int rem = total;
  for (int l = 0; l < k; ++l) {
    const int left = k - l - 1;
    const int lo = std::max(0, rem - quant::kActMax * left);
    const int hi = std::min(quant::kActMax, rem);
    const int v = l == k - 1 ? rem : lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    parts[static_cast<std::size_t>(l)] = v;
    rem -= v;
  }
  return parts;
}

}  // namespace

Episode synthetic_episode(const EpisodeSpec& spec, const ClusterOptions& opt) {
  check(spec);
  if (opt.dim < 1) throw std::invalid_argument("embedding dimension must be positive");
  Rng rng(spec.seed);
  auto centers = draw_centers(spec.ways, opt, rng);
  Episode ep;
  const int k = spec.shots;
  for (int w = 0; w < spec.ways; ++w) {
    auto& center = centers[static_cast<std::size_t>(w)];
    std::vector<Embedding> shots(static_cast<std::size_t>(k));
    if (opt.power_of_two_sums) {
      for (auto& s : shots) s.resize(static_cast<std::size_t>(opt.dim));
      for (int i = 0; i < opt.dim; ++i) {
        const int total = snap_pow2(center[static_cast<std::size_t>(i)] * k, quant::kActMax * k);
        const auto parts = split(total, k, rng);
        for (int l = 0; l < k; ++l)
          shots[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] = QAct(parts[static_cast<std::size_t>(l)]);
        // Queries scatter around the exact prototype.
        center[static_cast<std::size_t>(i)] = static_cast<double>(total) / k;
      }
    } else {
      for (auto& s : shots) s = noisy(center, opt.noise, rng);
    }
    ep.support.push_back(std::move(shots));
    ep.support_labels.push_back(w);
  }
  for (int w = 0; w < spec.ways; ++w)
    for (int q = 0; q < spec.queries_per_way; ++q) {
      ep.queries.push_back(noisy(centers[static_cast<std::size_t>(w)], opt.noise, rng));
      ep.query_way.push_back(w);
    }
  return ep;
}

EmbeddingPool read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  EmbeddingPool pool;
  std::string line;
  int lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    int label = 0;
    if (!(ls >> label)) continue;
    Embedding e;
    for (int v; ls >> v;) {
      if (v < 0 || v > quant::kActMax)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": value out of [0,15]");
      e.emplace_back(v);
    }
    if (!ls.eof()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": non-integer value");
    if (e.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": empty embedding");
    if (dim == 0) dim = e.size();
    if (e.size() != dim)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                               " components");
    pool[label].push_back(std::move(e));
  }
  if (pool.empty()) throw std::runtime_error(path.string() + ": no embeddings");
  return pool;
}

Episode sample_episode(const EpisodeSpec& spec, const EmbeddingPool& pool) {
  check(spec);
  const auto need = static_cast<std::size_t>(spec.shots + spec.queries_per_way);
  std::vector<int> labels;
  for (const auto& [label, items] : pool)
    if (items.size() >= need) labels.push_back(label);
  if (labels.size() < static_cast<std::size_t>(spec.ways))
    throw std::invalid_argument("embedding pool has " + std::to_string(labels.size()) + " labels with " +
                                std::to_string(need) + " items, episode needs " + std::to_string(spec.ways));
  Rng rng(spec.seed);
  // Partial Fisher-Yates on labels, then on each label's items.
  for (std::size_t i = 0; i < static_cast<std::size_t>(spec.ways); ++i)
    std::swap(labels[i], labels[i + rng.below(labels.size() - i)]);
  Episode ep;
  for (int w = 0; w < spec.ways; ++w) {
    const int label = labels[static_cast<std::size_t>(w)];
    std::vector<std::size_t> idx(pool.at(label).size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < need; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    std::vector<Embedding> shots;
    for (int s = 0; s < spec.shots; ++s) shots.push_back(pool.at(label)[idx[static_cast<std::size_t>(s)]]);
    ep.support.push_back(std::move(shots));
    ep.support_labels.push_back(label);
    for (int q = 0; q < spec.queries_per_way; ++q) {
      ep.queries.push_back(pool.at(label)[idx[static_cast<std::size_t>(spec.shots + q)]]);
      ep.query_way.push_back(w);
    }
  }
  return ep;
}

}  // namespace chameleon::cli
