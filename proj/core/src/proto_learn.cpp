#include "chameleon/proto_learn.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

#include "chameleon/checkpoint_io.hpp"

namespace chameleon::proto {

using quant::Accum;
using quant::LogWeight;
using quant::QAct;
using quant::QBias;

std::string to_string(BiasMode m) { return m == BiasMode::exact ? "exact" : "paper-literal"; }

BiasMode bias_mode_from_string(const std::string& s) {
  if (s == "exact") return BiasMode::exact;
  if (s == "paper-literal" || s == "paper_literal") return BiasMode::paper_literal;
  throw std::invalid_argument("unknown bias mode '" + s + "' (expected exact or paper-literal)");
}

int bias_shift(int k, BiasMode mode) {
  if (k < 1) throw std::invalid_argument("shot count must be positive");
  // ceil(log2 k) as a bit-width, no multiply.
  const int c = static_cast<int>(std::bit_width(static_cast<unsigned>(k - 1)));
  return mode == BiasMode::exact ? 1 + c : c << 1;
}

namespace {

constexpr int kGroup = pe::kArrayDim;

int groups_for(int dim) { return (dim + kGroup - 1) / kGroup; }

// Converts one 16-wide group of the sum: writes the codes, returns the
// group's contribution to the squared norm.
std::int64_t convert_group(const std::vector<Accum>& s, int g, std::vector<LogWeight>& w, quant::QuantStats* st) {
  std::int64_t sq = 0;
  const int end = std::min(static_cast<int>(s.size()), (g + 1) * kGroup);
  for (int i = g * kGroup; i < end; ++i) {
    const auto code = quant::quantize_log2_int(s[static_cast<std::size_t>(i)].value(), quant::Rounding::nearest, st);
    w[static_cast<std::size_t>(i)] = code;
    if (code.is_zero()) continue;
    audit::count_shift(2);  // exponent doubling, then 1 << 2e
    audit::count_add();
    sq += std::int64_t{1} << (code.exponent() << 1);
  }
  return sq;
}

QBias finish_bias(std::int64_t sq, int k, BiasMode mode, quant::QuantStats* st) {
  audit::count_shift();
  const std::int64_t b = sq >> bias_shift(k, mode);
  if (b > quant::kBiasMax && st) ++st->saturations;
  return QBias::saturate(b);
}

}  // namespace

EquivalentFcEntry extract_fc_params(const Prototype& proto, BiasMode mode, quant::QuantStats* stats) {
  if (proto.k < 1) throw std::invalid_argument("prototype has no shots");
  EquivalentFcEntry e;
  e.class_id = proto.class_id;
  e.weights.assign(proto.s.size(), LogWeight::zero());
  std::int64_t sq = 0;
  for (int g = 0; g < groups_for(static_cast<int>(proto.s.size())); ++g) sq += convert_group(proto.s, g, e.weights, stats);
  e.bias = finish_bias(sq, proto.k, mode, stats);
  return e;
}

void accumulate_shot(Prototype& proto, std::span<const QAct> embedding) {
  if (proto.s.empty()) proto.s.assign(embedding.size(), Accum{});
  if (embedding.size() != proto.s.size())
    throw std::invalid_argument("embedding has " + std::to_string(embedding.size()) + " components, expected " +
                                std::to_string(proto.s.size()));
  if (proto.k >= kMaxShots) throw std::out_of_range("shot count would exceed " + std::to_string(kMaxShots));
  for (std::size_t i = 0; i < embedding.size(); ++i) proto.s[i] = quant::sat_add(proto.s[i], quant::to_accum(embedding[i]));
  ++proto.k;
}

int continual_footprint_bytes(int dim) {
  if (dim < 1) throw std::invalid_argument("embedding dimension must be positive");
  return (dim * 4 + 14 + 7) / 8;
}

MemoryBudget budget_after(const net::NetworkConfig& embedder) {
  MemoryBudget b;
  b.weights -= net::weight_count(embedder);
  b.biases -= net::bias_count(embedder);
  b.weights = std::max<std::int64_t>(b.weights, 0);
  b.biases = std::max<std::int64_t>(b.biases, 0);
  return b;
}

CapacityExhausted::CapacityExhausted(int idx, std::int64_t needed, std::int64_t free)
    : std::runtime_error("class memory exhausted at class index " + std::to_string(idx) + ": " +
                         std::to_string(needed) + " bytes needed, " + std::to_string(free) + " bytes free"),
      class_index_(idx),
      needed_(needed),
      free_(free) {}

Learner::Learner(int dim, BiasMode mode, MemoryBudget budget) : dim_(dim), mode_(mode), budget_(budget) {
  if (dim < 1) throw std::invalid_argument("embedding dimension must be positive");
}

std::int64_t Learner::free_bytes() const {
  const auto n = static_cast<std::int64_t>(classes_.size());
  const std::int64_t w = budget_.weights - n * dim_;
  const std::int64_t b = budget_.biases - n;
  return (std::max<std::int64_t>(w, 0) * 4 + std::max<std::int64_t>(b, 0) * 14 + 7) / 8;
}

void Learner::check_capacity() const {
  const auto n = static_cast<std::int64_t>(classes_.size());
  if (n >= kMaxWays) throw std::out_of_range("class count would exceed " + std::to_string(kMaxWays));
  if (budget_.weights - n * dim_ < dim_ || budget_.biases - n < 1)
    throw CapacityExhausted(static_cast<int>(n), continual_footprint(), free_bytes());
}

StoredClass* Learner::find(int class_id) {
  for (auto& c : classes_)
    if (c.proto.class_id == class_id) return &c;
  return nullptr;
}

void Learner::begin_class(int class_id, int shots) {
  if (pending_) throw std::logic_error("a class is already being learned");
  if (shots < 1 || shots > kMaxShots) throw std::out_of_range("shot count must be in [1," + std::to_string(kMaxShots) + "]");
  if (find(class_id)) throw std::invalid_argument("class " + std::to_string(class_id) + " already learned");
  check_capacity();
  pending_ = Pending{class_id, 0, shots, {}};
}

void Learner::accumulate_shot(std::span<const QAct> e) {
  if (!pending_) throw std::logic_error("no class is being learned");
  if (static_cast<int>(e.size()) != dim_)
    throw std::invalid_argument("embedding has " + std::to_string(e.size()) + " components, expected " + std::to_string(dim_));
  if (pending_->k >= pending_->expected)
    throw std::out_of_range("shot " + std::to_string(pending_->k + 1) + " exceeds the announced " +
                            std::to_string(pending_->expected));
  // Step 1: the embedding lands in the activation buffer.
  pending_->staged.emplace_back(e.begin(), e.end());
  ++pending_->k;
}

LearnReport Learner::commit_class() {
  if (!pending_) throw std::logic_error("no class is being learned");
  if (pending_->k != pending_->expected)
    throw std::logic_error("only " + std::to_string(pending_->k) + " of " + std::to_string(pending_->expected) +
                           " shots accumulated");
  auto p = std::move(*pending_);
  pending_.reset();
  return run_flow(p.class_id, p.staged, nullptr);
}

LearnReport Learner::learn_class(int class_id, const std::vector<std::vector<QAct>>& embeddings) {
  begin_class(class_id, static_cast<int>(embeddings.size()));
  try {
    for (const auto& e : embeddings) accumulate_shot(e);
  } catch (...) {
    pending_.reset();
    throw;
  }
  return commit_class();
}

LearnReport Learner::extend_class(int class_id, const std::vector<std::vector<QAct>>& embeddings) {
  auto* c = find(class_id);
  if (!c) throw std::invalid_argument("class " + std::to_string(class_id) + " is not learned");
  if (embeddings.empty()) throw std::invalid_argument("no shots given");
  if (c->proto.k + static_cast<int>(embeddings.size()) > kMaxShots)
    throw std::out_of_range("shot count would exceed " + std::to_string(kMaxShots));
  for (const auto& e : embeddings)
    if (static_cast<int>(e.size()) != dim_) throw std::invalid_argument("embedding dimension mismatch");
  const Prototype base = c->proto;
  return run_flow(class_id, embeddings, &base);
}

// Steps 2 and 3. Each 16-wide group is summed in the array through an
// identity tile (one cycle per shot), converted to codes (one cycle) and
// folded into the bias sum (one cycle); the bias shift and write close the
// class.
LearnReport Learner::run_flow(int class_id, const std::vector<std::vector<QAct>>& staged, const Prototype* base) {
  LearnReport rep;
  rep.class_id = class_id;
  const int k_new = static_cast<int>(staged.size());
  Prototype proto;
  proto.class_id = class_id;
  proto.k = (base ? base->k : 0) + k_new;
  proto.s.assign(static_cast<std::size_t>(dim_), Accum{});
  EquivalentFcEntry fc;
  fc.class_id = class_id;
  fc.weights.assign(static_cast<std::size_t>(dim_), LogWeight::zero());

  pe::WeightTile identity;
  identity.fill(LogWeight::zero());
  for (int i = 0; i < kGroup; ++i) identity[static_cast<std::size_t>(i * kGroup + i)] = LogWeight::make(false, 0);

  pe::PeArrayState array(pe::ArrayMode::m16x16);
  std::int64_t sq = 0;
  for (int g = 0; g < groups_for(dim_); ++g) {
    array.clear_accumulators();
    if (base)
      for (int j = 0; j < kGroup && g * kGroup + j < dim_; ++j)
        array.acc[static_cast<std::size_t>(j)] = base->s[static_cast<std::size_t>(g * kGroup + j)].value();
    for (int shot = 0; shot < k_new; ++shot) {
      pe::ActVector a{};
      for (int j = 0; j < kGroup && g * kGroup + j < dim_; ++j)
        a[static_cast<std::size_t>(j)] = staged[static_cast<std::size_t>(shot)][static_cast<std::size_t>(g * kGroup + j)];
      pe::array_cycle(array, a, identity);
      rep.trace.push_back({StepKind::accumulate, g, shot});
    }
    for (int j = 0; j < kGroup && g * kGroup + j < dim_; ++j)
      proto.s[static_cast<std::size_t>(g * kGroup + j)] = array.read(j);
    rep.trace.push_back({StepKind::weight_write, g, -1});
    sq += convert_group(proto.s, g, fc.weights, &rep.stats);
    rep.trace.push_back({StepKind::bias_accumulate, g, -1});
  }
  fc.bias = finish_bias(sq, proto.k, mode_, &rep.stats);
  rep.trace.push_back({StepKind::bias_write, 0, -1});
  rep.cycles = rep.trace.size();
  rep.extractor_cycles = static_cast<std::uint64_t>(std::count_if(
      rep.trace.begin(), rep.trace.end(), [](const ControllerStep& s) { return s.kind != StepKind::accumulate; }));

  if (base) {
    auto* c = find(class_id);
    c->proto = std::move(proto);
    c->fc = std::move(fc);
  } else {
    classes_.push_back({std::move(proto), std::move(fc)});
  }
  return rep;
}

Classification Learner::classify(std::span<const QAct> query) const {
  if (classes_.empty()) throw std::logic_error("no classes learned");
  if (static_cast<int>(query.size()) != dim_)
    throw std::invalid_argument("query has " + std::to_string(query.size()) + " components, expected " + std::to_string(dim_));
  Classification out;
  const int n = static_cast<int>(classes_.size());
  out.scores.assign(static_cast<std::size_t>(n), 0);
  for (const auto& c : classes_) out.class_ids.push_back(c.proto.class_id);

  pe::PeArrayState array(pe::ArrayMode::m16x16);
  for (int g = 0; g < groups_for(n); ++g) {
    array.clear_accumulators();
    for (int a = 0; a < groups_for(dim_); ++a) {
      pe::ActVector x{};
      pe::WeightTile w;
      w.fill(LogWeight::zero());
      for (int i = 0; i < kGroup && a * kGroup + i < dim_; ++i) {
        x[static_cast<std::size_t>(i)] = query[static_cast<std::size_t>(a * kGroup + i)];
        for (int j = 0; j < kGroup && g * kGroup + j < n; ++j)
          w[static_cast<std::size_t>(i * kGroup + j)] =
              classes_[static_cast<std::size_t>(g * kGroup + j)].fc.weights[static_cast<std::size_t>(a * kGroup + i)];
      }
      pe::array_cycle(array, x, w);
    }
    for (int j = 0; j < kGroup && g * kGroup + j < n; ++j) {
      const auto& fc = classes_[static_cast<std::size_t>(g * kGroup + j)].fc;
      const pe::OpeConfig cfg{{}, QBias(-fc.bias.value()), false};
      out.scores[static_cast<std::size_t>(g * kGroup + j)] = pe::ope_preactivation(array.read(j), cfg).value();
    }
  }
  classify_cycles_ += array.cycles;

  std::size_t best = 0;
  for (std::size_t i = 1; i < out.scores.size(); ++i) {
    audit::count_compare();
    if (out.scores[i] > out.scores[best] ||
        (out.scores[i] == out.scores[best] && out.class_ids[i] < out.class_ids[best]))
      best = i;
  }
  out.class_id = out.class_ids[best];
  return out;
}

std::string Learner::export_table() const {
  std::ostringstream os;
  os << "chameleon-classes 1\n";
  os << "embedding_dim " << dim_ << '\n';
  os << "bias_mode " << to_string(mode_) << '\n';
  for (const auto& c : classes_) {
    os << "class " << c.proto.class_id << " k " << c.proto.k << " bias " << c.fc.bias.value() << " weights "
       << net::codes_to_hex(c.fc.weights) << " sum";
    for (auto v : c.proto.s) os << ' ' << v.value();
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

Learner Learner::import_table(const std::string& text, MemoryBudget budget) {
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  int dim = -1;
  BiasMode mode = BiasMode::exact;
  bool header = false;
  bool ended = false;
  std::vector<StoredClass> classes;
  while (std::getline(in, line)) {
    const auto here = offset;
    offset += line.size() + 1;
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw) || kw[0] == '#') continue;
    auto fail = [&](const std::string& m) { throw net::ParseError(m, here); };
    if (!header) {
      int ver = 0;
      if (kw != "chameleon-classes" || !(ls >> ver) || ver != 1) fail("missing 'chameleon-classes 1' header");
      header = true;
    } else if (kw == "embedding_dim") {
      if (!(ls >> dim) || dim < 1) fail("bad embedding_dim");
    } else if (kw == "bias_mode") {
      std::string m;
      ls >> m;
      try {
        mode = bias_mode_from_string(m);
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
    } else if (kw == "class") {
      if (dim < 1) fail("class before embedding_dim");
      StoredClass c;
      std::string t1, t2, t3, hex, t4;
      int bias = 0;
      if (!(ls >> c.proto.class_id >> t1 >> c.proto.k >> t2 >> bias >> t3 >> hex >> t4) || t1 != "k" ||
          t2 != "bias" || t3 != "weights" || t4 != "sum")
        fail("malformed class line");
      if (c.proto.k < 1 || c.proto.k > kMaxShots) fail("shot count out of range");
      if (bias < quant::kBiasMin || bias > quant::kBiasMax) fail("bias outside 14-bit range");
      try {
        c.fc.weights = net::codes_from_hex(hex);
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
      for (long long v; ls >> v;) {
        if (v < quant::kAccumMin || v > quant::kAccumMax) fail("sum outside accumulator range");
        c.proto.s.emplace_back(v);
      }
      if (static_cast<int>(c.fc.weights.size()) != dim || static_cast<int>(c.proto.s.size()) != dim)
        fail("class width does not match embedding_dim");
      c.fc.class_id = c.proto.class_id;
      c.fc.bias = QBias(bias);
      if (extract_fc_params(c.proto, mode) != c.fc) fail("stored parameters do not match the stored sum");
      classes.push_back(std::move(c));
    } else if (kw == "end") {
      ended = true;
      break;
    } else {
      fail("unknown directive '" + kw + "'");
    }
  }
  if (!header) throw net::ParseError("missing 'chameleon-classes 1' header", 0);
  if (!ended) throw net::ParseError("missing 'end' (truncated file?)", offset);
  if (dim < 1) throw net::ParseError("missing embedding_dim", offset);
  Learner l(dim, mode, budget);
  for (auto& c : classes) {
    if (l.find(c.proto.class_id)) throw std::invalid_argument("duplicate class " + std::to_string(c.proto.class_id));
    l.check_capacity();
    l.classes_.push_back(std::move(c));
  }
  return l;
}

}  // namespace chameleon::proto
