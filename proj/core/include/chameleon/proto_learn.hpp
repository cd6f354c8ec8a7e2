#pragma once

// Gradient-free prototype learning. A class is stored as one output neuron
// of an FC layer: weights W_j = log2-quantized shot sum s^j, bias
// b_j = sum_i W_ji^2 / 2k computed with exponent doubling and a right
// shift. Classification takes argmax of W_j . x - b_j, which for exact
// weights is argmin of |s^j/k - x|^2.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chameleon/pe_array.hpp"
#include "chameleon/quant.hpp"

namespace chameleon::proto {

inline constexpr int kMaxShots = 128;
inline constexpr int kMaxWays = 256;

enum class BiasMode : std::uint8_t { exact = 0, paper_literal = 1 };

std::string to_string(BiasMode m);
/// Accepts "exact" and "paper-literal".
BiasMode bias_mode_from_string(const std::string& s);

/// Right shift realizing the 1/2k factor.
int bias_shift(int k, BiasMode mode);

struct Prototype {
  int class_id = 0;
  int k = 0;
  std::vector<quant::Accum> s;
};

struct EquivalentFcEntry {
  int class_id = 0;
  std::vector<quant::LogWeight> weights;
  quant::QBias bias;
  friend bool operator==(const EquivalentFcEntry&, const EquivalentFcEntry&) = default;
};

EquivalentFcEntry extract_fc_params(const Prototype& proto, BiasMode mode, quant::QuantStats* stats = nullptr);

/// Component-wise saturating add of one shot into the pending sum.
void accumulate_shot(Prototype& proto, std::span<const quant::QAct> embedding);

/// ceil((4V + 14) / 8). Throws std::invalid_argument for V < 1.
int continual_footprint_bytes(int embedding_dim);

/// Weight/bias storage left for learned classes, counted as packed 4-bit
/// weights and 14-bit biases. Defaults to the whole 16x16-mode memories.
struct MemoryBudget {
  std::int64_t weights = std::int64_t{pe::kWeightBanks} * pe::kWeightRows * pe::kNibblesPerRow;
  std::int64_t biases = std::int64_t{pe::kBiasBanks} * pe::kBiasRows * pe::kBiasesPerRow;

  std::int64_t bytes() const { return (weights * 4 + biases * 14 + 7) / 8; }
};

/// What remains after deploying an embedder network.
MemoryBudget budget_after(const net::NetworkConfig& embedder);

class CapacityExhausted : public std::runtime_error {
 public:
  CapacityExhausted(int class_index, std::int64_t needed_bytes, std::int64_t free_bytes);
  int class_index() const { return class_index_; }
  std::int64_t needed_bytes() const { return needed_; }
  std::int64_t free_bytes() const { return free_; }

 private:
  int class_index_;
  std::int64_t needed_;
  std::int64_t free_;
};

enum class StepKind : std::uint8_t { accumulate, weight_write, bias_accumulate, bias_write };

/// One controller cycle of the learning flow.
struct ControllerStep {
  StepKind kind;
  int group = 0;  // 16-wide component group
  int shot = -1;  // accumulate steps only
};

struct LearnReport {
  int class_id = 0;
  std::vector<ControllerStep> trace;
  std::uint64_t cycles = 0;
  /// weight_write + bias_accumulate + bias_write steps.
  std::uint64_t extractor_cycles = 0;
  quant::QuantStats stats;
};

struct Classification {
  int class_id = 0;
  /// One score per stored class, in storage order.
  std::vector<std::int64_t> scores;
  std::vector<int> class_ids;
};

struct StoredClass {
  Prototype proto;
  EquivalentFcEntry fc;
};

class Learner {
 public:
  Learner(int embedding_dim, BiasMode mode = BiasMode::exact, MemoryBudget budget = {});

  int embedding_dim() const { return dim_; }
  BiasMode bias_mode() const { return mode_; }
  const MemoryBudget& budget() const { return budget_; }
  std::int64_t free_bytes() const;
  std::size_t num_classes() const { return classes_.size(); }
  const std::vector<StoredClass>& classes() const { return classes_; }

  /// Step-by-step interface: begin, accumulate k shots, commit.
  void begin_class(int class_id, int shots);
  void accumulate_shot(std::span<const quant::QAct> embedding);
  int pending_shots() const { return pending_ ? pending_->k : 0; }
  LearnReport commit_class();

  /// Full three-step flow for one class: embeddings are staged in the
  /// activation buffer, summed through the PE array, then converted and
  /// written. Trace length is (k+2)*ceil(V/16) + 1.
  LearnReport learn_class(int class_id, const std::vector<std::vector<quant::QAct>>& embeddings);

  /// Adds shots to an existing class, growing its k and re-deriving W and b.
  /// Parameters of every other class are untouched.
  LearnReport extend_class(int class_id, const std::vector<std::vector<quant::QAct>>& embeddings);

  /// Scores go through the PE array; ties resolve to the lowest class_id.
  Classification classify(std::span<const quant::QAct> query) const;

  /// ceil((4V + 14) / 8) bytes per additional class.
  int continual_footprint() const { return continual_footprint_bytes(dim_); }

  /// Learned-class table in the line-oriented checkpoint text style.
  std::string export_table() const;
  static Learner import_table(const std::string& text, MemoryBudget budget = {});

  std::uint64_t classify_cycles() const { return classify_cycles_; }

 private:
  struct Pending {
    int class_id = 0;
    int k = 0;
    int expected = 0;
    std::vector<std::vector<quant::QAct>> staged;
  };

  LearnReport run_flow(int class_id, const std::vector<std::vector<quant::QAct>>& embeddings,
                       const Prototype* base);
  void check_capacity() const;
  StoredClass* find(int class_id);

  int dim_;
  BiasMode mode_;
  MemoryBudget budget_;
  std::vector<StoredClass> classes_;
  std::optional<Pending> pending_;
  mutable std::uint64_t classify_cycles_ = 0;
};

}  // namespace chameleon::proto
