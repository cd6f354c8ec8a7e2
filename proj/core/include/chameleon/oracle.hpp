#pragma once

// Brute-force references. Nothing here uses the scheduler or the PE array;
// weights are decoded to integers and multiplied directly, and every
// product is reported to the audit as a multiply.

#include <cstdint>
#include <functional>
#include <vector>

#include "chameleon/netmodel.hpp"

namespace chameleon::oracle {

using Sequence = std::vector<std::vector<quant::QAct>>;

struct DenseOutput {
  std::vector<quant::QAct> output;
  std::vector<quant::Accum> logits;
  int predicted = 0;
};

/// Called after every node (layer, t) is computed, layer 0 being the input.
/// The hook may rewrite the node's 4-bit values before they are consumed.
using NodeHook = std::function<void(int layer, int t, std::vector<int>& values)>;

/// Every timestep of every layer in exact integer arithmetic, then the
/// head on the final timestep. Sums are exact and saturate to the 18-bit
/// range once, before the residual/bias/requantize stage.
DenseOutput dense_forward(const net::Checkpoint& ckpt, const Sequence& input, const NodeHook& hook = {});

/// Same network in doubles: decoded weights, residual scaled by
/// 2^input_shift, divided by 2^output_shift, ReLU, no rounding and no
/// 4-bit mapping.
std::vector<double> dense_forward_real(const net::Checkpoint& ckpt,
                                       const std::vector<std::vector<double>>& input);

/// support[class][shot][component]. Returns argmin_j |P_j - x|^2 with
/// P_j = mean of the class's shots; ties go to the lowest class index.
int l2_prototype_classify(const std::vector<std::vector<std::vector<double>>>& support,
                          const std::vector<double>& query, std::vector<double>* distances = nullptr);

struct DenseCost {
  /// Activations held under full-sequence buffering (layers 1..L + head).
  std::int64_t activations = 0;
  std::int64_t activation_bytes = 0;
  /// The whole input sequence, buffered.
  std::int64_t input_bytes = 0;
  std::int64_t macs = 0;
  std::int64_t nodes = 0;
};

DenseCost dense_cost(const net::NetworkConfig& config, int n);

}  // namespace chameleon::oracle
