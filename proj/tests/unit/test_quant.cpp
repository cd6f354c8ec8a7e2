#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "chameleon/quant.hpp"

using namespace chameleon;
using namespace chameleon::quant;

namespace {

// Nearest representable value in the log domain, by scanning every code.
int nearest_log_code_value(double v) {
  if (v == 0) return 0;
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (unsigned c = 0; c < 16; ++c) {
    const int d = decode_log_weight(LogWeight::from_code(c));
    if (d == 0 || (d < 0) != (v < 0)) continue;
    const double dist = std::fabs(std::log2(std::fabs(v)) - std::log2(std::fabs(static_cast<double>(d))));
    if (dist < best_d) {
      best_d = dist;
      best = d;
    }
  }
  return best;
}

}  // namespace

TEST(LogWeight, DecodeExamples) {
  EXPECT_EQ(decode_log_weight(LogWeight::zero()), 0);
  EXPECT_EQ(decode_log_weight(LogWeight::make(false, 0)), 1);
  EXPECT_EQ(decode_log_weight(LogWeight::make(true, 7)), -128);
}

TEST(LogWeight, CodeSpaceCoversExpectedSet) {
  std::vector<int> seen;
  for (unsigned c = 0; c < 16; ++c) seen.push_back(decode_log_weight(LogWeight::from_code(c)));
  std::sort(seen.begin(), seen.end());
  const std::vector<int> want{-128, -64, -32, -16, -8, -4, -2, 0, 1, 2, 4, 8, 16, 32, 64, 128};
  EXPECT_EQ(seen, want);
  EXPECT_THROW(LogWeight::from_code(16), std::out_of_range);
  EXPECT_THROW(LogWeight::make(true, 0), std::invalid_argument);
  EXPECT_THROW(LogWeight::make(false, 8), std::invalid_argument);
}

TEST(LogWeight, QuantizeExamples) {
  EXPECT_TRUE(quantize_log2(0.0).is_zero());
  const auto five = quantize_log2(5.0);
  EXPECT_FALSE(five.negative());
  EXPECT_EQ(five.exponent(), 2);
  EXPECT_EQ(decode_log_weight(five), 4);
  const auto m6 = quantize_log2(-6.0);
  EXPECT_TRUE(m6.negative());
  EXPECT_EQ(m6.exponent(), 3);
  EXPECT_EQ(decode_log_weight(m6), -8);
}

TEST(LogWeight, QuantizeMatchesLogDomainScan) {
  for (int v = -300; v <= 300; ++v) {
    SCOPED_TRACE(v);
    const int want = nearest_log_code_value(v);
    EXPECT_EQ(decode_log_weight(quantize_log2(v)), want);
    EXPECT_EQ(decode_log_weight(quantize_log2_int(v)), want);
  }
  for (double v : {0.3, 0.7, 1.41, 1.42, 2.9, 11.2, 181.0, 1e6, -0.01, -1.0, -1.5, -3.0})
    EXPECT_EQ(decode_log_weight(quantize_log2(v)), nearest_log_code_value(v)) << v;
}

TEST(LogWeight, IntegerAndRealQuantizersAgree) {
  for (std::int64_t v = -200000; v <= 200000; v += 7) {
    for (auto mode : {Rounding::nearest, Rounding::floor, Rounding::ceil})
      ASSERT_EQ(quantize_log2_int(v, mode), quantize_log2(static_cast<double>(v), mode)) << v;
  }
}

TEST(LogWeight, SaturationIsCounted) {
  QuantStats st;
  EXPECT_EQ(decode_log_weight(quantize_log2_int(100000, Rounding::nearest, &st)), 128);
  EXPECT_EQ(st.saturations, 1u);
  EXPECT_EQ(decode_log_weight(quantize_log2_int(-1, Rounding::nearest, &st)), -2);
  EXPECT_EQ(st.underflows, 1u);
}

TEST(ShiftMac, Examples) {
  for (unsigned c = 0; c < 16; ++c) EXPECT_EQ(shift_mac(QAct(0), LogWeight::from_code(c)).value(), 0);
  EXPECT_EQ(shift_mac(QAct(15), LogWeight::make(true, 7)).value(), -1920);
  EXPECT_EQ(shift_mac(QAct(3), LogWeight::make(false, 2)).value(), 12);
}

TEST(ShiftMac, ExhaustiveAgainstMultiply) {
  audit::Scope scope;
  for (int a = 0; a <= 15; ++a)
    for (unsigned c = 0; c < 16; ++c) {
      const auto w = LogWeight::from_code(c);
      EXPECT_EQ(shift_mac(QAct(a), w).value(), a * decode_log_weight(w)) << a << " " << c;
    }
  EXPECT_EQ(scope.delta().multiplies, 0u);
}

TEST(Accum, SaturatingArithmetic) {
  EXPECT_EQ(sat_add(Accum(kAccumMax), Accum(1)).value(), kAccumMax);
  EXPECT_EQ(sat_sub(Accum(kAccumMin), Accum(1)).value(), kAccumMin);
  EXPECT_EQ(sat_shift(Accum(3), 2).value(), 12);
  EXPECT_EQ(sat_shift(Accum(-7), -1).value(), -4);  // arithmetic shift floors
  EXPECT_EQ(sat_shift(Accum(1000), 10).value(), kAccumMax);
  EXPECT_EQ(sat_shift(Accum(-1000), 10).value(), kAccumMin);
  EXPECT_THROW(Accum(kAccumMax + 1), std::out_of_range);
  EXPECT_THROW(QAct(16), std::out_of_range);
  EXPECT_THROW(QBias(8192), std::out_of_range);
  EXPECT_EQ(QBias::saturate(-100000).value(), kBiasMin);
}

TEST(Requantize, Examples) {
  for (auto ov : {OverflowMode::wrap, OverflowMode::clamp})
    for (int shift = 0; shift < 6; ++shift) EXPECT_EQ(requantize(Accum(-100), {0, shift, ov}).value(), 0);
  EXPECT_EQ(requantize(Accum(48), {0, 2, OverflowMode::clamp}).value(), 12);
  EXPECT_EQ(requantize(Accum(80), {0, 2, OverflowMode::wrap}).value(), 4);
  EXPECT_EQ(requantize(Accum(80), {0, 2, OverflowMode::clamp}).value(), 15);
}

TEST(Requantize, MatchesFloorDivisionReference) {
  for (int acc = -600; acc <= 600; ++acc)
    for (int shift = 0; shift <= 5; ++shift) {
      const int q = static_cast<int>(std::floor(acc / std::pow(2.0, shift)));
      const int relu = std::max(q, 0);
      EXPECT_EQ(requantize(Accum(acc), {0, shift, OverflowMode::wrap}).value(), relu % 16);
      EXPECT_EQ(requantize(Accum(acc), {0, shift, OverflowMode::clamp}).value(), std::min(relu, 15));
    }
}

TEST(RescaleSpec, Check) {
  EXPECT_TRUE(check(RescaleSpec{}).empty());
  EXPECT_FALSE(check(RescaleSpec{0, 0, OverflowMode::wrap, 3}).empty());
  EXPECT_FALSE(check(RescaleSpec{0, -1}).empty());
  EXPECT_EQ(overflow_mode_from_string("clamp"), OverflowMode::clamp);
  EXPECT_THROW(overflow_mode_from_string("saturate"), std::invalid_argument);
}
