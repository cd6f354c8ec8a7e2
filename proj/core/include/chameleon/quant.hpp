#pragma once

// Fixed-width numeric codes and the shift-only arithmetic shared by every
// part of the datapath. None of the value types here define a multiplication
// operator: products against weights go through shift_mac().

#include <compare>
#include <cstdint>
#include <string>

#include "chameleon/audit.hpp"

namespace chameleon::quant {

inline constexpr int kActMax = 15;
inline constexpr int kMaxExponent = 7;
inline constexpr int kBiasMin = -8192;
inline constexpr int kBiasMax = 8191;
inline constexpr int kPeOutMin = -2048;
inline constexpr int kPeOutMax = 2047;
inline constexpr std::int32_t kAccumMin = -131072;
inline constexpr std::int32_t kAccumMax = 131071;

/// 4-bit signed power-of-two weight. Bit 3 is the sign, bits 0..2 the
/// exponent. The pattern that would read as "-2^0" in that layout (0b1000,
/// the sign-magnitude -0) is reserved for exact zero, so the representable
/// set is {0, +1..+128, -2..-128}.
class LogWeight {
 public:
  static constexpr std::uint8_t kZeroCode = 0b1000;

  constexpr LogWeight() = default;

  /// Throws std::out_of_range for codes above 15.
  static LogWeight from_code(unsigned code);
  /// Throws std::invalid_argument for exponents outside [0,7] and for
  /// (negative, 0), whose pattern is the zero code.
  static LogWeight make(bool negative, int exponent);
  static constexpr LogWeight zero() { return LogWeight{}; }

  constexpr std::uint8_t code() const { return code_; }
  constexpr bool is_zero() const { return code_ == kZeroCode; }
  constexpr bool negative() const { return (code_ & 0b1000) != 0; }
  constexpr int exponent() const { return code_ & 0b0111; }

  friend constexpr bool operator==(LogWeight, LogWeight) = default;

 private:
  constexpr explicit LogWeight(std::uint8_t c) : code_(c) {}
  std::uint8_t code_ = kZeroCode;
};

/// Post-ReLU 4-bit unsigned activation.
class QAct {
 public:
  constexpr QAct() = default;
  /// Throws std::out_of_range outside [0,15].
  explicit QAct(int v);
  constexpr int value() const { return v_; }
  friend constexpr auto operator<=>(QAct, QAct) = default;

 private:
  std::uint8_t v_ = 0;
};

/// 14-bit signed bias.
class QBias {
 public:
  constexpr QBias() = default;
  explicit QBias(int v);
  static QBias saturate(std::int64_t v);
  constexpr int value() const { return v_; }
  friend constexpr auto operator<=>(QBias, QBias) = default;

 private:
  std::int16_t v_ = 0;
};

/// 12-bit signed PE output.
class PeOut {
 public:
  constexpr PeOut() = default;
  explicit PeOut(int v);
  constexpr int value() const { return v_; }
  friend constexpr auto operator<=>(PeOut, PeOut) = default;

 private:
  std::int16_t v_ = 0;
};

/// 18-bit signed accumulator value. Every arithmetic helper saturates.
class Accum {
 public:
  constexpr Accum() = default;
  /// Throws std::out_of_range outside the 18-bit range.
  explicit Accum(std::int64_t v);
  /// Clamps into range; no audit accounting.
  static Accum saturate(std::int64_t v);
  constexpr std::int32_t value() const { return v_; }
  friend constexpr auto operator<=>(Accum, Accum) = default;

 private:
  std::int32_t v_ = 0;
};

enum class OverflowMode : std::uint8_t { wrap = 0, clamp = 1 };
enum class Rounding : std::uint8_t { nearest = 0, floor = 1, ceil = 2 };

std::string to_string(OverflowMode m);
OverflowMode overflow_mode_from_string(const std::string& s);

/// Per-tensor scale handling for one layer. Scales are powers of two, so
/// both shifts keep the datapath multiplication-free.
struct RescaleSpec {
  /// Residual-branch alignment: >0 shifts left, <0 arithmetic right.
  int input_shift = 0;
  /// Arithmetic right shift applied before ReLU and the 4-bit mapping.
  int output_shift = 0;
  OverflowMode overflow = OverflowMode::wrap;
  /// Activation zero-point. Only 0 is supported by the hardware model.
  int zero_point = 0;

  friend bool operator==(const RescaleSpec&, const RescaleSpec&) = default;
};

inline constexpr int kMaxShift = 17;

/// Empty string when valid, otherwise a description of the problem.
std::string check(const RescaleSpec& spec);

/// Saturation/overflow statistics register. Optional everywhere.
struct QuantStats {
  std::uint64_t saturations = 0;   // magnitude clamped at the top of a range
  std::uint64_t underflows = 0;    // non-zero value pushed up to the smallest code
  std::uint64_t overflow_events = 0;  // 4-bit activation mapping overflowed

  QuantStats& operator+=(const QuantStats& o) {
    saturations += o.saturations;
    underflows += o.underflows;
    overflow_events += o.overflow_events;
    return *this;
  }
};

int decode_log_weight(LogWeight w) noexcept;

/// Nearest code in the log domain, sign preserved, exponent clamped to
/// [0,7]. Exact zero maps to the zero code.
LogWeight quantize_log2(double v, Rounding mode = Rounding::nearest,
                        QuantStats* stats = nullptr);

/// Integer variant used on the learning path. Exponent selection uses
/// bit_width and a constant threshold table, never a multiply.
LogWeight quantize_log2_int(std::int64_t v, Rounding mode = Rounding::nearest,
                            QuantStats* stats = nullptr);

/// a * decode(w), computed as (a << exp) with sign correction.
PeOut shift_mac(QAct a, LogWeight w) noexcept;

// Saturating accumulator arithmetic.
Accum sat_add(Accum a, Accum b) noexcept;
Accum sat_sub(Accum a, Accum b) noexcept;
/// n > 0 shifts left with saturation, n < 0 is an arithmetic right shift.
Accum sat_shift(Accum a, int n) noexcept;
Accum to_accum(QAct a) noexcept;
Accum to_accum(QBias b) noexcept;
Accum to_accum(PeOut p) noexcept;

/// Arithmetic right shift by spec.output_shift, ReLU, then 4-bit mapping per
/// spec.overflow.
QAct requantize(Accum acc, const RescaleSpec& spec, QuantStats* stats = nullptr) noexcept;

}  // namespace chameleon::quant
