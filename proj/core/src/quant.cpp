#include "chameleon/quant.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace chameleon::audit {

OpCounts& counters() noexcept {
  thread_local OpCounts c;
  return c;
}

}  // namespace chameleon::audit

namespace chameleon::quant {

namespace {

// kLogRoundUp[e] is the smallest integer m with m >= 2^(e + 0.5), i.e. the
// point where round(log2 m) moves from e to e+1. Exponents past 7 saturate
// anyway, so the table only needs to cover the representable range.
constexpr std::array<std::int64_t, kMaxExponent + 1> make_round_thresholds() {
  std::array<std::int64_t, kMaxExponent + 1> t{};
  for (int e = 0; e <= kMaxExponent; ++e) {
    const std::int64_t target = std::int64_t{1} << (2 * e + 1);
    std::int64_t m = std::int64_t{1} << e;
    while (m * m < target) ++m;
    t[static_cast<std::size_t>(e)] = m;
  }
  return t;
}

constexpr auto kLogRoundUp = make_round_thresholds();

LogWeight encode(bool negative, int e, QuantStats* stats) {
  if (e > kMaxExponent) {
    e = kMaxExponent;
    if (stats) ++stats->saturations;
  }
  if (e < 0) {
    e = 0;
    if (stats) ++stats->underflows;
  }
  if (negative && e == 0) {
    // -1 has no code; its log-domain neighbour is -2.
    e = 1;
    if (stats) ++stats->underflows;
  }
  return LogWeight::make(negative, e);
}

}  // namespace

LogWeight LogWeight::from_code(unsigned code) {
  if (code > 15) throw std::out_of_range("LogWeight code must be 4 bits");
  return LogWeight(static_cast<std::uint8_t>(code));
}

LogWeight LogWeight::make(bool negative, int exponent) {
  if (exponent < 0 || exponent > kMaxExponent)
    throw std::invalid_argument("LogWeight exponent out of [0,7]");
  if (negative && exponent == 0)
    throw std::invalid_argument("(-, exp=0) is the reserved zero code");
  return LogWeight(static_cast<std::uint8_t>((negative ? 0b1000 : 0) | exponent));
}

QAct::QAct(int v) {
  if (v < 0 || v > kActMax) throw std::out_of_range("QAct out of [0,15]");
  v_ = static_cast<std::uint8_t>(v);
}

QBias::QBias(int v) {
  if (v < kBiasMin || v > kBiasMax) throw std::out_of_range("QBias out of 14-bit range");
  v_ = static_cast<std::int16_t>(v);
}

QBias QBias::saturate(std::int64_t v) {
  if (v < kBiasMin) return QBias(kBiasMin);
  if (v > kBiasMax) return QBias(kBiasMax);
  return QBias(static_cast<int>(v));
}

PeOut::PeOut(int v) {
  if (v < kPeOutMin || v > kPeOutMax) throw std::out_of_range("PeOut out of 12-bit range");
  v_ = static_cast<std::int16_t>(v);
}

Accum::Accum(std::int64_t v) {
  if (v < kAccumMin || v > kAccumMax) throw std::out_of_range("Accum out of 18-bit range");
  v_ = static_cast<std::int32_t>(v);
}

Accum Accum::saturate(std::int64_t v) {
  if (v < kAccumMin) return Accum(kAccumMin);
  if (v > kAccumMax) return Accum(kAccumMax);
  return Accum(v);
}

std::string to_string(OverflowMode m) { return m == OverflowMode::wrap ? "wrap" : "clamp"; }

OverflowMode overflow_mode_from_string(const std::string& s) {
  if (s == "wrap") return OverflowMode::wrap;
  if (s == "clamp") return OverflowMode::clamp;
  throw std::invalid_argument("unknown overflow mode '" + s + "'");
}

std::string check(const RescaleSpec& spec) {
  if (spec.zero_point != 0) return "nonzero activation zero-point is unsupported";
  if (spec.output_shift < 0 || spec.output_shift > kMaxShift)
    return "output_shift out of [0," + std::to_string(kMaxShift) + "]";
  if (spec.input_shift < -kMaxShift || spec.input_shift > kMaxShift)
    return "input_shift out of [-" + std::to_string(kMaxShift) + "," +
           std::to_string(kMaxShift) + "]";
  return {};
}

int decode_log_weight(LogWeight w) noexcept {
  if (w.is_zero()) return 0;
  const int mag = 1 << w.exponent();
  return w.negative() ? -mag : mag;
}

LogWeight quantize_log2(double v, Rounding mode, QuantStats* stats) {
  if (v == 0.0 || std::isnan(v)) return LogWeight::zero();
  const bool neg = v < 0.0;
  const double l = std::log2(std::fabs(v));
  double e = 0.0;
  switch (mode) {
    case Rounding::nearest: e = std::floor(l + 0.5); break;
    case Rounding::floor: e = std::floor(l); break;
    case Rounding::ceil: e = std::ceil(l); break;
  }
  if (e > 64.0) e = 64.0;
  if (e < -64.0) e = -64.0;
  return encode(neg, static_cast<int>(e), stats);
}

LogWeight quantize_log2_int(std::int64_t v, Rounding mode, QuantStats* stats) {
  audit::count_compare();
  if (v == 0) return LogWeight::zero();
  const bool neg = v < 0;
  const std::uint64_t mag = neg ? static_cast<std::uint64_t>(-v) : static_cast<std::uint64_t>(v);
  int e = static_cast<int>(std::bit_width(mag)) - 1;  // floor(log2 |v|)
  audit::count_shift();  // bit_width is a leading-zero count
  switch (mode) {
    case Rounding::nearest:
      audit::count_compare();
      if (e <= kMaxExponent &&
          static_cast<std::int64_t>(mag) >= kLogRoundUp[static_cast<std::size_t>(e)])
        ++e;
      break;
    case Rounding::floor: break;
    case Rounding::ceil:
      audit::count_compare();
      if ((mag & (mag - 1)) != 0) ++e;
      break;
  }
  return encode(neg, e, stats);
}

PeOut shift_mac(QAct a, LogWeight w) noexcept {
  if (w.is_zero()) return PeOut{};
  audit::count_shift();
  const int mag = a.value() << w.exponent();
  if (w.negative()) {
    audit::count_add();  // two's-complement negation
    return PeOut(-mag);
  }
  return PeOut(mag);
}

Accum sat_add(Accum a, Accum b) noexcept {
  audit::count_add();
  return Accum::saturate(std::int64_t{a.value()} + b.value());
}

Accum sat_sub(Accum a, Accum b) noexcept {
  audit::count_add();
  return Accum::saturate(std::int64_t{a.value()} - b.value());
}

Accum sat_shift(Accum a, int n) noexcept {
  if (n == 0) return a;
  audit::count_shift();
  if (n > 0) {
    if (n > 40) n = 40;
    return Accum::saturate(std::int64_t{a.value()} << n);
  }
  const int r = -n > 31 ? 31 : -n;
  return Accum(a.value() >> r);
}

Accum to_accum(QAct a) noexcept { return Accum(a.value()); }
Accum to_accum(QBias b) noexcept { return Accum(b.value()); }
Accum to_accum(PeOut p) noexcept { return Accum(p.value()); }

QAct requantize(Accum acc, const RescaleSpec& spec, QuantStats* stats) noexcept {
  std::int32_t v = acc.value();
  if (spec.output_shift > 0) {
    audit::count_shift();
    v >>= spec.output_shift;
  }
  audit::count_compare();
  if (v < 0) return QAct{};
  audit::count_compare();
  if (v > kActMax) {
    if (stats) ++stats->overflow_events;
    return spec.overflow == OverflowMode::clamp ? QAct(kActMax) : QAct(v & kActMax);
  }
  return QAct(v);
}

}  // namespace chameleon::quant
