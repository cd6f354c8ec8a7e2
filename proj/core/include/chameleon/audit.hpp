#pragma once

#include <cstdint>

namespace chameleon::audit {

// Per-thread tally of the arithmetic issued by the value path. The datapath
// types in quant.hpp route every shift/add/compare through these counters and
// expose no multiplication operator; reference code that multiplies calls
// count_multiply() so an audit scope can tell the two apart.
struct OpCounts {
  std::uint64_t shifts = 0;
  std::uint64_t adds = 0;
  std::uint64_t compares = 0;
  std::uint64_t multiplies = 0;

  OpCounts& operator+=(const OpCounts& o) {
    shifts += o.shifts;
    adds += o.adds;
    compares += o.compares;
    multiplies += o.multiplies;
    return *this;
  }
  friend OpCounts operator-(OpCounts a, const OpCounts& b) {
    a.shifts -= b.shifts;
    a.adds -= b.adds;
    a.compares -= b.compares;
    a.multiplies -= b.multiplies;
    return a;
  }
};

OpCounts& counters() noexcept;

inline void count_shift(std::uint64_t n = 1) noexcept { counters().shifts += n; }
inline void count_add(std::uint64_t n = 1) noexcept { counters().adds += n; }
inline void count_compare(std::uint64_t n = 1) noexcept { counters().compares += n; }
inline void count_multiply(std::uint64_t n = 1) noexcept { counters().multiplies += n; }

/// Captures the operations issued on this thread between construction and
/// delta().
class Scope {
 public:
  Scope() noexcept : start_(counters()) {}
  OpCounts delta() const noexcept { return counters() - start_; }

 private:
  OpCounts start_;
};

}  // namespace chameleon::audit
