#pragma once

#include <array>
#include <cstdint>

namespace ctorecon {

/// Philox4x32-10 counter-based generator.
///
/// Output block n is a pure function of (key, n), so streams can be split by
/// deriving a new key (`split`) and consumed in any order without shared state.
class Philox {
 public:
  explicit Philox(std::uint64_t seed) : key_{static_cast<std::uint32_t>(seed),
                                               static_cast<std::uint32_t>(seed >> 32)} {}

  /// Independent child stream; distinct `stream` ids give distinct keys.
  Philox split(std::uint64_t stream) const;

  /// Four 32-bit words for counter value `n`.
  std::array<std::uint32_t, 4> block(std::uint64_t n) const;

  /// Sequential interface over the counter.
  double uniform();            // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();             // standard normal (Box-Muller)
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  bool haveSpare_ = false;
  double spare_ = 0.0;

  std::uint32_t next_word();
};

}  // namespace ctorecon
