#include "ctorecon/random.hpp"

#include <cmath>
#include <numbers>

namespace ctorecon {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> Philox::block(std::uint64_t n) const {
  std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32), 0u, 0u};
  std::uint32_t k0 = key_[0];
  std::uint32_t k1 = key_[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

Philox Philox::split(std::uint64_t stream) const {
  const std::uint64_t key = (static_cast<std::uint64_t>(key_[1]) << 32) | key_[0];
  return Philox(splitmix64(key ^ splitmix64(stream + 1)));
}

std::uint32_t Philox::next_word() {
  if (buffered_ == 0) {
    buffer_ = block(counter_++);
    buffered_ = 4;
  }
  return buffer_[4 - buffered_--];
}

double Philox::uniform() {
  const std::uint64_t hi = next_word();
  const std::uint64_t lo = next_word();
  const std::uint64_t bits = ((hi << 32) | lo) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

double Philox::normal() {
  if (haveSpare_) {
    haveSpare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  haveSpare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Philox::below(std::uint64_t n) {
  // n is small everywhere we use this; modulo bias is below 2^-40.
  const std::uint64_t hi = next_word();
  const std::uint64_t lo = next_word();
  return ((hi << 32) | lo) % n;
}

}  // namespace ctorecon
