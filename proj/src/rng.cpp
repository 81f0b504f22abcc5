#include "jfpd/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace jfpd {

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Xoshiro256ss::Xoshiro256ss(std::uint64_t seed) {
  SplitMix64 sm(seed);
  for (auto& word : s_) word = sm.next();
}

std::uint64_t Xoshiro256ss::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Xoshiro256ss::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Xoshiro256ss::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Xoshiro256ss::below(0)");
  __extension__ using u128 = unsigned __int128;
  const u128 wide = static_cast<u128>(next()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double Xoshiro256ss::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Xoshiro256ss Xoshiro256ss::split() { return Xoshiro256ss(next()); }

std::array<std::uint64_t, 8> reference_outputs(std::uint64_t seed) {
  Xoshiro256ss rng(seed);
  std::array<std::uint64_t, 8> out{};
  for (auto& v : out) v = rng.next();
  return out;
}

}  // namespace jfpd
