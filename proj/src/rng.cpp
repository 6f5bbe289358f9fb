#include "conelab/rng.hpp"

#include <cmath>

namespace conelab {
namespace {

/* Finalizer from the splitmix64 family; full-avalanche on 64 bits. */
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(mix64(a) ^ b) ^ c);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

CounterRng CounterRng::split(const std::string& label) const {
  return CounterRng(seed_, mix64(stream_ ^ fnv1a(label)));
}

std::uint64_t CounterRng::next_u64() { return mix3(seed_, stream_, counter_++); }

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t CounterRng::uniform_index(std::uint64_t n) {
  /* Rejection-free modulo is fine here: n is tiny relative to 2^64 in every
   * call site, so the bias is far below measurement tolerances. */
  return next_u64() % n;
}

double CounterRng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0) u1 = 0x1.0p-60;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace conelab
