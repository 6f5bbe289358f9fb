#ifndef CONELAB_RNG_HPP
#define CONELAB_RNG_HPP

/* Counter-based deterministic RNG.
 *
 * Draw i of stream s under seed k is a fixed mixing of (k, s, i), so results
 * never depend on call order across modules.  Each module derives its own
 * stream via split(); reports quote (seed, stream) so any number in any
 * artifact can be regenerated in isolation.
 */

#include <cstdint>
#include <string>

namespace conelab {

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), counter_(0) {}

  /* Independent child stream; label hashing keeps sibling streams distinct
   * without any central registry. */
  CounterRng split(const std::string& label) const;

  std::uint64_t next_u64();
  /* Uniform in [0, 1); 53 mantissa bits. */
  double uniform();
  /* Uniform in [lo, hi). */
  double uniform(double lo, double hi);
  /* Uniform integer in [0, n); n > 0. */
  std::uint64_t uniform_index(std::uint64_t n);
  /* Standard normal (two mixed draws per value, no cached state). */
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

}  // namespace conelab

#endif
