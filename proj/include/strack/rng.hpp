#ifndef STRACK_RNG_HPP_
#define STRACK_RNG_HPP_

#include <cstdint>

namespace strack {

// SplitMix64 generator. Uniforms use the top 53 bits; normals come from
// Box-Muller with the second variate cached.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();
  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child stream; advances this generator by one draw.
  Rng split() { return Rng(next_u64()); }

  bool operator==(const Rng& o) const {
    return state_ == o.state_ && has_spare_ == o.has_spare_ && spare_ == o.spare_;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace strack

#endif  // STRACK_RNG_HPP_
