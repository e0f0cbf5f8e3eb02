#pragma once

#include <cstdint>
#include <random>

#include "nadjust/quantiles.hpp"

namespace nadjust {

// splitmix64 step; used to hash (master_seed, stream_id) pairs into engine
// seeds so that replication k's stream is a pure function of the pair and
// streams are decorrelated regardless of execution order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded random stream. Draw paths are hand-rolled (uniform from the high
// bits, normal via inverse CDF, exponential via -ln(U)/rate) because the
// std:: distribution objects do not promise identical output across
// implementations and every experiment here must replay byte-identically.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : eng_(splitmix64(splitmix64(master_seed) ^ splitmix64(stream_id * 0x9e3779b97f4a7c15ULL + 1))) {}

  explicit RngStream(std::uint64_t seed) : RngStream(seed, 0) {}

  std::uint64_t next_u64() { return eng_(); }

  // strictly inside (0,1): 53-bit mantissa offset by half an ulp
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_quantile(uniform()); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Fisher-Yates; used for epoch shuffles and group assignment.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace nadjust
