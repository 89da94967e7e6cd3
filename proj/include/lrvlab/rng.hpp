#ifndef LRVLAB_RNG_HPP
#define LRVLAB_RNG_HPP

// Counter-based random streams.
//
// A stream is identified by (master_seed, replication_id). Word k of the
// stream is word (k mod 2) of Philox4x32-10 evaluated at counter
// {k/2 low, k/2 high, replication_id low, replication_id high} under key
// {master_seed low, master_seed high}. Every draw is therefore a pure
// function of the identifiers and its index, which is what makes sweeps
// reproducible regardless of how replications are spread over threads.
//
// Uniforms take the top 52 bits of a word and sit at bin midpoints, so they
// never hit 0 or 1. Normals are normal_quantile(uniform), one word each.

#include <array>
#include <cstdint>
#include <span>

#include "lrvlab/special.hpp"

namespace lrvlab {

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

}  // namespace detail

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += detail::kPhiloxW0;
      key[1] += detail::kPhiloxW1;
    }
    const std::uint64_t p0 = std::uint64_t{detail::kPhiloxM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{detail::kPhiloxM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// SplitMix64 finalizer; used to fold labels into seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Seed for a sub-experiment, derived from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  return mix64(parent ^ mix64(tag));
}

inline double uniform_from_bits(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t replication_id)
      : seed_(master_seed), replication_(replication_id) {}

  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint64_t replication_id() const noexcept { return replication_; }
  /// Index of the next word to be drawn.
  std::uint64_t position() const noexcept { return position_; }

  /// Word at an absolute index, independent of the stream position.
  std::uint64_t word_at(std::uint64_t index) const {
    const std::uint64_t block = index >> 1;
    const auto out = philox4x32_10(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(replication_),
         static_cast<std::uint32_t>(replication_ >> 32)},
        {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
    const std::size_t w = (index & 1u) * 2;
    return (std::uint64_t{out[w + 1]} << 32) | out[w];
  }

  std::uint64_t next_u64() {
    if ((position_ & 1u) == 0) {
      const std::uint64_t block = position_ >> 1;
      buffer_ = philox4x32_10(
          {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
           static_cast<std::uint32_t>(replication_),
           static_cast<std::uint32_t>(replication_ >> 32)},
          {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
    }
    const std::size_t w = (position_ & 1u) * 2;
    ++position_;
    return (std::uint64_t{buffer_[w + 1]} << 32) | buffer_[w];
  }

  double next_uniform() { return uniform_from_bits(next_u64()); }
  double next_normal() { return normal_quantile(next_uniform()); }

  void fill_normal(std::span<double> out) {
    for (double& v : out) v = next_normal();
  }

 private:
  std::uint64_t seed_;
  std::uint64_t replication_;
  std::uint64_t position_ = 0;
  PhiloxCounter buffer_{};
};

inline RandomStream derive_stream(std::uint64_t master_seed, std::uint64_t replication_id) {
  return RandomStream(master_seed, replication_id);
}

}  // namespace lrvlab

#endif  // LRVLAB_RNG_HPP
