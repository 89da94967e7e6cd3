#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "lrvlab/rng.hpp"

using lrvlab::PhiloxCounter;
using lrvlab::PhiloxKey;

TEST_CASE("philox4x32_10 matches the Random123 known-answer vectors") {
  CHECK(lrvlab::philox4x32_10({0, 0, 0, 0}, {0, 0}) ==
        PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(lrvlab::philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                              {0xffffffffu, 0xffffffffu}) ==
        PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(lrvlab::philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                              {0xa4093822u, 0x299f31d0u}) ==
        PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("philox4x32_10 is usable at compile time") {
  constexpr auto out = lrvlab::philox4x32_10({0, 0, 0, 0}, {0, 0});
  STATIC_REQUIRE(out[0] == 0x6627e8d5u);
}

TEST_CASE("sequential draws agree with random access") {
  lrvlab::RandomStream s(12345, 7);
  for (std::uint64_t k = 0; k < 37; ++k) {
    const std::uint64_t expected = s.word_at(k);
    CHECK(s.position() == k);
    CHECK(s.next_u64() == expected);
  }
}

TEST_CASE("stream words are the Philox block words for the documented counter layout") {
  const std::uint64_t seed = 0x0123456789abcdefull;
  const std::uint64_t rep = 0x0000000500000003ull;
  lrvlab::RandomStream s(seed, rep);
  const PhiloxKey key{0x89abcdefu, 0x01234567u};
  const auto block1 = lrvlab::philox4x32_10({1, 0, 3, 5}, key);
  CHECK(s.word_at(2) == ((std::uint64_t{block1[1]} << 32) | block1[0]));
  CHECK(s.word_at(3) == ((std::uint64_t{block1[3]} << 32) | block1[2]));
}

TEST_CASE("streams are deterministic and distinct") {
  auto draw = [](std::uint64_t seed, std::uint64_t rep) {
    lrvlab::RandomStream s = lrvlab::derive_stream(seed, rep);
    std::vector<double> v(16);
    s.fill_normal(v);
    return v;
  };
  CHECK(draw(1, 2) == draw(1, 2));
  CHECK(draw(1, 2) != draw(1, 3));
  CHECK(draw(1, 2) != draw(2, 2));
  CHECK(lrvlab::derive_seed(9, 1) != lrvlab::derive_seed(9, 2));
  CHECK(lrvlab::derive_seed(9, 1) == lrvlab::derive_seed(9, 1));
}

TEST_CASE("uniforms stay strictly inside (0, 1)") {
  CHECK(lrvlab::uniform_from_bits(0) == 0x1.0p-53);
  CHECK(lrvlab::uniform_from_bits(~std::uint64_t{0}) == 1.0 - 0x1.0p-53);
  CHECK(lrvlab::uniform_from_bits(~std::uint64_t{0}) < 1.0);
}

TEST_CASE("normal draws have unit moments") {
  lrvlab::RandomStream s(2024, 0);
  const int count = 400000;
  double sum = 0.0;
  double sq = 0.0;
  double fourth = 0.0;
  for (int i = 0; i < count; ++i) {
    const double z = s.next_normal();
    sum += z;
    sq += z * z;
    fourth += z * z * z * z;
  }
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  // Standard errors: 1/sqrt(N) for the mean, sqrt(2/N) for the variance, sqrt(96/N) for E z^4.
  CHECK(std::fabs(mean) < 4.0 / std::sqrt(count));
  CHECK(std::fabs(var - 1.0) < 4.0 * std::sqrt(2.0 / count));
  CHECK(std::fabs(fourth / count - 3.0) < 4.0 * std::sqrt(96.0 / count));
}

TEST_CASE("uniform draws pass a chi-square equidistribution check") {
  lrvlab::RandomStream s(77, 3);
  const int bins = 64;
  const int count = 640000;
  std::vector<int> hist(bins, 0);
  for (int i = 0; i < count; ++i) ++hist[static_cast<int>(s.next_uniform() * bins)];
  double chi2 = 0.0;
  const double expected = static_cast<double>(count) / bins;
  for (int h : hist) chi2 += (h - expected) * (h - expected) / expected;
  // 63 degrees of freedom; the 0.999 quantile is about 103.4.
  CHECK(chi2 < 103.4);
}
