#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "longsim/rng.hpp"

using namespace longsim;

// Known-answer vectors published with Random123 (philox4x64_10).
TEST(Philox, KnownAnswerZero) {
  const auto out = philox4x64({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x16554d9eca36314cULL);
  EXPECT_EQ(out[1], 0xdb20fe9d672d0fdcULL);
  EXPECT_EQ(out[2], 0xd7e772cee186176bULL);
  EXPECT_EQ(out[3], 0x7e68b68aec7ba23bULL);
}

TEST(Philox, KnownAnswerOnes) {
  const std::uint64_t f = ~0ULL;
  const auto out = philox4x64({f, f, f, f}, {f, f});
  EXPECT_EQ(out[0], 0x87b092c3013fe90bULL);
  EXPECT_EQ(out[1], 0x438c3c67be8d0224ULL);
  EXPECT_EQ(out[2], 0x9cc7d7c69cd777b6ULL);
  EXPECT_EQ(out[3], 0xa09caebf594f0ba0ULL);
}

TEST(Philox, KnownAnswerPi) {
  const auto out = philox4x64({0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL,
                               0x082efa98ec4e6c89ULL},
                              {0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL});
  EXPECT_EQ(out[0], 0xa528f45403e61d95ULL);
  EXPECT_EQ(out[1], 0x38c72dbd566e9788ULL);
  EXPECT_EQ(out[2], 0xa5a1610e72fd18b5ULL);
  EXPECT_EQ(out[3], 0x57bd43b5e52b7fe6ULL);
}

TEST(RandomStream, ReproducibleFromCoordinates) {
  RandomStream a(7, Purpose::within, 3, 11), b(7, Purpose::within, 3, 11);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RandomStream, CoordinatesGiveDistinctStreams) {
  std::set<std::uint64_t> first;
  for (std::uint64_t seed : {1ULL, 2ULL})
    for (Purpose p : {Purpose::profiles, Purpose::within, Purpose::assignment})
      for (std::uint64_t rep : {0ULL, 1ULL})
        for (std::uint64_t subj : {0ULL, 1ULL, 1000ULL}) first.insert(RandomStream(seed, p, rep, subj).next_u64());
  EXPECT_EQ(first.size(), 2u * 3u * 2u * 3u);
}

TEST(RandomStream, UniformIsOpenAndUnbiased) {
  RandomStream r(123, Purpose::generic);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n, var = sum2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.5, 5 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(var, 1.0 / 12, 0.002);
}

TEST(RandomStream, NormalMoments) {
  RandomStream r(9, Purpose::generic);
  const int n = 200000;
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
    s3 += z * z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.012);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s3 / n, 0.0, 0.04);
  EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(RandomStream, BernoulliRate) {
  RandomStream r(5, Purpose::generic);
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) hits += r.bernoulli(0.3);
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.3, 5 * std::sqrt(0.21 / n));
}

TEST(MixSeed, DeterministicAndSensitive) {
  EXPECT_EQ(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
  EXPECT_NE(mix_seed(1, 2, 3), mix_seed(1, 3, 2));
  EXPECT_NE(mix_seed(1, 0, 0), mix_seed(2, 0, 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10; ++s)
    for (std::uint64_t r = 0; r < 1000; ++r) seen.insert(mix_seed(99, s, r));
  EXPECT_EQ(seen.size(), 10000u);
}
