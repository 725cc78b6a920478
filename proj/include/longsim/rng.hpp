#pragma once

// Counter-based random streams.
//
// A stream is a Philox4x64-10 block cipher keyed by (seed, purpose) and
// counted over (replication, subject, block). Any stream can therefore be
// reconstructed from its coordinates alone, independent of which worker
// touches it or in what order.

#include <array>
#include <cstdint>
#include <limits>

namespace longsim {

// Philox4x64 with 10 rounds; Random123 known-answer vectors in tests/test_rng.cpp.
std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> counter,
                                        std::array<std::uint64_t, 2> key);

// What a stream is used for. Distinct purposes never share random bits.
enum class Purpose : std::uint64_t {
  profiles = 1,
  within = 2,
  categorical = 3,
  event_times = 4,
  censor_times = 5,
  assignment = 6,
  calibration = 7,
  generic = 8,
};

class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, Purpose purpose, std::uint64_t replication = 0,
               std::uint64_t subject = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  // Standard normal by inversion.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  void refill();

  std::array<std::uint64_t, 2> key_;
  std::array<std::uint64_t, 4> counter_;
  std::array<std::uint64_t, 4> block_{};
  unsigned used_ = 4;
};

// Deterministic 64-bit mixing of several words (SplitMix64 finalizer chain);
// used to derive per-(scenario, replication) seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace longsim
