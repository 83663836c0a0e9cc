#pragma once

#include <cstdint>
#include <cstddef>
#include <memory>

namespace pope {

// Byte source for encryption nonces, pivot sampling and workload generation.
// Seeded streams make whole runs reproducible; the secure stream is the default.
struct Rng {
  virtual ~Rng() = default;
  virtual void fill(uint8_t* out, size_t n) = 0;

  uint64_t next_u64();
  // uniform in [0, bound), bound > 0, rejection-sampled
  uint64_t below(uint64_t bound);
  double unit(); // [0, 1)
};

// OS-backed randomness (thread-safe source).
std::unique_ptr<Rng> secure_rng();

// splitmix64 stream; identical seeds yield identical byte streams.
std::unique_ptr<Rng> seeded_rng(uint64_t seed);

// stable derivation of independent sub-streams from one run seed
uint64_t derive_seed(uint64_t seed, uint64_t lane);

} // namespace pope
