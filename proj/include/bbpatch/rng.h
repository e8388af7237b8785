#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace bbpatch {

// Deterministic random source: xoshiro256** seeded through splitmix64.
//
// Normals use the Marsaglia polar method so the sequence depends only on
// IEEE arithmetic plus std::log/std::sqrt, not on a standard-library
// distribution whose algorithm varies between vendors.
//
// Sub-streams: derive(label) builds a new generator from (seed, label) alone,
// independent of how many draws the parent has already made. Attack runs
// derive one stream per purpose ("init", "step", ...) so reordering work in
// one place never shifts the randomness seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform on {0, ..., n-1}; n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  Rng derive(std::string_view label) const;
  Rng derive(std::string_view label, std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// FNV-1a, used for stream labels and config hashes.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace bbpatch
