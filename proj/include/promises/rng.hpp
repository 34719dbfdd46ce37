#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace promises {

// Stateless seed mixer used to derive independent per-component streams from
// one master seed.  Every stream is identified by (stream, index) tags so the
// derivation is documented and replayable.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

// Deterministic double-precision RNG.  mt19937_64 has a standard-mandated
// sequence and the Gaussian transform is implemented here (Box-Muller) rather
// than through std::normal_distribution, whose output is implementation
// defined.  Identical seeds therefore give identical draws on any platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform();

    // Standard normal via Box-Muller; second value of each pair is cached.
    double gauss();

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates permutation of {0, ..., n-1}.
    std::vector<std::size_t> permutation(std::size_t n);

  private:
    std::mt19937_64 gen_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace promises
