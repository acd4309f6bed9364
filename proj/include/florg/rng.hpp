#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "florg/matrix.hpp"

namespace florg {

// All randomness flows through this wrapper. mt19937_64 output is specified
// bit-for-bit by the standard, and the distributions below are implemented
// here rather than taken from <random> (whose normal/gamma are
// implementation-defined), so a seed reproduces the same stream on any
// platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double normal();             // standard normal, Box-Muller
    double gamma(double shape);  // Gamma(shape, 1), Marsaglia-Tsang
    int uniform_int(int n);      // {0, ..., n-1}, rejection-free modulo bias removal

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable sub-stream derivation: mixes (base, stream, index) so that loops
// over rounds/clients/purposes never share a generator state.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// Named streams used across the library. Values are part of the persisted
// reproducibility story, do not renumber.
namespace seed_stream {
inline constexpr std::uint64_t task_gen = 1;
inline constexpr std::uint64_t basis_left = 2;
inline constexpr std::uint64_t basis_right = 3;
inline constexpr std::uint64_t adapter_init = 4;
inline constexpr std::uint64_t partition = 5;
inline constexpr std::uint64_t batch_shuffle = 6;
inline constexpr std::uint64_t participation = 7;
inline constexpr std::uint64_t lora_init = 8;
inline constexpr std::uint64_t eval_split = 9;
} // namespace seed_stream

Matrix gaussian_matrix(int rows, int cols, double stddev, Rng& rng);

// Fisher-Yates permutation of {0..n-1}
std::vector<int> shuffled_indices(int n, Rng& rng);

// m distinct values from {0..n-1}, returned sorted ascending
std::vector<int> sample_without_replacement(int n, int m, Rng& rng);

} // namespace florg
