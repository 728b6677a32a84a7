#pragma once

#include <cstdint>

#include "mka/tensor.hpp"

namespace mka {

// Seeded synthetic token tensor. Each entry is produced by hashing
// (seed, flat index) through splitmix64 and mapping to [-1, 1), so the
// result is identical across platforms and independent of traversal order.
template <typename T>
Tensor<T> synth_workload(std::uint64_t seed, std::size_t batch, std::size_t seq_len,
                         std::size_t d_model) {
    if (batch == 0 || seq_len == 0 || d_model == 0)
        throw std::invalid_argument("synth_workload: dims must be positive");
    Tensor<T> x({batch, seq_len, d_model});
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::uint64_t state = seed ^ (0x2545f4914f6cdd1dULL * (i + 1));
        const std::uint64_t bits = splitmix64(state);
        x.data[i] = static_cast<T>(static_cast<double>(bits >> 11) * 0x1.0p-53 * 2.0 - 1.0);
    }
    return x;
}

}  // namespace mka
