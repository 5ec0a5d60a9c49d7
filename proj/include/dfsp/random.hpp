#pragma once

#include <cstdint>
#include <random>

#include "dfsp/matrix.hpp"

namespace dfsp {

using Rng = std::mt19937_64;

// Independent generator per (seed, stream) so adding a consumer of
// randomness does not shift the draws of the others.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

}  // namespace dfsp
