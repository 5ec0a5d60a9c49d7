#pragma once

#include <cstdint>
#include <filesystem>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dfsp/composition_space.hpp"
#include "dfsp/matrix.hpp"
#include "dfsp/random.hpp"

namespace testing {

inline dfsp::Matrix unit_rows(dfsp::Matrix m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double n = dfsp::norm(m.row(i));
        for (double& v : m.row(i)) v /= n;
    }
    return m;
}

// Gaussian scores rounded to multiples of 2^-7. Distinct breakpoints of a
// bias sweep are then at least 2^-7 apart, wider than a 10,001-point grid
// step for any score range below 39.
inline dfsp::Matrix lattice_scores(std::size_t rows, std::size_t cols, dfsp::Rng& rng) {
    dfsp::Matrix m = dfsp::gaussian_matrix(rows, cols, 1.0, rng);
    for (double& v : m.data()) v = std::round(v * 128.0) / 128.0;
    return m;
}

// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("dfsp_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Space with the requested pair counts. Seen pairs cover every primitive
// (a wrapped diagonal first), then fill in state-major order; unseen pairs
// are the next unused pairs scanning from the end.
inline dfsp::CompositionSpace sized_space(std::size_t n, std::size_t m, std::size_t num_seen,
                                          std::size_t num_unseen,
                                          dfsp::WorldMode world = dfsp::WorldMode::closed) {
    std::vector<std::string> states, objects;
    for (std::size_t i = 0; i < n; ++i) states.push_back("s" + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) objects.push_back("o" + std::to_string(j));
    std::vector<std::vector<bool>> used(n, std::vector<bool>(m, false));
    std::vector<dfsp::Pair> seen, unseen;
    for (std::size_t k = 0; k < std::max(n, m); ++k) {
        const dfsp::Pair p{k % n, k % m};
        if (!used[p.state][p.object]) {
            used[p.state][p.object] = true;
            seen.push_back(p);
        }
    }
    for (std::size_t s = 0; s < n && seen.size() < num_seen; ++s)
        for (std::size_t o = 0; o < m && seen.size() < num_seen; ++o)
            if (!used[s][o]) {
                used[s][o] = true;
                seen.push_back({s, o});
            }
    for (std::size_t k = n * m; k-- > 0 && unseen.size() < num_unseen;) {
        const dfsp::Pair p{k / m, k % m};
        if (!used[p.state][p.object]) {
            used[p.state][p.object] = true;
            unseen.push_back(p);
        }
    }
    return dfsp::CompositionSpace::build(states, objects, seen, unseen, world);
}

}  // namespace testing
