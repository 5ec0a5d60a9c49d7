#include "dfsp/prompt.hpp"

#include <cmath>

#include "dfsp/errors.hpp"
#include "dfsp/random.hpp"

namespace dfsp {

PromptTable init_table(const CompositionSpace& space, std::size_t d, std::size_t p,
                       std::uint64_t seed) {
    return init_table(space.num_states(), space.num_objects(), d, p, seed);
}

PromptTable init_table(std::size_t num_states, std::size_t num_objects, std::size_t d,
                       std::size_t p, std::uint64_t seed) {
    if (d == 0) throw std::invalid_argument("prompt dimension must be >= 1");
    Rng rng = make_rng(seed, 0x70726f6d7074ULL);
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    PromptTable t;
    t.prefix = Parameter("prompt.prefix", gaussian_matrix(p, d, sd, rng));
    t.states = Parameter("prompt.states", gaussian_matrix(num_states, d, sd, rng));
    t.objects = Parameter("prompt.objects", gaussian_matrix(num_objects, d, sd, rng));
    return t;
}

PromptVars bind(Tape& tape, PromptTable& table) {
    return {tape.leaf(table.prefix), tape.leaf(table.states), tape.leaf(table.objects)};
}

PromptBatch build_prompts(const PromptVars& table, std::span<const Pair> pairs) {
    if (pairs.empty()) throw ShapeError("build_prompts: no pairs");
    std::vector<std::size_t> s_idx, o_idx;
    s_idx.reserve(pairs.size());
    o_idx.reserve(pairs.size());
    for (Pair pr : pairs) {
        if (pr.state >= table.states.rows() || pr.object >= table.objects.rows()) {
            throw ShapeError("build_prompts: pair (" + std::to_string(pr.state) + ", " +
                             std::to_string(pr.object) + ") out of table bounds");
        }
        s_idx.push_back(pr.state);
        o_idx.push_back(pr.object);
    }
    PromptBatch batch;
    const std::size_t p = table.prefix.rows();
    for (std::size_t j = 0; j < p; ++j) {
        std::vector<std::size_t> same(pairs.size(), j);
        batch.positions.push_back(select_rows(table.prefix, same));
    }
    batch.positions.push_back(select_rows(table.states, s_idx));
    batch.positions.push_back(select_rows(table.objects, o_idx));
    return batch;
}

}  // namespace dfsp
