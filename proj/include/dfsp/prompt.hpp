#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfsp/autodiff.hpp"
#include "dfsp/composition_space.hpp"

namespace dfsp {

/// Learnable prompt "[v1]..[vp][state][object]": p shared prefix vectors
/// plus one vector per state and per object, all of dimension d.
struct PromptTable {
    Parameter prefix;   // p x d
    Parameter states;   // n x d
    Parameter objects;  // m x d

    std::size_t dim() const { return states.value.cols(); }
    std::size_t prefix_length() const { return prefix.value.rows(); }
    std::size_t num_vectors() const {
        return prefix.value.rows() + states.value.rows() + objects.value.rows();
    }
    std::vector<Parameter*> parameters() { return {&prefix, &states, &objects}; }
};

// Entries i.i.d. N(0, 1/d), deterministic in seed.
PromptTable init_table(const CompositionSpace& space, std::size_t d, std::size_t p,
                       std::uint64_t seed);
PromptTable init_table(std::size_t num_states, std::size_t num_objects, std::size_t d,
                       std::size_t p, std::uint64_t seed);

struct PromptVars {
    Var prefix;
    Var states;
    Var objects;
};

PromptVars bind(Tape& tape, PromptTable& table);

/// Prompt sequences for a batch of pairs, stored position-major:
/// positions[j] holds token j of every prompt, one row per pair.
/// Length is p + 2 (prefix, state, object).
struct PromptBatch {
    std::vector<Var> positions;

    std::size_t length() const { return positions.size(); }
    std::size_t num_prompts() const { return positions.empty() ? 0 : positions[0].rows(); }
};

PromptBatch build_prompts(const PromptVars& table, std::span<const Pair> pairs);

}  // namespace dfsp
