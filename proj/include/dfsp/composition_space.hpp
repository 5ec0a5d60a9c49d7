#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace dfsp {

struct Pair {
    std::size_t state = 0;
    std::size_t object = 0;

    friend bool operator==(const Pair&, const Pair&) = default;
    friend auto operator<=>(const Pair&, const Pair&) = default;
};

enum class WorldMode { closed, open };

const char* to_string(WorldMode w);
WorldMode parse_world_mode(const std::string& s);

/// Per-seen-pair primitive indices, the shape decompose/recompose consume.
struct PairIndex {
    std::vector<std::size_t> att_idx;
    std::vector<std::size_t> obj_idx;
};

/// States, objects and the seen/unseen/test composition sets.
///
/// Immutable once built. Every state and object must occur in at least one
/// seen pair: decomposition averages pair features per primitive and an
/// uncovered primitive has nothing to average. Test pairs are seen followed
/// by unseen in closed world, and the full state-major product in open world.
class CompositionSpace {
public:
    static CompositionSpace build(std::vector<std::string> states,
                                  std::vector<std::string> objects,
                                  std::vector<Pair> seen_pairs,
                                  std::vector<Pair> unseen_pairs,
                                  WorldMode world);

    std::size_t num_states() const { return states_.size(); }
    std::size_t num_objects() const { return objects_.size(); }
    const std::vector<std::string>& states() const { return states_; }
    const std::vector<std::string>& objects() const { return objects_; }
    const std::vector<Pair>& seen_pairs() const { return seen_; }
    const std::vector<Pair>& unseen_pairs() const { return unseen_; }
    const std::vector<Pair>& test_pairs() const { return test_; }
    WorldMode world() const { return world_; }

    bool is_seen(Pair p) const;
    // Position of p in seen_pairs(), or npos.
    std::size_t seen_position(Pair p) const;
    // Position of p in test_pairs(), or npos.
    std::size_t test_position(Pair p) const;

    std::size_t state_index(const std::string& name) const;
    std::size_t object_index(const std::string& name) const;

    // Same primitives and seen/unseen sets, other world mode.
    CompositionSpace with_world(WorldMode world) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    CompositionSpace() = default;
    std::size_t flat(Pair p) const { return p.state * objects_.size() + p.object; }

    std::vector<std::string> states_;
    std::vector<std::string> objects_;
    std::vector<Pair> seen_;
    std::vector<Pair> unseen_;
    std::vector<Pair> test_;
    WorldMode world_ = WorldMode::closed;
    // flat pair id -> position
    std::unordered_map<std::size_t, std::size_t> seen_pos_;
    std::unordered_map<std::size_t, std::size_t> test_pos_;
    std::unordered_map<std::string, std::size_t> state_ids_;
    std::unordered_map<std::string, std::size_t> object_ids_;
};

PairIndex pair_index(const CompositionSpace& space);
PairIndex pair_index(const std::vector<Pair>& pairs);

}  // namespace dfsp
