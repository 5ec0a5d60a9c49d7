#include "dfsp/composition_space.hpp"

#include <set>

#include "dfsp/errors.hpp"

namespace dfsp {

const char* to_string(WorldMode w) { return w == WorldMode::open ? "open" : "closed"; }

WorldMode parse_world_mode(const std::string& s) {
    if (s == "closed") return WorldMode::closed;
    if (s == "open") return WorldMode::open;
    throw std::invalid_argument("unknown world mode '" + s + "' (expected closed|open)");
}

namespace {

std::unordered_map<std::string, std::size_t> name_table(const std::vector<std::string>& names,
                                                        const char* kind) {
    if (names.empty()) throw DataError(std::string("empty ") + kind + " list");
    std::unordered_map<std::string, std::size_t> ids;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!ids.emplace(names[i], i).second) {
            throw DataError(std::string("duplicate ") + kind + " name '" + names[i] + "'");
        }
    }
    return ids;
}

std::string describe(const CompositionSpace& s, Pair p) {
    return "(" + s.states()[p.state] + ", " + s.objects()[p.object] + ")";
}

}  // namespace

CompositionSpace CompositionSpace::build(std::vector<std::string> states,
                                         std::vector<std::string> objects,
                                         std::vector<Pair> seen_pairs,
                                         std::vector<Pair> unseen_pairs, WorldMode world) {
    CompositionSpace s;
    s.state_ids_ = name_table(states, "state");
    s.object_ids_ = name_table(objects, "object");
    s.states_ = std::move(states);
    s.objects_ = std::move(objects);
    s.world_ = world;

    const std::size_t n = s.states_.size();
    const std::size_t m = s.objects_.size();
    auto check_bounds = [&](Pair p, const char* list) {
        if (p.state >= n || p.object >= m) {
            throw DataError(std::string(list) + " pair (" + std::to_string(p.state) + ", " +
                            std::to_string(p.object) + ") out of bounds for " +
                            std::to_string(n) + " states x " + std::to_string(m) + " objects");
        }
    };

    for (std::size_t k = 0; k < seen_pairs.size(); ++k) {
        check_bounds(seen_pairs[k], "seen");
        if (!s.seen_pos_.emplace(s.flat(seen_pairs[k]), k).second) {
            throw DataError("duplicate seen pair " + describe(s, seen_pairs[k]));
        }
    }
    s.seen_ = std::move(seen_pairs);

    std::set<std::size_t> unseen_ids;
    for (Pair p : unseen_pairs) {
        check_bounds(p, "unseen");
        if (s.seen_pos_.count(s.flat(p))) {
            throw DataError("pair " + describe(s, p) + " is both seen and unseen");
        }
        if (!unseen_ids.insert(s.flat(p)).second) {
            throw DataError("duplicate unseen pair " + describe(s, p));
        }
    }
    s.unseen_ = std::move(unseen_pairs);

    std::vector<bool> state_covered(n, false), object_covered(m, false);
    for (Pair p : s.seen_) {
        state_covered[p.state] = true;
        object_covered[p.object] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!state_covered[i]) throw DataError("state '" + s.states_[i] + "' occurs in no seen pair");
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (!object_covered[i]) {
            throw DataError("object '" + s.objects_[i] + "' occurs in no seen pair");
        }
    }

    if (world == WorldMode::closed) {
        s.test_ = s.seen_;
        s.test_.insert(s.test_.end(), s.unseen_.begin(), s.unseen_.end());
    } else {
        s.test_.reserve(n * m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) s.test_.push_back({i, j});
    }
    for (std::size_t k = 0; k < s.test_.size(); ++k) s.test_pos_.emplace(s.flat(s.test_[k]), k);
    return s;
}

bool CompositionSpace::is_seen(Pair p) const { return seen_position(p) != npos; }

std::size_t CompositionSpace::seen_position(Pair p) const {
    if (p.state >= states_.size() || p.object >= objects_.size()) return npos;
    auto it = seen_pos_.find(flat(p));
    return it == seen_pos_.end() ? npos : it->second;
}

std::size_t CompositionSpace::test_position(Pair p) const {
    if (p.state >= states_.size() || p.object >= objects_.size()) return npos;
    auto it = test_pos_.find(flat(p));
    return it == test_pos_.end() ? npos : it->second;
}

std::size_t CompositionSpace::state_index(const std::string& name) const {
    auto it = state_ids_.find(name);
    if (it == state_ids_.end()) throw DataError("unknown state '" + name + "'");
    return it->second;
}

std::size_t CompositionSpace::object_index(const std::string& name) const {
    auto it = object_ids_.find(name);
    if (it == object_ids_.end()) throw DataError("unknown object '" + name + "'");
    return it->second;
}

CompositionSpace CompositionSpace::with_world(WorldMode world) const {
    return build(states_, objects_, seen_, unseen_, world);
}

PairIndex pair_index(const std::vector<Pair>& pairs) {
    PairIndex idx;
    idx.att_idx.reserve(pairs.size());
    idx.obj_idx.reserve(pairs.size());
    for (Pair p : pairs) {
        idx.att_idx.push_back(p.state);
        idx.obj_idx.push_back(p.object);
    }
    return idx;
}

PairIndex pair_index(const CompositionSpace& space) { return pair_index(space.seen_pairs()); }

}  // namespace dfsp
