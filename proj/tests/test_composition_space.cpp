#include <doctest.h>

#include <algorithm>
#include <set>

#include "dfsp/composition_space.hpp"
#include "dfsp/errors.hpp"
#include "support.hpp"

using namespace dfsp;

namespace {

std::vector<std::string> names(const char* prefix, std::size_t k) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

}  // namespace

TEST_CASE("closed world test pairs are seen then unseen") {
    auto sp = CompositionSpace::build(names("s", 2), names("o", 2), {{0, 0}, {1, 1}}, {{0, 1}},
                                      WorldMode::closed);
    CHECK(sp.test_pairs() == std::vector<Pair>{{0, 0}, {1, 1}, {0, 1}});
    CHECK(sp.is_seen({1, 1}));
    CHECK_FALSE(sp.is_seen({0, 1}));
    CHECK(sp.seen_position({1, 1}) == 1);
    CHECK(sp.seen_position({0, 1}) == CompositionSpace::npos);
    CHECK(sp.test_position({0, 1}) == 2);
    CHECK(sp.test_position({1, 0}) == CompositionSpace::npos);
}

TEST_CASE("open world test pairs are the full product in state-major order") {
    auto sp = CompositionSpace::build(names("s", 2), names("o", 3), {{0, 0}, {1, 1}, {0, 2}}, {},
                                      WorldMode::open);
    REQUIRE(sp.test_pairs().size() == 6);
    for (std::size_t k = 0; k < 6; ++k) CHECK(sp.test_pairs()[k] == Pair{k / 3, k % 3});
    CHECK(sp.with_world(WorldMode::closed).test_pairs().size() == 3);
}

TEST_CASE("benchmark-sized spaces have the expected column counts") {
    SUBCASE("UT-Zappos: 16 states, 12 objects, 83 seen, 18 unseen test pairs") {
        auto closed = testing::sized_space(16, 12, 83, 18);
        CHECK(closed.seen_pairs().size() == 83);
        CHECK(closed.test_pairs().size() == 101);
        CHECK(closed.with_world(WorldMode::open).test_pairs().size() == 192);
    }
    SUBCASE("MIT-States: 115 states, 245 objects, 1262 seen, 400 unseen test pairs") {
        auto sp = testing::sized_space(115, 245, 1262, 400);
        CHECK(sp.test_pairs().size() == 1662);
        CHECK(sp.with_world(WorldMode::open).test_pairs().size() == 28175);
    }
}

TEST_CASE("invalid spaces are rejected") {
    auto s = names("s", 2), o = names("o", 2);
    CHECK_THROWS_AS(CompositionSpace::build({}, o, {{0, 0}}, {}, WorldMode::closed), DataError);
    CHECK_THROWS_AS(CompositionSpace::build({"a", "a"}, o, {{0, 0}, {1, 1}}, {}, WorldMode::closed), DataError);
    CHECK_THROWS_AS(CompositionSpace::build(s, o, {{0, 0}, {2, 1}}, {}, WorldMode::closed), DataError);
    CHECK_THROWS_AS(CompositionSpace::build(s, o, {{0, 0}, {1, 1}, {0, 0}}, {}, WorldMode::closed), DataError);
    CHECK_THROWS_AS(CompositionSpace::build(s, o, {{0, 0}, {1, 1}}, {{0, 0}}, WorldMode::closed), DataError);
    CHECK_THROWS_AS(CompositionSpace::build(s, o, {{0, 0}, {1, 1}}, {{0, 1}, {0, 1}}, WorldMode::closed),
                    DataError);
    // state 1 never appears in a seen pair
    CHECK_THROWS_AS(CompositionSpace::build(s, o, {{0, 0}, {0, 1}}, {{1, 1}}, WorldMode::closed), DataError);
    CHECK_THROWS_AS(parse_world_mode("half"), std::invalid_argument);
}

TEST_CASE("name lookup and pair index") {
    auto sp = CompositionSpace::build({"wet", "dry"}, {"dog", "cat"}, {{0, 0}, {1, 1}, {1, 0}}, {},
                                      WorldMode::closed);
    CHECK(sp.state_index("dry") == 1);
    CHECK(sp.object_index("cat") == 1);
    CHECK_THROWS_AS(sp.state_index("old"), DataError);
    const PairIndex idx = pair_index(sp);
    CHECK(idx.att_idx == std::vector<std::size_t>{0, 1, 1});
    CHECK(idx.obj_idx == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("random spaces keep seen and unseen disjoint and cover every primitive") {
    Rng rng = make_rng(5, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 8, m = 1 + rng() % 8;
        const std::size_t min_seen = std::max(n, m);
        const std::size_t seen = min_seen + rng() % (n * m - min_seen + 1);
        const std::size_t unseen = rng() % (n * m - seen + 1);
        auto sp = testing::sized_space(n, m, seen, unseen);
        std::set<Pair> s(sp.seen_pairs().begin(), sp.seen_pairs().end());
        for (Pair p : sp.unseen_pairs()) CHECK(s.count(p) == 0);
        std::set<std::size_t> st, ob;
        for (Pair p : sp.seen_pairs()) {
            st.insert(p.state);
            ob.insert(p.object);
        }
        CHECK(st.size() == n);
        CHECK(ob.size() == m);
        CHECK(sp.test_pairs().size() == sp.seen_pairs().size() + unseen);
    }
}
