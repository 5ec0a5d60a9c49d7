#include <doctest.h>

#include <cmath>

#include "dfsp/encoder.hpp"
#include "dfsp/errors.hpp"
#include "dfsp/prompt.hpp"
#include "support.hpp"

using namespace dfsp;

TEST_CASE("prompt table shapes and deterministic init") {
    PromptTable t = init_table(4, 6, 16, 3, 7);
    CHECK(t.prefix.value.rows() == 3);
    CHECK(t.states.value.rows() == 4);
    CHECK(t.objects.value.rows() == 6);
    CHECK(t.dim() == 16);
    CHECK(t.num_vectors() == 13);
    CHECK(t.prefix.name == "prompt.prefix");
    CHECK(init_table(4, 6, 16, 3, 7).states.value == t.states.value);
    CHECK_FALSE(init_table(4, 6, 16, 3, 8).states.value == t.states.value);

    // Entries are N(0, 1/d): the sample variance of 10 x 16 draws is near 1/16.
    PromptTable big = init_table(40, 40, 16, 3, 1);
    double ss = 0;
    for (double v : big.states.value.data()) ss += v * v;
    const double var = ss / static_cast<double>(big.states.value.size());
    CHECK(var == doctest::Approx(1.0 / 16).epsilon(0.15));
}

TEST_CASE("prompts are prefix tokens followed by the state and object rows") {
    PromptTable t = init_table(3, 2, 4, 2, 0);
    Tape tape;
    PromptVars v = bind(tape, t);
    const Pair pairs[] = {{2, 1}, {0, 0}};
    PromptBatch b = build_prompts(v, pairs);
    REQUIRE(b.length() == 4);
    CHECK(b.num_prompts() == 2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(b.positions[0].value()(r, c) == t.prefix.value(0, c));
            CHECK(b.positions[1].value()(r, c) == t.prefix.value(1, c));
        }
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(b.positions[2].value()(0, c) == t.states.value(2, c));
        CHECK(b.positions[3].value()(0, c) == t.objects.value(1, c));
        CHECK(b.positions[2].value()(1, c) == t.states.value(0, c));
    }
    const Pair bad[] = {{3, 0}};
    CHECK_THROWS_AS(build_prompts(v, bad), ShapeError);
}

TEST_CASE("text encoder output is mean-pool, projection, normalization") {
    PromptTable t = init_table(2, 2, 5, 3, 1);
    TextEncoder enc(5, 4, 2);
    Tape tape;
    const Pair pairs[] = {{1, 0}};
    Var f = enc.encode(tape, build_prompts(bind(tape, t), pairs));
    Matrix pooled(1, 5);
    for (std::size_t c = 0; c < 5; ++c) {
        pooled(0, c) = (t.prefix.value(0, c) + t.prefix.value(1, c) + t.prefix.value(2, c) +
                        t.states.value(1, c) + t.objects.value(0, c)) / 5.0;
    }
    Matrix proj = matmul(pooled, enc.weight().value);
    const double n = norm(proj.row(0));
    for (std::size_t c = 0; c < 4; ++c) CHECK(f.value()(0, c) == doctest::Approx(proj(0, c) / n).epsilon(1e-12));
}

TEST_CASE("gradients flow through the frozen text encoder to the prompts only") {
    PromptTable t = init_table(2, 2, 4, 2, 3);
    TextEncoder enc(4, 4, 4);
    const Matrix before = enc.weight().value;
    std::vector<Parameter*> ps = t.parameters();
    const Pair pairs[] = {{0, 1}, {1, 0}, {1, 1}};
    auto loss = [&](Tape& tape) {
        Var f = enc.encode(tape, build_prompts(bind(tape, t), pairs));
        return sum(mul(f, tape.constant(Matrix{{1, 2, 3, 4}, {-1, 0, 2, 1}, {0.5, 0.5, -2, 1}})));
    };
    const GradCheckReport r = grad_check(loss, ps);
    CHECK(r.passed);
    CHECK(enc.weight().value == before);
    CHECK_FALSE(enc.weight().trainable);
}

TEST_CASE("image encoder yields unit tokens and a unit global feature") {
    Rng rng = make_rng(1, 1);
    ImageEncoder enc(6, 5, 4, 9);
    const Matrix raw = gaussian_matrix(3, 6, 1.0, rng);
    EncodedImages e = enc.encode(raw);
    REQUIRE(e.size() == 3);
    REQUIRE(e.tokens.size() == 3);
    for (std::size_t b = 0; b < 3; ++b) {
        CHECK(norm(e.global.row(b)) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(e.tokens[b].rows() == 4);
        Matrix mean(1, 5);
        for (std::size_t l = 0; l < 4; ++l) {
            CHECK(norm(e.tokens[b].row(l)) == doctest::Approx(1.0).epsilon(1e-12));
            for (std::size_t c = 0; c < 5; ++c) mean(0, c) += e.tokens[b](l, c) / 4.0;
        }
        const double n = norm(mean.row(0));
        for (std::size_t c = 0; c < 5; ++c) CHECK(e.global(b, c) == doctest::Approx(mean(0, c) / n).epsilon(1e-12));
    }
    for (const Parameter& h : enc.heads()) CHECK_FALSE(h.trainable);
    const std::size_t pick[] = {2, 0};
    EncodedImages sub = e.subset(pick);
    CHECK(sub.tokens[0] == e.tokens[2]);
    CHECK_THROWS_AS(enc.encode(Matrix(1, 5)), ShapeError);
}

TEST_CASE("a single image token equals the global feature") {
    Rng rng = make_rng(2, 1);
    ImageEncoder enc(6, 5, 1, 3);
    EncodedImages e = enc.encode(gaussian_matrix(2, 6, 1.0, rng));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 5; ++c) CHECK(e.tokens[b](0, c) == doctest::Approx(e.global(b, c)).epsilon(1e-15));
}
