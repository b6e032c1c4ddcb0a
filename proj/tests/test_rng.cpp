// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rnnlab/rng.hpp"

using namespace rnnlab;

TEST_CASE("identical seeds give identical streams") {
    Rng a(123456789), b(123456789);
    for (int i = 0; i < 1000000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("different seeds give different streams") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
}

TEST_CASE("split produces an independent child and advances the parent") {
    Rng parent(42);
    Rng twin(42);
    Rng child = parent.split();
    // parent consumed one draw
    twin.next_u64();
    CHECK(parent.next_u64() == twin.next_u64());
    // child stream differs from the parent's continuation
    Rng parent2(42);
    Rng child2 = parent2.split();
    CHECK(child.next_u64() == child2.next_u64());
    CHECK(child2.next_u64() != parent2.next_u64());
}

TEST_CASE("uniform lies in [0, 1)") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("below is within range and deterministic") {
    Rng a(5), b(5);
    for (int i = 0; i < 10000; ++i) {
        auto x = a.below(17);
        CHECK(x < 17);
        CHECK(x == b.below(17));
    }
}

TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7}, v2 = v1, sorted = v1;
    Rng a(9), b(9);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
    std::sort(v1.begin(), v1.end());
    CHECK(v1 == sorted);
}
